//! Band structure β_l(E) = (4πl)²/T(E)² of the free operator, its inverse branches,
//! spectral densities and the decomposition of the band union into segments.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action_angle::{period, period_derivative, period_limit};
use crate::error::{Error, Result};
use crate::steady_state::SteadyState;

/// Closed band [β_{l,min}, β_{l,max}] of mode l.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeBand {
    pub l: usize,
    pub beta_min: f64,
    pub beta_max: f64,
}

/// Open interval between consecutive edges with the modes covering it; empty modes mark a gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub modes: Vec<usize>,
}

impl Segment {
    pub fn is_gap(&self) -> bool {
        self.modes.is_empty()
    }
}

/// Splits the union of closed intervals (indexed from 1) into open segments between
/// consecutive distinct endpoints.
pub fn decompose_intervals(bands: &[(f64, f64)]) -> Vec<Segment> {
    let mut edges: Vec<f64> = bands.iter().flat_map(|&(a, b)| [a, b]).collect();
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1e-300));
    edges
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let modes = bands
                .iter()
                .enumerate()
                .filter(|(_, &(a, b))| a < mid && mid < b)
                .map(|(i, _)| i + 1)
                .collect();
            Segment {
                lo: w[0],
                hi: w[1],
                modes,
            }
        })
        .collect()
}

/// Band structure up to a mode cutoff.
#[derive(Debug, Clone)]
pub struct BandStructure {
    pub state: Arc<SteadyState>,
    pub lmax: usize,
    /// T(E₀).
    pub t_max: f64,
    /// lim T(E) as E ↓ E_min.
    pub t_min: f64,
    pub modes: Vec<ModeBand>,
    pub segments: Vec<Segment>,
    table_e: Vec<f64>,
    table_t: Vec<f64>,
}

/// Number of energies in the period table used for initial guesses.
const TABLE_SIZE: usize = 65;

impl BandStructure {
    pub fn build(state: Arc<SteadyState>, lmax: usize) -> Result<Self> {
        if lmax == 0 {
            return Err(Error::domain("lmax must be at least 1"));
        }
        let t_min = period_limit(&state);
        let t_max = period(&state, state.e0)?;
        Self::from_periods(state, lmax, t_min, t_max)
    }

    fn from_periods(state: Arc<SteadyState>, lmax: usize, t_min: f64, t_max: f64) -> Result<Self> {
        let modes: Vec<ModeBand> = (1..=lmax)
            .map(|l| {
                let c = 4.0 * PI * l as f64;
                ModeBand {
                    l,
                    beta_min: (c / t_max).powi(2),
                    beta_max: (c / t_min).powi(2),
                }
            })
            .collect();
        let segments =
            decompose_intervals(&modes.iter().map(|m| (m.beta_min, m.beta_max)).collect::<Vec<_>>());
        let (emin, h) = (state.emin, state.depth);
        let mut table_e = vec![emin];
        table_e.extend((1..TABLE_SIZE).map(|j| {
            let s = j as f64 / (TABLE_SIZE - 1) as f64;
            emin + h * s * s
        }));
        let mut table_t: Vec<f64> = table_e[1..]
            .par_iter()
            .map(|&e| period(&state, e))
            .collect::<Result<_>>()?;
        table_t.insert(0, t_min);
        Ok(Self {
            state,
            lmax,
            t_max,
            t_min,
            modes,
            segments,
            table_e,
            table_t,
        })
    }

    pub fn band(&self, l: usize) -> Result<ModeBand> {
        if l == 0 || l > self.lmax {
            return Err(Error::domain(format!("mode {l} outside 1..={}", self.lmax)));
        }
        Ok(self.modes[l - 1])
    }

    /// β_l(E).
    pub fn beta(&self, l: usize, e: f64) -> Result<f64> {
        let t = if e == self.state.emin {
            self.t_min
        } else {
            period(&self.state, e)?
        };
        Ok((4.0 * PI * l as f64 / t).powi(2))
    }

    /// β_l from a known period value.
    pub fn beta_from_period(l: usize, t: f64) -> f64 {
        (4.0 * PI * l as f64 / t).powi(2)
    }

    /// Inverse branch E_l(β) on [β_{l,min}, β_{l,max}].
    pub fn energy_of_beta(&self, l: usize, beta: f64) -> Result<f64> {
        let band = self.band(l)?;
        if self.t_max - self.t_min <= 1e-12 * self.t_max {
            return Err(Error::domain("band of mode is a single point; no inverse branch"));
        }
        let tol = 1e-14 * band.beta_max;
        if !(beta >= band.beta_min - tol && beta <= band.beta_max + tol) {
            return Err(Error::domain(format!(
                "beta {beta} outside band [{}, {}] of mode {l}",
                band.beta_min, band.beta_max
            )));
        }
        let target = 4.0 * PI * l as f64 / beta.sqrt();
        if target >= self.t_max {
            return Ok(self.state.e0);
        }
        if target <= self.t_min {
            return Ok(self.state.emin);
        }
        let i = self.table_t.partition_point(|&t| t <= target).clamp(1, self.table_t.len() - 1);
        let (mut lo, mut hi) = (self.table_e[i - 1], self.table_e[i]);
        let (t0, t1) = (self.table_t[i - 1], self.table_t[i]);
        let mut e = lo + (hi - lo) * (target - t0) / (t1 - t0);
        for _ in 0..100 {
            let t = period(&self.state, e)?;
            let r = t - target;
            if r == 0.0 {
                return Ok(e);
            }
            if r < 0.0 {
                lo = e;
            } else {
                hi = e;
            }
            let tp = period_derivative(&self.state, e)?;
            let mut next = e - r / tp;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - e).abs() <= 1e-15 * self.state.depth.max(e.abs()) || hi - lo <= 1e-15 * hi.abs().max(1.0) {
                return Ok(next);
            }
            e = next;
        }
        Err(Error::solver(format!("inverse branch E_{l}({beta}) did not converge")))
    }

    /// Spectral density |p_l(β)| = T³/(2(4πl)²T′) at E_l(β).
    pub fn density(&self, l: usize, beta: f64) -> Result<f64> {
        let e = self.energy_of_beta(l, beta)?;
        self.density_at_energy(l, e)
    }

    /// |p_l| expressed through the energy E = E_l(β).
    pub fn density_at_energy(&self, l: usize, e: f64) -> Result<f64> {
        let t = if e == self.state.emin {
            self.t_min
        } else {
            period(&self.state, e)?
        };
        let tp = period_derivative(&self.state, e)?;
        let c = 4.0 * PI * l as f64;
        Ok(t.powi(3) / (2.0 * c * c * tp))
    }

    /// All band edges β_{l,min}, β_{l,max}, sorted with coincident points merged.
    pub fn exceptional_edges(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self
            .modes
            .iter()
            .flat_map(|m| [m.beta_min, m.beta_max])
            .collect();
        e.sort_by(f64::total_cmp);
        e.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1e-300));
        e
    }

    /// Modes whose band contains β in its interior.
    pub fn modes_at(&self, beta: f64) -> Vec<usize> {
        self.modes
            .iter()
            .filter(|m| m.beta_min < beta && beta < m.beta_max)
            .map(|m| m.l)
            .collect()
    }

    /// Whether consecutive bands overlap for every l, i.e. T(E₀) > 2 T(E_min).
    pub fn no_gap_condition(&self) -> bool {
        self.t_max > 2.0 * self.t_min
    }

    /// Distance from β to the nearest band edge.
    pub fn edge_distance(&self, beta: f64) -> f64 {
        self.exceptional_edges()
            .iter()
            .fold(f64::INFINITY, |m, e| m.min((beta - e).abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::steady_state::{solve_steady_state, AnsatzProfile, SolveOptions};
    use proptest::prelude::*;
    use std::sync::LazyLock;

    static POLY: LazyLock<BandStructure> = LazyLock::new(|| {
        let st = solve_steady_state(AnsatzProfile::polytrope(1.0).unwrap(), 1.0, SolveOptions::default())
            .unwrap();
        BandStructure::build(Arc::new(st), 8).unwrap()
    });

    #[test]
    fn harmonic_bands_collapse() {
        let h = Arc::new(SteadyState::harmonic(1.0, -1.0, 2.0).unwrap());
        let b = BandStructure::build(h, 3).unwrap();
        for m in &b.modes {
            let want = 4.0 * (m.l * m.l) as f64;
            assert!((m.beta_min - want).abs() < 1e-10 && (m.beta_max - want).abs() < 1e-10);
        }
        assert!(b.energy_of_beta(1, 4.0).is_err());
        let edges = BandStructure::build(b.state.clone(), 2).unwrap().exceptional_edges();
        assert_eq!(edges.len(), 2);
        assert!((edges[0] - 4.0).abs() < 1e-10 && (edges[1] - 16.0).abs() < 1e-10);
    }

    #[test]
    fn edge_arithmetic() {
        let h = Arc::new(SteadyState::harmonic(1.0, -1.0, 2.0).unwrap());
        let b = BandStructure::from_periods(h, 1, 1.0, 2.0).unwrap();
        assert!((b.modes[0].beta_min - 4.0 * PI * PI).abs() < 1e-12);
        assert!((b.modes[0].beta_max - 16.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn interval_decomposition() {
        let s = decompose_intervals(&[(1.0, 3.0), (2.0, 5.0)]);
        assert_eq!(s.len(), 3);
        assert_eq!((s[0].lo, s[0].hi, s[0].modes.clone()), (1.0, 2.0, vec![1]));
        assert_eq!((s[1].lo, s[1].hi, s[1].modes.clone()), (2.0, 3.0, vec![1, 2]));
        assert_eq!((s[2].lo, s[2].hi, s[2].modes.clone()), (3.0, 5.0, vec![2]));
        let g = decompose_intervals(&[(1.0, 2.0), (3.0, 4.0)]);
        assert!(g[1].is_gap() && g[1].lo == 2.0 && g[1].hi == 3.0);
    }

    #[test]
    fn polytrope_edges_consistent_with_period() {
        let b = &*POLY;
        let t0 = period(&b.state, b.state.e0).unwrap();
        assert!((b.modes[0].beta_min - (4.0 * PI / t0).powi(2)).abs() < 1e-14 * b.modes[0].beta_min);
        let edges = b.exceptional_edges();
        assert_eq!(edges.len(), 16);
        assert!(edges.windows(2).all(|w| w[0] < w[1]));
        let overlap = b.modes[1].beta_min < b.modes[0].beta_max;
        assert_eq!(overlap, b.no_gap_condition());
    }

    #[test]
    fn segments_cover_band_union() {
        let b = &*POLY;
        let lo = b.modes[0].beta_min;
        let hi = b.modes.last().unwrap().beta_max;
        let edges = b.exceptional_edges();
        for i in 0..10_000 {
            let beta = lo + (hi - lo) * (i as f64 + 0.5) / 10_000.0;
            let in_union = b.modes.iter().any(|m| m.beta_min <= beta && beta <= m.beta_max);
            let seg = b.segments.iter().find(|s| s.lo < beta && beta < s.hi);
            let in_segs = seg.is_some_and(|s| !s.is_gap()) || edges.contains(&beta);
            assert_eq!(in_union, in_segs);
            if let Some(s) = seg {
                assert_eq!(s.modes, b.modes_at(beta));
            }
        }
    }

    #[test]
    fn density_matches_finite_difference() {
        let b = &*POLY;
        for l in [1, 3] {
            let m = b.modes[l - 1];
            for f in [0.2, 0.5, 0.8] {
                let beta = m.beta_min + f * (m.beta_max - m.beta_min);
                let d = 1e-5 * (m.beta_max - m.beta_min);
                let fd = (b.energy_of_beta(l, beta + d).unwrap() - b.energy_of_beta(l, beta - d).unwrap())
                    / (2.0 * d);
                let p = b.density(l, beta).unwrap();
                assert!((p - fd.abs()).abs() < 1e-4 * p, "{p} vs {fd}");
                assert!(fd < 0.0);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn inverse_branch_round_trip(l in 1usize..=8, f in 0.0f64..=1.0) {
            let b = &*POLY;
            let m = b.modes[l - 1];
            let beta = m.beta_min + f * (m.beta_max - m.beta_min);
            let e = b.energy_of_beta(l, beta).unwrap();
            let back = b.beta(l, e).unwrap();
            prop_assert!((back - beta).abs() <= 1e-8 * beta);
        }

        #[test]
        fn beta_decreasing_in_energy(f1 in 0.01f64..0.99, gap in 1e-3f64..0.5) {
            let b = &*POLY;
            let st = &b.state;
            let e1 = st.emin + f1 * st.depth;
            let e2 = st.emin + (f1 + gap).min(1.0) * st.depth;
            prop_assert!(b.beta(2, e1).unwrap() > b.beta(2, e2).unwrap());
        }
    }
}
