//! Spectral evolution of ∂²_t g + 𝒜g = 0 with g(0) = f₀, ∂_t g(0) = 0, the induced force
//! and potential, damping metrics and the free-flow comparison.
//!
//! With 𝒜 = QΛQᵀ and a = Qᵀf₀: g(t) = Q cos(√Λ t)a and h(t) = −Q Λ^{-1/2} sin(√Λ t)a.
//! The force is F = −m(h) and ∂_tF = m(g), with m the velocity moment on the x-grid.

use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::operators::{AntonovOperator, EigenClass, EigenReport, ModeGrid};
use crate::scattering::AcProjector;

/// Default number of x-points on [−R₀, R₀].
pub const DEFAULT_NX: usize = 401;

/// Uniform x-grid on [−R₀, R₀] with trapezoid weights and the moment matrix.
#[derive(Debug, Clone)]
pub struct XGrid {
    pub x: Vec<f64>,
    pub weights: Vec<f64>,
    /// c ↦ 4π∫v g dv at the grid points.
    pub moment: Mat<f64>,
}

impl XGrid {
    pub fn new(grid: &ModeGrid, nx: usize) -> Result<Self> {
        if nx < 2 {
            return Err(Error::domain("x-grid needs at least two points"));
        }
        let r0 = grid.state().r0;
        let dx = 2.0 * r0 / (nx - 1) as f64;
        let x: Vec<f64> = (0..nx).map(|i| -r0 + i as f64 * dx).collect();
        let weights = (0..nx)
            .map(|i| if i == 0 || i == nx - 1 { 0.5 * dx } else { dx })
            .collect();
        let moment = grid.moment_matrix(&x);
        Ok(Self { x, weights, moment })
    }

    pub fn l2_norm(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(v, w)| w * v * v).sum::<f64>().sqrt()
    }

    /// F = −m(h).
    pub fn force(&self, h: &[f64]) -> Vec<f64> {
        (0..self.x.len())
            .map(|i| -(0..h.len()).map(|k| self.moment[(i, k)] * h[k]).sum::<f64>())
            .collect()
    }
}

/// U(x) = −∫_{−R₀}^x F by the trapezoid rule on the grid.
pub fn potential(xg: &XGrid, force: &[f64]) -> Vec<f64> {
    let mut u = vec![0.0; force.len()];
    for i in 1..force.len() {
        let dx = xg.x[i] - xg.x[i - 1];
        u[i] = u[i - 1] - 0.5 * dx * (force[i] + force[i - 1]);
    }
    u
}

/// Selector of the initial-data library.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    /// exp(−((E − E_c)/w)²) in mode l, with E_c and w relative to the energy grid.
    Bump { l: usize, center: f64, width: f64 },
    /// Seeded Gaussian vector.
    Random { seed: u64 },
    /// Eigenvector of 𝒜 with the given index in ascending order.
    Eigenvector { index: usize },
    /// Eigenvector of 𝒜 closest to an embedded candidate γ.
    QuasiMode { gamma: f64 },
}

impl Default for InitialData {
    fn default() -> Self {
        Self::Bump {
            l: 1,
            center: 0.5,
            width: 0.15,
        }
    }
}

/// Builds f₀ in orthonormal coordinates, normalized to unit length.
pub fn initial_data(op: &AntonovOperator, eig: &EigenReport, sel: InitialData) -> Result<Vec<f64>> {
    let g = &op.grid;
    let n = op.dim();
    let mut f = match sel {
        InitialData::Bump { l, center, width } => {
            if l == 0 || l > g.lmax || !(width > 0.0) {
                return Err(Error::domain("bump needs 1 ≤ l ≤ lmax and positive width"));
            }
            let mut c = vec![0.0; n];
            for j in 0..g.n_energy {
                let s = (g.energies[j] - g.e_lo) / (g.e_hi - g.e_lo);
                let v = (-((s - center) / width).powi(2)).exp();
                c[g.index(l, j)] = v * g.mass_weight(j).sqrt();
            }
            c
        }
        InitialData::Random { seed } => {
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
        }
        InitialData::Eigenvector { index } => {
            if index >= n {
                return Err(Error::domain(format!("eigenvector index {index} ≥ {n}")));
            }
            (0..n).map(|i| eig.vectors[(i, index)]).collect()
        }
        InitialData::QuasiMode { gamma } => {
            let k = (0..n)
                .min_by(|&a, &b| {
                    (eig.values[a] - gamma)
                        .abs()
                        .total_cmp(&(eig.values[b] - gamma).abs())
                })
                .ok_or_else(|| Error::domain("empty operator"))?;
            (0..n).map(|i| eig.vectors[(i, k)]).collect()
        }
    };
    let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::domain("initial data vanishes"));
    }
    f.iter_mut().for_each(|v| *v /= norm);
    Ok(f)
}

/// Index of the lowest eigenvalue classified discrete, else of the lowest eigenvalue.
pub fn lowest_discrete(eig: &EigenReport) -> usize {
    eig.classes
        .iter()
        .position(|c| *c == EigenClass::Discrete)
        .unwrap_or(0)
}

/// Recurrence guard H_max = 2π / median nearest-neighbor gap of √λ over band eigenvalues.
pub fn recurrence_guard(op: &AntonovOperator, eig: &EigenReport) -> f64 {
    let modes = &op.grid.bands.modes[..op.grid.lmax];
    let mut w: Vec<f64> = eig
        .values
        .iter()
        .filter(|&&v| modes.iter().any(|m| m.beta_min <= v && v <= m.beta_max))
        .map(|v| v.sqrt())
        .collect();
    w.sort_by(f64::total_cmp);
    w.dedup();
    if w.len() < 2 {
        return f64::INFINITY;
    }
    let mut gaps: Vec<f64> = (0..w.len())
        .map(|i| {
            let l = if i > 0 { w[i] - w[i - 1] } else { f64::INFINITY };
            let r = if i + 1 < w.len() { w[i + 1] - w[i] } else { f64::INFINITY };
            l.min(r)
        })
        .collect();
    gaps.sort_by(f64::total_cmp);
    2.0 * PI / gaps[gaps.len() / 2]
}

/// Time series and optional snapshots of one evolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    pub force_norm: Vec<f64>,
    pub force_dt_norm: Vec<f64>,
    pub potential_sup: Vec<f64>,
    /// ‖∂_t g‖² + ⟨𝒜g, g⟩.
    pub energy: Vec<f64>,
    /// max |F(t, ±R₀)| and |U(t, R₀)| over t.
    pub boundary_defect: f64,
    pub x: Vec<f64>,
    /// F(t, x) per time when requested.
    pub force_profiles: Option<Vec<Vec<f64>>>,
    /// U(t, x) per time when requested.
    pub potential_profiles: Option<Vec<Vec<f64>>>,
    /// g(t) per time when requested.
    pub snapshots: Option<Vec<Vec<f64>>>,
}

/// Spectral propagator of the matrix model.
#[derive(Debug, Clone)]
pub struct Propagator<'a> {
    pub eig: &'a EigenReport,
    pub omega: Vec<f64>,
}

impl<'a> Propagator<'a> {
    pub fn new(eig: &'a EigenReport) -> Result<Self> {
        if eig.values.iter().any(|&v| v <= 0.0) {
            return Err(Error::domain("propagator needs a positive operator"));
        }
        let omega = eig.values.iter().map(|v| v.sqrt()).collect();
        Ok(Self { eig, omega })
    }

    pub fn coefficients(&self, f: &[f64]) -> Vec<f64> {
        let q = &self.eig.vectors;
        (0..q.ncols())
            .map(|k| (0..f.len()).map(|i| q[(i, k)] * f[i]).sum())
            .collect()
    }

    fn synth(&self, c: &[f64]) -> Vec<f64> {
        let q = &self.eig.vectors;
        (0..q.nrows())
            .map(|i| (0..c.len()).map(|k| q[(i, k)] * c[k]).sum())
            .collect()
    }

    /// cos(√𝒜 t)f in eigen-coefficients a.
    pub fn cos_t(&self, a: &[f64], t: f64) -> Vec<f64> {
        self.synth(&a.iter().zip(&self.omega).map(|(a, w)| a * (w * t).cos()).collect::<Vec<_>>())
    }

    /// 𝒜^{-1/2} sin(√𝒜 t)f in eigen-coefficients a.
    pub fn sinc_t(&self, a: &[f64], t: f64) -> Vec<f64> {
        self.synth(&a.iter().zip(&self.omega).map(|(a, w)| a * (w * t).sin() / w).collect::<Vec<_>>())
    }

    /// √𝒜 sin(√𝒜 t)f in eigen-coefficients a.
    pub fn sin_scaled_t(&self, a: &[f64], t: f64) -> Vec<f64> {
        self.synth(&a.iter().zip(&self.omega).map(|(a, w)| a * (w * t).sin() * w).collect::<Vec<_>>())
    }
}

/// Evolves f₀ over the time grid.
pub fn evolve(
    op: &AntonovOperator,
    eig: &EigenReport,
    xg: &XGrid,
    f0: &[f64],
    times: &[f64],
    keep_profiles: bool,
) -> Result<EvolutionResult> {
    let prop = Propagator::new(eig)?;
    let a = prop.coefficients(f0);
    let mq = linalg::mm(xg.moment.as_ref(), eig.vectors.as_ref());
    let nx = xg.x.len();
    let apply_mq = |c: &[f64]| -> Vec<f64> {
        (0..nx).map(|i| (0..c.len()).map(|k| mq[(i, k)] * c[k]).sum()).collect()
    };
    let frames: Vec<_> = times
        .par_iter()
        .map(|&t| {
            let sinc: Vec<f64> = a.iter().zip(&prop.omega).map(|(a, w)| a * (w * t).sin() / w).collect();
            let cos: Vec<f64> = a.iter().zip(&prop.omega).map(|(a, w)| a * (w * t).cos()).collect();
            let force = apply_mq(&sinc);
            let force_dt = apply_mq(&cos);
            let u = potential(xg, &force);
            let g = prop.cos_t(&a, t);
            let gt = prop.sin_scaled_t(&a, t);
            let ag: Vec<f64> = (0..g.len())
                .map(|i| (0..g.len()).map(|k| op.a[(i, k)] * g[k]).sum())
                .collect();
            let energy = gt.iter().map(|v| v * v).sum::<f64>()
                + ag.iter().zip(&g).map(|(x, y)| x * y).sum::<f64>();
            let bd = force[0]
                .abs()
                .max(force[nx - 1].abs())
                .max(u[nx - 1].abs());
            (force, force_dt, u, g, energy, bd)
        })
        .collect();
    let mut res = EvolutionResult {
        times: times.to_vec(),
        force_norm: Vec::with_capacity(times.len()),
        force_dt_norm: Vec::with_capacity(times.len()),
        potential_sup: Vec::with_capacity(times.len()),
        energy: Vec::with_capacity(times.len()),
        boundary_defect: 0.0,
        x: xg.x.clone(),
        force_profiles: keep_profiles.then(Vec::new),
        potential_profiles: keep_profiles.then(Vec::new),
        snapshots: keep_profiles.then(Vec::new),
    };
    for (force, force_dt, u, g, energy, bd) in frames {
        res.force_norm.push(xg.l2_norm(&force));
        res.force_dt_norm.push(xg.l2_norm(&force_dt));
        res.potential_sup.push(u.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        res.energy.push(energy);
        res.boundary_defect = res.boundary_defect.max(bd);
        if keep_profiles {
            res.force_profiles.as_mut().unwrap().push(force);
            res.potential_profiles.as_mut().unwrap().push(u);
            res.snapshots.as_mut().unwrap().push(g);
        }
    }
    Ok(res)
}

/// Uniform time grid with n points on [0, horizon].
pub fn time_grid(horizon: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| horizon * i as f64 / (n - 1).max(1) as f64).collect()
}

/// Running averages (1/T)∫₀ᵀ s dt by the trapezoid rule at every grid time (first entry s(0)).
pub fn cesaro(times: &[f64], s: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(s.len());
    for i in 0..s.len() {
        if i > 0 {
            acc += 0.5 * (times[i] - times[i - 1]) * (s[i] + s[i - 1]);
        }
        out.push(if i == 0 { s[0] } else { acc / (times[i] - times[0]) });
    }
    out
}

/// Damping metrics of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DampingReport {
    pub horizon: f64,
    pub recurrence_guard: f64,
    /// sup over [0.8H, H] of ‖F‖ divided by the first peak of ‖F‖.
    pub late_window_ratio: f64,
    pub first_peak: f64,
    /// Cesàro averages of ‖∂_tF‖ at the checkpoints kH/n_checkpoints.
    pub cesaro_checkpoints: Vec<(f64, f64)>,
    pub cesaro_monotone: bool,
    /// Cesàro averages of sup|U| at the same checkpoints.
    pub potential_cesaro: Vec<(f64, f64)>,
    /// max over t of sup|U| − √(2R₀)‖F‖ (nonpositive when the bound holds).
    pub potential_bound_excess: f64,
    pub warning: Option<String>,
}

/// Checkpoints used for the Cesàro monotonicity test.
pub const CESARO_CHECKPOINTS: usize = 20;

pub fn damping_report(res: &EvolutionResult, r0: f64, guard: f64) -> DampingReport {
    let t = &res.times;
    let h = *t.last().unwrap_or(&0.0);
    let f = &res.force_norm;
    let first_peak = (1..f.len().saturating_sub(1))
        .find(|&i| f[i] >= f[i - 1] && f[i] > f[i + 1])
        .map(|i| f[i])
        .unwrap_or_else(|| f.iter().cloned().fold(0.0, f64::max));
    let late = t
        .iter()
        .zip(f)
        .filter(|(tt, _)| **tt >= 0.8 * h)
        .map(|(_, v)| *v)
        .fold(0.0, f64::max);
    let ratio = if first_peak > 0.0 { late / first_peak } else { 0.0 };
    let pick = |c: &[f64]| -> Vec<(f64, f64)> {
        (1..=CESARO_CHECKPOINTS)
            .map(|k| {
                let target = h * k as f64 / CESARO_CHECKPOINTS as f64;
                let i = t.iter().position(|&x| x >= target - 1e-12 * h).unwrap_or(t.len() - 1);
                (t[i], c[i])
            })
            .collect()
    };
    let cp = pick(&cesaro(t, &res.force_dt_norm));
    let monotone = cp.windows(2).all(|w| w[1].1 <= w[0].1);
    let pc = pick(&cesaro(t, &res.potential_sup));
    let bound = (2.0 * r0).sqrt();
    let excess = res
        .potential_sup
        .iter()
        .zip(f)
        .map(|(u, fn_)| u - bound * fn_)
        .fold(f64::NEG_INFINITY, f64::max);
    let warning = (h > 0.5 * guard).then(|| {
        format!("horizon {h} exceeds half the recurrence guard {guard}")
    });
    DampingReport {
        horizon: h,
        recurrence_guard: guard,
        late_window_ratio: ratio,
        first_peak,
        cesaro_checkpoints: cp,
        cesaro_monotone: monotone,
        potential_cesaro: pc,
        potential_bound_excess: excess,
        warning,
    }
}

/// Frequency of the largest FFT magnitude of a uniformly sampled signal (mean removed) and the bin width.
pub fn fft_peak(signal: &[f64], dt: f64) -> (f64, f64) {
    let n = signal.len();
    let mean = signal.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<C64> = signal.iter().map(|v| C64::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let k = (1..n / 2 + 1)
        .max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm()))
        .unwrap_or(0);
    let bin = 1.0 / (n as f64 * dt);
    (k as f64 * bin, bin)
}

/// FFT peak of F(t, x*) at the x-point of largest |F|, from kept force profiles.
pub fn dominant_frequency(res: &EvolutionResult) -> Option<(f64, f64)> {
    let profiles = res.force_profiles.as_ref()?;
    if res.times.len() < 2 || res.x.is_empty() {
        return None;
    }
    let amp = |i: usize| profiles.iter().map(|p| p[i].abs()).fold(0.0, f64::max);
    let ix = (0..res.x.len()).max_by(|&a, &b| amp(a).total_cmp(&amp(b)))?;
    let signal: Vec<f64> = profiles.iter().map(|p| p[ix]).collect();
    Some(fft_peak(&signal, res.times[1] - res.times[0]))
}

/// Distances ‖cos(√𝒜 t)f₀ − Re(e^{−i√𝒜₀ t}W₊*f₀)‖ at the given times.
pub fn free_flow_comparison(
    op: &AntonovOperator,
    eig: &EigenReport,
    wave_plus: &Mat<C64>,
    f0: &[f64],
    times: &[f64],
) -> Result<Vec<f64>> {
    let prop = Propagator::new(eig)?;
    let a = prop.coefficients(f0);
    let n = op.dim();
    let b: Vec<C64> = (0..n)
        .map(|k| (0..n).map(|i| wave_plus[(i, k)].conj() * f0[i]).sum())
        .collect();
    let omega0: Vec<f64> = op.a0.iter().map(|v| v.sqrt()).collect();
    Ok(times
        .par_iter()
        .map(|&t| {
            let g = prop.cos_t(&a, t);
            g.iter()
                .enumerate()
                .map(|(i, v)| (v - (C64::from_polar(1.0, -omega0[i] * t) * b[i]).re).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

/// Initial data projected onto the a.c. surrogate and renormalized.
pub fn project_ac(ac: &AcProjector, f: &[f64]) -> Result<Vec<f64>> {
    let mut p = ac.apply(f);
    let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::domain("initial data has no a.c. component"));
    }
    p.iter_mut().for_each(|v| *v /= norm);
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::band_structure::BandStructure;
    use crate::operators::GridOptions;
    use crate::steady_state::{solve_steady_state, AnsatzProfile, SolveOptions};
    use std::sync::{Arc, LazyLock};

    struct Fixture {
        op: AntonovOperator,
        eig: EigenReport,
        xg: XGrid,
    }

    static FIX: LazyLock<Fixture> = LazyLock::new(|| {
        let st = solve_steady_state(AnsatzProfile::king(), 2.0, SolveOptions::default()).unwrap();
        let bands = Arc::new(BandStructure::build(Arc::new(st), 3).unwrap());
        let opts = GridOptions {
            lmax: 3,
            n_energy: 32,
            ..Default::default()
        };
        let grid = Arc::new(ModeGrid::new(bands, opts).unwrap());
        let op = AntonovOperator::new(grid.clone(), 1.0).unwrap();
        let eig = op.eigen().unwrap();
        let xg = XGrid::new(&grid, DEFAULT_NX).unwrap();
        Fixture { op, eig, xg }
    });

    #[test]
    fn eigenvector_evolves_as_cosine() {
        let f = &*FIX;
        let k = 4;
        let f0 = initial_data(&f.op, &f.eig, InitialData::Eigenvector { index: k }).unwrap();
        let prop = Propagator::new(&f.eig).unwrap();
        let a = prop.coefficients(&f0);
        let t = 0.731;
        let g = prop.cos_t(&a, t);
        let c = (f.eig.values[k].sqrt() * t).cos();
        for (x, y) in g.iter().zip(&f0) {
            assert!((x - c * y).abs() < 1e-12);
        }
    }

    #[test]
    fn initial_time_values() {
        let f = &*FIX;
        let f0 = initial_data(&f.op, &f.eig, InitialData::default()).unwrap();
        let prop = Propagator::new(&f.eig).unwrap();
        let a = prop.coefficients(&f0);
        let g = prop.cos_t(&a, 0.0);
        let h = prop.sinc_t(&a, 0.0);
        assert!(g.iter().zip(&f0).all(|(x, y)| (x - y).abs() < 1e-12));
        assert!(h.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn energy_conserved_and_support() {
        let f = &*FIX;
        let f0 = initial_data(&f.op, &f.eig, InitialData::Random { seed: 7 }).unwrap();
        let res = evolve(&f.op, &f.eig, &f.xg, &f0, &[0.0, 17.3], false).unwrap();
        assert!((res.energy[1] - res.energy[0]).abs() <= 1e-10 * res.energy[0]);
        let scale = res.force_norm[1].max(1e-300);
        assert!(res.boundary_defect <= 1e-10 * scale.max(1.0));
    }

    #[test]
    fn propagator_identity() {
        // cos² + (A^{-1/2} sin)·A·(A^{-1/2} sin) = I on random vectors.
        let f = &*FIX;
        let prop = Propagator::new(&f.eig).unwrap();
        let v = initial_data(&f.op, &f.eig, InitialData::Random { seed: 3 }).unwrap();
        let t = 2.9;
        let c1 = prop.cos_t(&prop.coefficients(&v), t);
        let c2 = prop.cos_t(&prop.coefficients(&c1), t);
        let s1 = prop.sinc_t(&prop.coefficients(&v), t);
        let as1: Vec<f64> = (0..v.len())
            .map(|i| (0..v.len()).map(|k| f.op.a[(i, k)] * s1[k]).sum())
            .collect();
        let s2 = prop.sinc_t(&prop.coefficients(&as1), t);
        let d: f64 = (0..v.len()).map(|i| (c2[i] + s2[i] - v[i]).powi(2)).sum::<f64>().sqrt();
        assert!(d < 1e-10);
    }

    #[test]
    fn time_reversal_symmetry() {
        let f = &*FIX;
        let f0 = initial_data(&f.op, &f.eig, InitialData::default()).unwrap();
        let res = evolve(&f.op, &f.eig, &f.xg, &f0, &[1.3, -1.3], false).unwrap();
        assert!((res.force_norm[0] - res.force_norm[1]).abs() <= 1e-12 * res.force_norm[0]);
    }

    #[test]
    fn force_norm_matches_quadratic_form() {
        // ∫F² dx = 4π⟨ℬh, h⟩.
        let f = &*FIX;
        let f0 = initial_data(&f.op, &f.eig, InitialData::default()).unwrap();
        let prop = Propagator::new(&f.eig).unwrap();
        let h = prop.sinc_t(&prop.coefficients(&f0), 0.4);
        let force = f.xg.force(&h);
        let quad: f64 = (0..h.len())
            .map(|i| (0..h.len()).map(|k| h[i] * f.op.b[(i, k)] * h[k]).sum::<f64>())
            .sum();
        let lhs = f.xg.l2_norm(&force).powi(2);
        assert!((lhs - 4.0 * PI * quad).abs() < 2e-3 * lhs, "{lhs} {}", 4.0 * PI * quad);
    }

    #[test]
    fn potential_examples() {
        let f = &*FIX;
        let n = f.xg.x.len();
        assert!(potential(&f.xg, &vec![0.0; n]).iter().all(|&u| u == 0.0));
        let c = 0.7;
        let u = potential(&f.xg, &vec![c; n]);
        let r0 = f.op.grid.state().r0;
        for (ui, xi) in u.iter().zip(&f.xg.x) {
            assert!((ui + c * (xi + r0)).abs() < 1e-12);
        }
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for _ in 0..20 {
            let force: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let sup = potential(&f.xg, &force).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(sup <= (2.0 * r0).sqrt() * f.xg.l2_norm(&force) * (1.0 + 1e-2));
        }
    }

    #[test]
    fn force_map_singular_values_decay() {
        let f = &*FIX;
        let s = linalg::singular_values(f.xg.moment.as_ref()).unwrap();
        assert!(s.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        assert!(s[30.min(s.len() - 1)] < 1e-1 * s[0]);
    }

    #[test]
    fn fft_peak_of_cosine() {
        let dt = 0.01;
        let nu = 3.0;
        let s: Vec<f64> = (0..1000).map(|i| (2.0 * PI * nu * i as f64 * dt).cos()).collect();
        let (p, bin) = fft_peak(&s, dt);
        assert!((p - nu).abs() <= bin);
    }

    #[test]
    fn cesaro_of_constant_and_decay() {
        let t = time_grid(10.0, 101);
        assert!(cesaro(&t, &vec![2.0; 101]).iter().all(|v| (v - 2.0).abs() < 1e-14));
        let s: Vec<f64> = t.iter().map(|x| (-x).exp()).collect();
        let c = cesaro(&t, &s);
        assert!(c.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn free_flow_vanishes_without_coupling() {
        let f = &*FIX;
        let op = AntonovOperator::new(f.op.grid.clone(), 0.0).unwrap();
        let eig = op.eigen().unwrap();
        let n = op.dim();
        let id = Mat::from_fn(n, n, |i, k| C64::from(if i == k { 1.0 } else { 0.0 }));
        let f0 = initial_data(&op, &eig, InitialData::default()).unwrap();
        let d = free_flow_comparison(&op, &eig, &id, &f0, &[0.0, 3.0, 30.0]).unwrap();
        assert!(d.iter().all(|&x| x < 1e-12));
    }
}
