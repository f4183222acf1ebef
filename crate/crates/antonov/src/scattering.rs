//! Spectral representation of 𝒜₀, generalized Fourier maps 𝐅 and 𝐅±, stationary wave
//! operators W± = 𝐅±*𝐅 and the scattering operator S = W₊*W₋.
//!
//! Each mode l carries its own Gauss–Legendre β-grid on the β-range of the energy grid.
//! The free row at (l, β) reads g_l at E_l(β) by Lagrange interpolation and scales it by
//! √(T|p_l|/|φ′|) and the square root of the β-weight, so that 𝐅ᵀ𝐅 ≈ I.
//! The perturbed row is ℓ(β)ᵀ(I − (ℬR₀)±(β))⁻¹. With D the diagonal part of R̃₀,
//! (I − ℬD)⁻¹ = (𝒜₀ − β)(𝒜 − β)⁻¹, so each row needs only the eigendecomposition of 𝒜
//! and a Woodbury update of rank equal to the number of bands through β.
//!
//! With these conventions W₊ = s-lim_{t→+∞} e^{it𝒜}e^{−it𝒜₀}.

use std::f64::consts::PI;
use std::sync::Arc;

use faer::Mat;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action_angle;
use crate::error::{Error, Result};
use crate::linalg;
use crate::operators::{AntonovOperator, EigenReport, ModeGrid};
use crate::quadrature::GaussLegendre;

/// Scattering discretization controls.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScatterOptions {
    /// β-nodes per mode; 0 selects 2·N_E.
    pub n_beta: usize,
    /// Exclusion radius around exceptional points, in local β-grid spacings.
    pub r_excl_spacings: f64,
    /// Exclusion radius around embedded candidates, relative to the band-union width.
    pub r_embedded_rel: f64,
    /// Rows whose amplification ‖ℓᵀ(I − ℬR₀)⁻¹‖/‖ℓ‖ exceeds this are excluded.
    pub amplification_max: f64,
    /// Width of the test-vector windows around interior exceptional points, relative to the band.
    pub window_rel: f64,
    /// Polynomial degrees per mode in the test set.
    pub n_test_poly: usize,
}

impl Default for ScatterOptions {
    fn default() -> Self {
        Self {
            n_beta: 0,
            r_excl_spacings: 2.0,
            r_embedded_rel: 1e-3,
            amplification_max: 1e8,
            window_rel: 0.02,
            n_test_poly: 3,
        }
    }
}

/// Gauss–Legendre β-grid of one mode with the trace data at each node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BetaGrid {
    pub l: usize,
    pub beta: Vec<f64>,
    pub weight: Vec<f64>,
    /// E_l(β).
    pub energy: Vec<f64>,
    /// √(T|p_l|/|φ′|) at E_l(β).
    pub scale: Vec<f64>,
}

impl BetaGrid {
    pub fn new(grid: &ModeGrid, l: usize, n_beta: usize) -> Result<Self> {
        let (lo, hi) = grid.grid_bands[l - 1];
        if !(hi > lo) {
            return Err(Error::domain(format!("mode {l} has a degenerate band")));
        }
        let (beta, weight) = GaussLegendre::new(n_beta).mapped(lo, hi);
        let st = grid.state();
        let data = beta
            .par_iter()
            .map(|&b| {
                let e = grid.bands.energy_of_beta(l, b)?;
                let t = action_angle::period(st, e)?;
                let tp = action_angle::period_derivative(st, e)?;
                let p = t.powi(3) / (2.0 * (4.0 * PI * l as f64).powi(2) * tp);
                Ok((e, (t * p / st.phi_prime_abs(e)?).sqrt()))
            })
            .collect::<Result<Vec<_>>>()?;
        let (energy, scale) = data.into_iter().unzip();
        Ok(Self {
            l,
            beta,
            weight,
            energy,
            scale,
        })
    }

    /// Local node spacing at the low and high ends.
    fn end_spacings(&self) -> (f64, f64) {
        let n = self.beta.len();
        if n < 2 {
            let w = self.weight.first().copied().unwrap_or(0.0);
            return (w, w);
        }
        (self.beta[1] - self.beta[0], self.beta[n - 1] - self.beta[n - 2])
    }
}

/// Neighborhood of an exceptional point carved out of the a.c. surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExclusionZone {
    pub center: f64,
    pub radius: f64,
    pub embedded: bool,
}

fn in_zones(zones: &[ExclusionZone], beta: f64) -> bool {
    zones.iter().any(|z| (beta - z.center).abs() <= z.radius)
}

/// Exclusion zones: band edges with r_excl local spacings, embedded candidates with a fixed radius.
pub fn exclusion_zones(
    grid: &ModeGrid,
    grids: &[BetaGrid],
    candidates: &[f64],
    opts: &ScatterOptions,
) -> Vec<ExclusionZone> {
    let mut zones = Vec::new();
    for (m, bg) in grid.bands.modes[..grid.lmax].iter().zip(grids) {
        let (s_lo, s_hi) = bg.end_spacings();
        let r_lo = opts.r_excl_spacings * s_lo + (bg.beta[0] - m.beta_min).max(0.0);
        let r_hi = opts.r_excl_spacings * s_hi + (m.beta_max - bg.beta[bg.beta.len() - 1]).max(0.0);
        zones.push(ExclusionZone {
            center: m.beta_min,
            radius: r_lo,
            embedded: false,
        });
        zones.push(ExclusionZone {
            center: m.beta_max,
            radius: r_hi,
            embedded: false,
        });
    }
    let width = grid.bands.modes[grid.lmax - 1].beta_max - grid.bands.modes[0].beta_min;
    zones.extend(candidates.iter().map(|&c| ExclusionZone {
        center: c,
        radius: opts.r_embedded_rel * width,
        embedded: true,
    }));
    zones.sort_by(|a, b| a.center.total_cmp(&b.center));
    zones
}

/// Free spectral map 𝐅 with its row layout.
#[derive(Debug, Clone)]
pub struct FreeMap {
    pub grids: Vec<BetaGrid>,
    pub zones: Vec<ExclusionZone>,
    /// (l, node index) of each row.
    pub rows: Vec<(usize, usize)>,
    pub row_beta: Vec<f64>,
    pub excluded: Vec<bool>,
    /// Rows × (lmax·N_E), orthonormal coordinates on the right.
    pub matrix: Mat<f64>,
}

/// Builds 𝐅; rows inside exclusion zones are zero.
pub fn build_free_map(grid: &ModeGrid, candidates: &[f64], opts: &ScatterOptions) -> Result<FreeMap> {
    let n_beta = if opts.n_beta == 0 {
        2 * grid.n_energy
    } else {
        opts.n_beta
    };
    let grids = (1..=grid.lmax)
        .map(|l| BetaGrid::new(grid, l, n_beta))
        .collect::<Result<Vec<_>>>()?;
    let zones = exclusion_zones(grid, &grids, candidates, opts);
    let rows: Vec<(usize, usize)> = grids
        .iter()
        .flat_map(|g| (0..g.beta.len()).map(move |i| (g.l, i)))
        .collect();
    let row_beta: Vec<f64> = rows.iter().map(|&(l, i)| grids[l - 1].beta[i]).collect();
    let excluded: Vec<bool> = row_beta.iter().map(|&b| in_zones(&zones, b)).collect();
    let n = grid.dim();
    let mut matrix = Mat::zeros(rows.len(), n);
    let sqw: Vec<f64> = (0..grid.n_energy).map(|j| grid.mass_weight(j).sqrt()).collect();
    for (r, &(l, i)) in rows.iter().enumerate() {
        if excluded[r] {
            continue;
        }
        let bg = &grids[l - 1];
        let c = bg.weight[i].sqrt() * bg.scale[i];
        for (j, lj) in grid.lagrange(bg.energy[i]).iter().enumerate() {
            matrix[(r, grid.index(l, j))] = c * lj / sqw[j];
        }
    }
    Ok(FreeMap {
        grids,
        zones,
        rows,
        row_beta,
        excluded,
        matrix,
    })
}

/// Perturbed maps 𝐅± and per-row amplification factors.
#[derive(Debug, Clone)]
pub struct PerturbedMaps {
    pub plus: Mat<C64>,
    pub minus: Mat<C64>,
    pub amplification: Vec<f64>,
    pub excluded: Vec<bool>,
}

/// Builds 𝐅± from the eigendecomposition of 𝒜.
pub fn build_perturbed_maps(
    op: &AntonovOperator,
    eig: &EigenReport,
    free: &FreeMap,
    opts: &ScatterOptions,
) -> Result<PerturbedMaps> {
    let n = op.dim();
    let n_e = op.grid.n_energy;
    let q = &eig.vectors;
    let rows: Vec<(Vec<C64>, Vec<C64>, f64)> = (0..free.rows.len())
        .into_par_iter()
        .map(|r| {
            if free.excluded[r] {
                return Ok((Vec::new(), Vec::new(), 0.0));
            }
            let mut beta = free.row_beta[r];
            let tiny = 1e-10 * beta;
            while eig.values.iter().any(|&v| (v - beta).abs() < tiny) {
                beta += 10.0 * tiny;
            }
            let fb = op.free_boundary(beta, 1.0, 0.0)?;
            let beta = fb.gamma;
            let k = fb.corrections.len();
            let ell: Vec<f64> = (0..n).map(|c| free.matrix[(r, c)]).collect();
            // X = (𝒜₀ − β)[ℓ, v₁, …, v_k].
            let mut x = Mat::<f64>::zeros(n, k + 1);
            for i in 0..n {
                x[(i, 0)] = (op.a0[i] - beta) * ell[i];
            }
            for (c, corr) in fb.corrections.iter().enumerate() {
                let off = (corr.l - 1) * n_e;
                for (j, v) in corr.vec.iter().enumerate() {
                    x[(off + j, c + 1)] = (op.a0[off + j] - beta) * v;
                }
            }
            let mut qx = linalg::mm_tn(q.as_ref(), x.as_ref());
            for (i, &lam) in eig.values.iter().enumerate() {
                let s = 1.0 / (lam - beta);
                for c in 0..=k {
                    qx[(i, c)] *= s;
                }
            }
            let y = linalg::mm(q.as_ref(), qx.as_ref());
            let a: Vec<f64> = (0..n).map(|i| y[(i, 0)]).collect();
            let amp_free = ell.iter().map(|v| v * v).sum::<f64>().sqrt();
            if k == 0 {
                let row: Vec<C64> = a.iter().map(|&v| C64::new(v, 0.0)).collect();
                let amp = a.iter().map(|v| v * v).sum::<f64>().sqrt() / amp_free;
                return Ok((row.clone(), row, amp));
            }
            // U = ℬ[v₁, …, v_k].
            let mut u = Mat::<f64>::zeros(n, k);
            for (c, corr) in fb.corrections.iter().enumerate() {
                let off = (corr.l - 1) * n_e;
                for i in 0..n {
                    u[(i, c)] = corr.vec.iter().enumerate().map(|(j, v)| op.b[(i, off + j)] * v).sum();
                }
            }
            let au: Vec<f64> = (0..k).map(|c| (0..n).map(|i| a[i] * u[(i, c)]).sum()).collect();
            let ywu = Mat::from_fn(k, k, |p, c| (0..n).map(|i| y[(i, p + 1)] * u[(i, c)]).sum::<f64>());
            let mut out = Vec::with_capacity(2);
            for conj in [false, true] {
                let coef: Vec<C64> = fb
                    .corrections
                    .iter()
                    .map(|c| if conj { c.coef.conj() } else { c.coef })
                    .collect();
                // z G = (aᵀU) C with G = I − (Y_wᵀ U) C.
                let gt = Mat::from_fn(k, k, |p, c| {
                    let g_cp = if c == p { 1.0 } else { 0.0 } - ywu[(c, p)] * coef[p];
                    C64::from(g_cp)
                });
                let rhs = Mat::from_fn(k, 1, |p, _| au[p] * coef[p]);
                let z = linalg::solve(gt.as_ref(), rhs.as_ref());
                let row: Vec<C64> = (0..n)
                    .map(|i| {
                        let corr: C64 = (0..k).map(|c| z[(c, 0)] * y[(i, c + 1)]).sum();
                        C64::new(a[i], 0.0) + corr
                    })
                    .collect();
                out.push(row);
            }
            let amp = out[0].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() / amp_free;
            let minus = out.pop().unwrap();
            let plus = out.pop().unwrap();
            Ok((plus, minus, amp))
        })
        .collect::<Result<Vec<_>>>()?;
    let m = rows.len();
    let mut plus = Mat::<C64>::zeros(m, n);
    let mut minus = Mat::<C64>::zeros(m, n);
    let mut amplification = vec![0.0; m];
    let mut excluded = free.excluded.clone();
    for (r, (p, mi, amp)) in rows.into_iter().enumerate() {
        amplification[r] = amp;
        if excluded[r] {
            continue;
        }
        if !(amp <= opts.amplification_max) {
            excluded[r] = true;
            continue;
        }
        for c in 0..n {
            plus[(r, c)] = p[c];
            minus[(r, c)] = mi[c];
        }
    }
    Ok(PerturbedMaps {
        plus,
        minus,
        amplification,
        excluded,
    })
}

/// W± = 𝐅±*𝐅 and S = W₊*W₋.
#[derive(Debug, Clone)]
pub struct WaveOperators {
    pub plus: Mat<C64>,
    pub minus: Mat<C64>,
    pub scattering: Mat<C64>,
}

pub fn stationary_wave_operators(free: &FreeMap, maps: &PerturbedMaps) -> WaveOperators {
    let f = linalg::to_complex(free.matrix.as_ref());
    let fp = linalg::adjoint(maps.plus.as_ref());
    let fm = linalg::adjoint(maps.minus.as_ref());
    let plus = linalg::mm(fp.as_ref(), f.as_ref());
    let minus = linalg::mm(fm.as_ref(), f.as_ref());
    let scattering = linalg::mm(linalg::adjoint(plus.as_ref()).as_ref(), minus.as_ref());
    WaveOperators {
        plus,
        minus,
        scattering,
    }
}

/// Discrete a.c. surrogate: eigenvectors of 𝒜 with eigenvalues in the band union outside the zones.
#[derive(Debug, Clone)]
pub struct AcProjector {
    pub basis: Mat<f64>,
    pub selected: Vec<usize>,
}

impl AcProjector {
    pub fn new(op: &AntonovOperator, eig: &EigenReport, zones: &[ExclusionZone]) -> Self {
        let modes = &op.grid.bands.modes[..op.grid.lmax];
        let selected: Vec<usize> = eig
            .values
            .iter()
            .enumerate()
            .filter(|(_, &v)| {
                modes.iter().any(|m| m.beta_min <= v && v <= m.beta_max) && !in_zones(zones, v)
            })
            .map(|(i, _)| i)
            .collect();
        let basis = Mat::from_fn(eig.vectors.nrows(), selected.len(), |i, k| {
            eig.vectors[(i, selected[k])]
        });
        Self { basis, selected }
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let c: Vec<f64> = (0..self.basis.ncols())
            .map(|k| (0..f.len()).map(|i| self.basis[(i, k)] * f[i]).sum())
            .collect();
        (0..f.len())
            .map(|i| (0..c.len()).map(|k| self.basis[(i, k)] * c[k]).sum())
            .collect()
    }

    pub fn rank(&self) -> usize {
        self.selected.len()
    }
}

/// Smooth normalized test vectors of the margin space: per mode, Legendre polynomials in the
/// normalized energy times s²(1 − s)², windowed away from interior exceptional points.
pub fn margin_test_vectors(grid: &ModeGrid, zones: &[ExclusionZone], opts: &ScatterOptions) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for l in 1..=grid.lmax {
        let (lo, hi) = grid.grid_bands[l - 1];
        let rho = opts.window_rel * (hi - lo);
        for m in 0..opts.n_test_poly {
            let mut c = vec![0.0; grid.dim()];
            for j in 0..grid.n_energy {
                let s = (grid.energies[j] - grid.e_lo) / (grid.e_hi - grid.e_lo);
                let beta = grid.beta(l, j);
                let mut win = 1.0;
                for z in zones.iter().filter(|z| z.center > lo && z.center < hi) {
                    win *= window(((beta - z.center).abs() - z.radius) / rho);
                }
                let g = legendre(m, 2.0 * s - 1.0) * (s * (1.0 - s)).powi(2) * win;
                c[grid.index(l, j)] = g * grid.mass_weight(j).sqrt();
            }
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                c.iter_mut().for_each(|v| *v /= norm);
                out.push(c);
            }
        }
    }
    out
}

/// 0 for t ≤ 1, 1 for t ≥ 2, quintic smoothstep between.
fn window(t: f64) -> f64 {
    let u = (t - 1.0).clamp(0.0, 1.0);
    u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
}

fn legendre(m: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if m == 0 {
        return p0;
    }
    for k in 1..m {
        let p2 = ((2 * k + 1) as f64 * x * p1 - k as f64 * p0) / (k + 1) as f64;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Residuals of the scattering identities, maximized over the margin test set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualReport {
    pub lmax: usize,
    pub n_energy: usize,
    pub n_beta: usize,
    pub n_tests: usize,
    pub excluded_rows: usize,
    pub max_amplification: f64,
    /// |‖𝐅f‖² − ‖f‖²|.
    pub parseval: f64,
    /// ‖(𝐅±*𝐅± − P̂_ac)f‖, indices [+, −].
    pub partial_isometry: [f64; 2],
    /// ‖𝐅±𝒜f − β𝐅±f‖/‖𝒜‖.
    pub diagonalization: [f64; 2],
    /// ‖(𝒜W± − W±𝒜₀)f‖/‖𝒜‖.
    pub intertwining: [f64; 2],
    /// ‖(√𝒜W± − W±√𝒜₀)f‖/‖√𝒜‖.
    pub invariance: [f64; 2],
    /// ‖(W±*W± − I)f‖.
    pub isometry: [f64; 2],
    /// ‖(S*S − I)f‖ and ‖(SS* − I)f‖.
    pub s_unitarity: f64,
    /// max |⟨W±f, g⟩ − ⟨𝐅f, 𝐅±g⟩| over test pairs.
    pub adjoint_consistency: f64,
}

impl ResidualReport {
    /// The four residuals gated by acceptance, maximized over both signs.
    pub fn headline(&self) -> [f64; 4] {
        let mx = |a: [f64; 2]| a[0].max(a[1]);
        [
            mx(self.partial_isometry),
            mx(self.diagonalization),
            mx(self.intertwining),
            mx(self.invariance),
        ]
    }
}

fn matvec_c(m: &Mat<C64>, f: &[C64]) -> Vec<C64> {
    let x = linalg::mm(m.as_ref(), linalg::col(f).as_ref());
    (0..m.nrows()).map(|i| x[(i, 0)]).collect()
}

fn adj_matvec_c(m: &Mat<C64>, f: &[C64]) -> Vec<C64> {
    let x = linalg::mm(linalg::adjoint(m.as_ref()).as_ref(), linalg::col(f).as_ref());
    (0..m.ncols()).map(|i| x[(i, 0)]).collect()
}

fn cnorm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn real_c(v: &[f64]) -> Vec<C64> {
    v.iter().map(|&x| C64::new(x, 0.0)).collect()
}

fn diff_norm(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// Full scattering assembly for one operator.
#[derive(Debug, Clone)]
pub struct Scattering {
    pub free: FreeMap,
    pub maps: PerturbedMaps,
    pub waves: WaveOperators,
    pub ac: AcProjector,
    pub tests: Vec<Vec<f64>>,
    pub opts: ScatterOptions,
}

impl Scattering {
    pub fn build(
        op: &AntonovOperator,
        eig: &EigenReport,
        candidates: &[f64],
        opts: ScatterOptions,
    ) -> Result<Self> {
        let free = build_free_map(&op.grid, candidates, &opts)?;
        let maps = build_perturbed_maps(op, eig, &free, &opts)?;
        let waves = stationary_wave_operators(&free, &maps);
        let ac = AcProjector::new(op, eig, &free.zones);
        let tests = margin_test_vectors(&op.grid, &free.zones, &opts);
        Ok(Self {
            free,
            maps,
            waves,
            ac,
            tests,
            opts,
        })
    }

    pub fn wave(&self, sign: f64) -> &Mat<C64> {
        if sign >= 0.0 {
            &self.waves.plus
        } else {
            &self.waves.minus
        }
    }

    fn map(&self, sign: f64) -> &Mat<C64> {
        if sign >= 0.0 {
            &self.maps.plus
        } else {
            &self.maps.minus
        }
    }

    /// Residual table on the margin test set.
    pub fn residuals(&self, op: &AntonovOperator, eig: &EigenReport) -> ResidualReport {
        let n = op.dim();
        let a_norm = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let apply_sym = |f: &dyn Fn(f64) -> f64, x: &[C64]| -> Vec<C64> {
            let q = &eig.vectors;
            let coef: Vec<C64> = (0..n)
                .map(|k| (0..n).map(|i| x[i] * q[(i, k)]).sum::<C64>() * f(eig.values[k]))
                .collect();
            (0..n).map(|i| (0..n).map(|k| coef[k] * q[(i, k)]).sum()).collect()
        };
        let fmat = linalg::to_complex(self.free.matrix.as_ref());
        let mut rep = ResidualReport {
            lmax: op.grid.lmax,
            n_energy: op.grid.n_energy,
            n_beta: self.free.grids[0].beta.len(),
            n_tests: self.tests.len(),
            excluded_rows: self.maps.excluded.iter().filter(|&&e| e).count(),
            max_amplification: self.maps.amplification.iter().cloned().fold(0.0, f64::max),
            parseval: 0.0,
            partial_isometry: [0.0; 2],
            diagonalization: [0.0; 2],
            intertwining: [0.0; 2],
            invariance: [0.0; 2],
            isometry: [0.0; 2],
            s_unitarity: 0.0,
            adjoint_consistency: 0.0,
        };
        let row_beta: Vec<C64> = self.free.row_beta.iter().map(|&b| C64::new(b, 0.0)).collect();
        for (ti, f) in self.tests.iter().enumerate() {
            let fc = real_c(f);
            let ff = matvec_c(&fmat, &fc);
            rep.parseval = rep.parseval.max((cnorm(&ff).powi(2) - 1.0).abs());
            let pac = real_c(&self.ac.apply(f));
            let af = apply_sym(&|x| x, &fc);
            let a0f: Vec<C64> = fc.iter().zip(&op.a0).map(|(x, b)| x * b).collect();
            let sa0f: Vec<C64> = fc.iter().zip(&op.a0).map(|(x, b)| x * b.sqrt()).collect();
            for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
                let fs = self.map(sign);
                let w = self.wave(sign);
                let fsf = matvec_c(fs, &fc);
                let back = adj_matvec_c(fs, &fsf);
                rep.partial_isometry[k] = rep.partial_isometry[k].max(diff_norm(&back, &pac));
                let fsaf = matvec_c(fs, &af);
                let bf: Vec<C64> = fsf.iter().zip(&row_beta).map(|(x, b)| x * b).collect();
                rep.diagonalization[k] = rep.diagonalization[k].max(diff_norm(&fsaf, &bf) / a_norm);
                let wf = matvec_c(w, &fc);
                let awf = apply_sym(&|x| x, &wf);
                let wa0f = matvec_c(w, &a0f);
                rep.intertwining[k] = rep.intertwining[k].max(diff_norm(&awf, &wa0f) / a_norm);
                let sawf = apply_sym(&|x| x.max(0.0).sqrt(), &wf);
                let wsa0f = matvec_c(w, &sa0f);
                rep.invariance[k] = rep.invariance[k].max(diff_norm(&sawf, &wsa0f) / a_norm.sqrt());
                let wwf = adj_matvec_c(w, &wf);
                rep.isometry[k] = rep.isometry[k].max(diff_norm(&wwf, &fc));
                let gidx = (ti + 1) % self.tests.len();
                let g = real_c(&self.tests[gidx]);
                let lhs: C64 = wf.iter().zip(&g).map(|(a, b)| a * b.conj()).sum();
                let fsg = matvec_c(fs, &g);
                let rhs: C64 = ff.iter().zip(&fsg).map(|(a, b)| a * b.conj()).sum();
                rep.adjoint_consistency = rep.adjoint_consistency.max((lhs - rhs).norm());
            }
            let sf = matvec_c(&self.waves.scattering, &fc);
            let ssf = adj_matvec_c(&self.waves.scattering, &sf);
            let sadj = adj_matvec_c(&self.waves.scattering, &fc);
            let ssadj = matvec_c(&self.waves.scattering, &sadj);
            rep.s_unitarity = rep
                .s_unitarity
                .max(diff_norm(&ssf, &fc))
                .max(diff_norm(&ssadj, &fc));
        }
        rep
    }
}

/// max |𝐅± − 𝐅| entrywise for the operator with ℬ set to zero.
pub fn free_collapse_defect(grid: Arc<ModeGrid>, opts: ScatterOptions) -> Result<f64> {
    let n = grid.dim();
    let op = AntonovOperator::with_b(grid, 0.0, Mat::zeros(n, n))?;
    let eig = op.eigen()?;
    let sc = Scattering::build(&op, &eig, &[], opts)?;
    let mut worst = 0.0f64;
    for r in 0..sc.free.rows.len() {
        for c in 0..n {
            let f = sc.free.matrix[(r, c)];
            worst = worst
                .max((sc.maps.plus[(r, c)] - f).norm())
                .max((sc.maps.minus[(r, c)] - f).norm());
        }
    }
    Ok(worst)
}

/// Distances ‖e^{i·sign·t𝒜}e^{−i·sign·t𝒜₀}f − W f‖ at the given times.
pub fn time_dependent_check(
    op: &AntonovOperator,
    eig: &EigenReport,
    wave: &Mat<C64>,
    f: &[f64],
    times: &[f64],
    sign: f64,
) -> Vec<f64> {
    let n = op.dim();
    let q = &eig.vectors;
    let target = matvec_c(wave, &real_c(f));
    times
        .par_iter()
        .map(|&t| {
            let s = sign * t;
            let free: Vec<C64> = f
                .iter()
                .zip(&op.a0)
                .map(|(x, b)| C64::from_polar(1.0, -s * b) * x)
                .collect();
            let coef: Vec<C64> = (0..n)
                .map(|k| {
                    let c: C64 = (0..n).map(|i| free[i] * q[(i, k)]).sum();
                    c * C64::from_polar(1.0, s * eig.values[k])
                })
                .collect();
            let out: Vec<C64> = (0..n).map(|i| (0..n).map(|k| coef[k] * q[(i, k)]).sum()).collect();
            diff_norm(&out, &target)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::band_structure::BandStructure;
    use crate::operators::GridOptions;
    use crate::steady_state::{solve_steady_state, AnsatzProfile, SolveOptions};
    use std::sync::LazyLock;

    fn grid(lmax: usize, n_e: usize) -> Arc<ModeGrid> {
        let st = solve_steady_state(AnsatzProfile::king(), 2.0, SolveOptions::default()).unwrap();
        let bands = Arc::new(BandStructure::build(Arc::new(st), lmax).unwrap());
        let opts = GridOptions {
            lmax,
            n_energy: n_e,
            ..Default::default()
        };
        Arc::new(ModeGrid::new(bands, opts).unwrap())
    }

    static GRID: LazyLock<Arc<ModeGrid>> = LazyLock::new(|| grid(3, 32));

    #[test]
    fn change_of_variables() {
        let g = &*GRID;
        let st = g.state();
        let l = 2;
        let h = |e: f64| (3.0 * e).sin() + e * e;
        let wt = |e: f64| action_angle::period(st, e).unwrap() / st.phi_prime_abs(e).unwrap();
        let lhs = GaussLegendre::new(60).integrate(g.e_lo, g.e_hi, |e| h(e).powi(2) * wt(e));
        let bg = BetaGrid::new(g, l, 60).unwrap();
        let rhs: f64 = (0..60)
            .map(|i| bg.weight[i] * (bg.scale[i] * h(bg.energy[i])).powi(2))
            .sum();
        assert!((lhs - rhs).abs() < 1e-9 * lhs, "{lhs} vs {rhs}");
    }

    #[test]
    fn free_rows_vanish_off_mode() {
        let g = &*GRID;
        let opts = ScatterOptions::default();
        let fm = build_free_map(g, &[], &opts).unwrap();
        let mut c = vec![0.0; g.dim()];
        for j in 0..g.n_energy {
            c[g.index(2, j)] = 1.0;
        }
        for (r, &(l, _)) in fm.rows.iter().enumerate() {
            if l != 2 {
                let v: f64 = (0..g.dim()).map(|k| fm.matrix[(r, k)] * c[k]).sum();
                assert_eq!(v, 0.0);
            }
        }
        assert!(fm.excluded.iter().any(|&e| e));
    }

    #[test]
    fn parseval_improves_under_refinement() {
        let opts = ScatterOptions::default();
        let defect = |n_beta: usize| {
            let g = &*GRID;
            let fm = build_free_map(g, &[], &ScatterOptions { n_beta, ..opts }).unwrap();
            let tests = margin_test_vectors(g, &fm.zones, &opts);
            tests
                .iter()
                .map(|f| {
                    let s: f64 = (0..fm.rows.len())
                        .map(|r| (0..f.len()).map(|k| fm.matrix[(r, k)] * f[k]).sum::<f64>().powi(2))
                        .sum();
                    (s - 1.0).abs()
                })
                .fold(0.0, f64::max)
        };
        let (a, b) = (defect(32), defect(64));
        assert!(b < a && b < 1e-3, "{a} {b}");
    }

    #[test]
    fn free_case_collapse() {
        let g = GRID.clone();
        let op = AntonovOperator::new(g, 0.0).unwrap();
        let eig = op.eigen().unwrap();
        let sc = Scattering::build(&op, &eig, &[], ScatterOptions::default()).unwrap();
        let n = op.dim();
        let mut d = 0.0f64;
        for r in 0..sc.free.rows.len() {
            for c in 0..n {
                d = d.max((sc.maps.plus[(r, c)] - sc.free.matrix[(r, c)]).norm());
                d = d.max((sc.maps.minus[(r, c)] - sc.free.matrix[(r, c)]).norm());
            }
        }
        assert!(d < 1e-10, "{d}");
        let rep = sc.residuals(&op, &eig);
        assert!(rep.adjoint_consistency < 1e-10);
        let t = time_dependent_check(&op, &eig, &sc.waves.plus, &sc.tests[0], &[0.0, 1.0, 10.0], 1.0);
        let w0 = (rep.isometry[0]).max(1e-14);
        assert!(t.iter().all(|&x| x <= 2.0 * w0 + 1e-10));
    }

    #[test]
    fn coupled_residuals_small_and_consistent() {
        let g = GRID.clone();
        let op = AntonovOperator::new(g, 1.0).unwrap();
        let eig = op.eigen().unwrap();
        let sc = Scattering::build(&op, &eig, &[], ScatterOptions::default()).unwrap();
        let rep = sc.residuals(&op, &eig);
        assert!(rep.adjoint_consistency < 1e-10);
        for r in rep.headline() {
            assert!(r < 0.1, "{rep:?}");
        }
    }

    #[test]
    fn legendre_and_window() {
        assert!((legendre(2, 0.5) - (-0.125)).abs() < 1e-15);
        assert!((legendre(3, 0.3) - 0.5 * (5.0 * 0.027 - 0.9)).abs() < 1e-15);
        assert_eq!(window(0.5), 0.0);
        assert_eq!(window(2.5), 1.0);
        assert!((window(1.5) - 0.5).abs() < 1e-15);
    }
}
