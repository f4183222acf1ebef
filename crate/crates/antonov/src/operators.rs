//! Discretized weighted Hilbert space and the operators 𝒜₀, ℬ and 𝒜 = 𝒜₀ − ℬ.
//!
//! A function g(θ, E) = Σ_l g_l(E) √2 sin(4πlθ) is represented by orthonormal
//! coordinates c_{l,j} = √(w_j) g_l(E_j), with Gauss–Legendre energy nodes E_j,
//! weights q_j and mass weights w_j = q_j T(E_j)/|φ′(E_j)|. Index (l, j) maps to
//! (l − 1)·N_E + j.
//!
//! ℬ is assembled from its quadratic form ⟨ℬg, g⟩ = 4π∫(∫v g dv)² dx. Writing
//! ψ_l = √(T/|φ′|) g_l, the velocity moment is
//! ∫v g dv = Σ_l ∫ κ_l(x, λ) ψ_l(λ) dλ with
//! κ_l(x, λ) = 2√2 √(|φ′(λ)|/T(λ)) sin(4πl θ(x, λ)) 1[λ > U₀(x)],
//! so ℬ = K̂ᵀK̂ with K̂[m, (l, j)] = √(8π ω_m) √q_j κ_l(x_m, E_j) on an x-rule ω_m over
//! [0, R₀]. The x-rule uses panels in u = W(x) whose breakpoints are the grid energies.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use faer::Mat;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action_angle::{ChartOptions, EnergyRecord};
use crate::band_structure::BandStructure;
use crate::error::{Error, Result};
use crate::linalg;
use crate::quadrature::{lagrange_row, GaussLegendre};
use crate::steady_state::SteadyState;

/// Discretization parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridOptions {
    pub lmax: usize,
    pub n_energy: usize,
    /// Energy margin at both ends, relative to E₀ − E_min.
    pub delta_rel: f64,
    /// Midpoint θ-rule size for mode projection; 0 selects 8·lmax.
    pub n_theta: usize,
    /// Gauss–Legendre nodes per u-panel of the x-rule.
    pub panel_nodes: usize,
    pub n_cheb: usize,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            lmax: 8,
            n_energy: 64,
            delta_rel: 1e-4,
            n_theta: 0,
            panel_nodes: 16,
            n_cheb: 64,
        }
    }
}

/// Node of the x-rule on [0, R₀].
#[derive(Debug, Clone, Copy)]
pub struct XNode {
    pub x: f64,
    /// W(x).
    pub u: f64,
    pub weight: f64,
    /// Index of the panel's upper energy.
    top: usize,
    /// ε_top − u, computed without cancellation.
    gap: f64,
}

/// Mode/energy grid with its orbit data.
#[derive(Debug, Clone)]
pub struct ModeGrid {
    pub bands: Arc<BandStructure>,
    pub opts: GridOptions,
    pub lmax: usize,
    pub n_energy: usize,
    pub n_theta: usize,
    pub e_lo: f64,
    pub e_hi: f64,
    pub energies: Vec<f64>,
    pub q: Vec<f64>,
    t_nodes: Vec<f64>,
    bary: Vec<f64>,
    pub period: Vec<f64>,
    pub period_derivative: Vec<f64>,
    /// |φ′(E_j)|.
    pub phi_weight: Vec<f64>,
    pub records: Vec<EnergyRecord>,
    pub x_nodes: Vec<XNode>,
    kappa_pref: Vec<f64>,
    /// Per-mode β range covered by the grid, [β_l(e_hi), β_l(e_lo)].
    pub grid_bands: Vec<(f64, f64)>,
}

impl ModeGrid {
    pub fn new(bands: Arc<BandStructure>, opts: GridOptions) -> Result<Self> {
        if opts.lmax == 0 || opts.n_energy == 0 || opts.panel_nodes == 0 {
            return Err(Error::domain("grid sizes must be positive"));
        }
        if opts.lmax > bands.lmax {
            return Err(Error::domain(format!(
                "grid lmax {} exceeds band structure lmax {}",
                opts.lmax, bands.lmax
            )));
        }
        if !(opts.delta_rel > 0.0 && opts.delta_rel < 0.5) {
            return Err(Error::domain("energy margin must lie in (0, 1/2)"));
        }
        let state = bands.state.clone();
        let delta = opts.delta_rel * state.depth;
        let (e_lo, e_hi) = (state.emin + delta, state.e0 - delta);
        let rule = GaussLegendre::new(opts.n_energy);
        let (energies, q) = rule.mapped(e_lo, e_hi);
        let bary = rule.barycentric_weights();
        let chart = ChartOptions {
            n_cheb: opts.n_cheb,
        };
        let records = energies
            .par_iter()
            .map(|&e| EnergyRecord::new(&state, e, chart))
            .collect::<Result<Vec<_>>>()?;
        let period: Vec<f64> = records.iter().map(|r| r.period).collect();
        let period_derivative = records.iter().map(|r| r.period_derivative).collect();
        let phi_weight = energies
            .iter()
            .map(|&e| state.phi_prime_abs(e))
            .collect::<Result<Vec<_>>>()?;
        let kappa_pref = period
            .iter()
            .zip(&phi_weight)
            .map(|(t, p)| 2.0 * 2f64.sqrt() * (p / t).sqrt())
            .collect();
        let x_nodes = build_x_rule(&state, &energies, opts.panel_nodes);
        let t_lo = crate::action_angle::period(&state, e_lo)?;
        let t_hi = crate::action_angle::period(&state, e_hi)?;
        let grid_bands = (1..=opts.lmax)
            .map(|l| {
                (
                    BandStructure::beta_from_period(l, t_hi),
                    BandStructure::beta_from_period(l, t_lo),
                )
            })
            .collect();
        let n_theta = if opts.n_theta == 0 {
            8 * opts.lmax
        } else {
            opts.n_theta
        };
        if n_theta % 4 != 0 || n_theta <= 4 * opts.lmax {
            return Err(Error::domain(
                "theta rule size must be a multiple of 4 exceeding 4·lmax",
            ));
        }
        Ok(Self {
            bands,
            opts,
            lmax: opts.lmax,
            n_energy: opts.n_energy,
            n_theta,
            e_lo,
            e_hi,
            energies,
            q,
            t_nodes: rule.nodes,
            bary,
            period,
            period_derivative,
            phi_weight,
            records,
            x_nodes,
            kappa_pref,
            grid_bands,
        })
    }

    pub fn state(&self) -> &SteadyState {
        &self.bands.state
    }

    pub fn dim(&self) -> usize {
        self.lmax * self.n_energy
    }

    pub fn index(&self, l: usize, j: usize) -> usize {
        (l - 1) * self.n_energy + j
    }

    /// β_l(E_j).
    pub fn beta(&self, l: usize, j: usize) -> f64 {
        BandStructure::beta_from_period(l, self.period[j])
    }

    /// Diagonal of 𝒜₀.
    pub fn a0_diag(&self) -> Vec<f64> {
        (1..=self.lmax)
            .flat_map(|l| (0..self.n_energy).map(move |j| (l, j)))
            .map(|(l, j)| self.beta(l, j))
            .collect()
    }

    /// Mass weight w_j = q_j T(E_j)/|φ′(E_j)|.
    pub fn mass_weight(&self, j: usize) -> f64 {
        self.q[j] * self.period[j] / self.phi_weight[j]
    }

    /// Mode values g_{l,j} to orthonormal coordinates.
    pub fn to_orthonormal(&self, g: &[f64]) -> Vec<f64> {
        g.iter()
            .enumerate()
            .map(|(i, v)| v * self.mass_weight(i % self.n_energy).sqrt())
            .collect()
    }

    /// Orthonormal coordinates to mode values g_{l,j}.
    pub fn from_orthonormal(&self, c: &[f64]) -> Vec<f64> {
        c.iter()
            .enumerate()
            .map(|(i, v)| v / self.mass_weight(i % self.n_energy).sqrt())
            .collect()
    }

    /// Midpoint θ-nodes on [0, 1].
    pub fn theta_nodes(&self) -> Vec<f64> {
        (0..self.n_theta)
            .map(|k| (k as f64 + 0.5) / self.n_theta as f64)
            .collect()
    }

    /// e_l(θ) = √2 sin(4πlθ).
    pub fn mode(l: usize, theta: f64) -> f64 {
        2f64.sqrt() * (4.0 * PI * l as f64 * theta).sin()
    }

    /// Projects samples g(θ_k, E_j) (outer index j, inner k) onto the sine modes.
    ///
    /// Rejects samples violating g(θ) = −g(1 − θ) or g(θ) = −g(1/2 − θ) on [0, 1/2].
    pub fn project_modes(&self, samples: &[Vec<f64>]) -> Result<Vec<f64>> {
        let n = self.n_theta;
        if samples.len() != self.n_energy || samples.iter().any(|s| s.len() != n) {
            return Err(Error::domain("sample array has the wrong shape"));
        }
        let scale = samples
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        for s in samples {
            for k in 0..n {
                let mirror = s[k] + s[n - 1 - k];
                let reflect = if k < n / 2 { s[k] + s[n / 2 - 1 - k] } else { 0.0 };
                if mirror.abs() > 1e-8 * scale || reflect.abs() > 1e-8 * scale {
                    return Err(Error::domain(
                        "samples violate the parity symmetries of the energy space",
                    ));
                }
            }
        }
        let thetas = self.theta_nodes();
        let mut out = vec![0.0; self.dim()];
        for l in 1..=self.lmax {
            let e: Vec<f64> = thetas.iter().map(|&t| Self::mode(l, t)).collect();
            for (j, s) in samples.iter().enumerate() {
                let v: f64 = s.iter().zip(&e).map(|(a, b)| a * b).sum();
                out[self.index(l, j)] = v / n as f64;
            }
        }
        Ok(out)
    }

    /// Σ_l g_{l,j} e_l(θ).
    pub fn synthesize(&self, g: &[f64], j: usize, theta: f64) -> f64 {
        (1..=self.lmax)
            .map(|l| g[self.index(l, j)] * Self::mode(l, theta))
            .sum()
    }

    /// Lagrange basis values L_j(λ) of the energy nodes.
    pub fn lagrange(&self, lambda: f64) -> Vec<f64> {
        let t = (2.0 * lambda - self.e_lo - self.e_hi) / (self.e_hi - self.e_lo);
        let mut out = vec![0.0; self.n_energy];
        lagrange_row(&self.t_nodes, &self.bary, t, &mut out);
        out
    }

    /// κ_l(x, E_j) at a point with W(x) = u, E_j − E_min − u = gap and sign of x.
    fn kappa(&self, l: usize, j: usize, u: f64, gap: f64, sign: f64) -> f64 {
        let theta = self.records[j].angle_at_depth(u, gap, sign);
        self.kappa_pref[j] * (4.0 * PI * l as f64 * theta).sin()
    }

    /// K̂, rows indexed by x-nodes and columns by (l, j).
    pub fn kernel_matrix(&self) -> Mat<f64> {
        let n = self.dim();
        let rows: Vec<Vec<f64>> = self
            .x_nodes
            .par_iter()
            .map(|node| {
                let mut row = vec![0.0; n];
                let s = (8.0 * PI * node.weight).sqrt();
                let e_top = self.energies[node.top];
                for j in node.top..self.n_energy {
                    let gap = (self.energies[j] - e_top) + node.gap;
                    let theta = self.records[j].angle_at_depth(node.u, gap, 1.0);
                    let c = s * self.q[j].sqrt() * self.kappa_pref[j];
                    for l in 1..=self.lmax {
                        row[(l - 1) * self.n_energy + j] =
                            c * (4.0 * PI * l as f64 * theta).sin();
                    }
                }
                row
            })
            .collect();
        Mat::from_fn(rows.len(), n, |m, c| rows[m][c])
    }

    /// ℬ in orthonormal coordinates.
    pub fn build_b(&self) -> Mat<f64> {
        let k = self.kernel_matrix();
        linalg::mm_tn(k.as_ref(), k.as_ref())
    }

    /// Matrix of the linear map c ↦ velocity_moment(c, xs).
    pub fn moment_matrix(&self, xs: &[f64]) -> Mat<f64> {
        let st = self.state();
        let n = self.dim();
        let rows: Vec<Vec<f64>> = xs
            .par_iter()
            .map(|&x| {
                let mut row = vec![0.0; n];
                if x.abs() >= st.r0 {
                    return row;
                }
                let u = st.w(x);
                let sign = if x < 0.0 { -1.0 } else { 1.0 };
                for j in 0..self.n_energy {
                    let gap = self.energies[j] - st.emin - u;
                    if gap <= 0.0 {
                        continue;
                    }
                    let sq = 4.0 * PI * self.q[j].sqrt();
                    for l in 1..=self.lmax {
                        row[self.index(l, j)] = sq * self.kappa(l, j, u, gap, sign);
                    }
                }
                row
            })
            .collect();
        Mat::from_fn(xs.len(), n, |i, k| rows[i][k])
    }

    /// Force density 4π∫v g dv at the points `xs`, from orthonormal coordinates `c`.
    pub fn velocity_moment(&self, c: &[f64], xs: &[f64]) -> Vec<f64> {
        let st = self.state();
        xs.par_iter()
            .map(|&x| {
                if x.abs() >= st.r0 {
                    return 0.0;
                }
                let u = st.w(x);
                let sign = if x < 0.0 { -1.0 } else { 1.0 };
                let mut m = 0.0;
                for j in 0..self.n_energy {
                    let gap = self.energies[j] - st.emin - u;
                    if gap <= 0.0 {
                        continue;
                    }
                    let sq = self.q[j].sqrt();
                    for l in 1..=self.lmax {
                        m += sq * self.kappa(l, j, u, gap, sign) * c[self.index(l, j)];
                    }
                }
                4.0 * PI * m
            })
            .collect()
    }
}

fn build_x_rule(state: &SteadyState, energies: &[f64], panel_nodes: usize) -> Vec<XNode> {
    let rule = GaussLegendre::new(panel_nodes);
    let (ts, ws) = rule.mapped(0.0, 1.0);
    let eps: Vec<f64> = energies.iter().map(|e| e - state.emin).collect();
    let mut nodes = Vec::with_capacity(panel_nodes * energies.len());
    for (&t, &w) in ts.iter().zip(&ws) {
        let phi = FRAC_PI_2 * t;
        let (s, c) = phi.sin_cos();
        let u = eps[0] * s * s;
        let x = state.x_of_w(u);
        let wp = state.depth_state(x)[1];
        let jac = if s == 0.0 {
            (2.0 * eps[0] / state.curvature_at_center()).sqrt()
        } else {
            2.0 * eps[0] * s * c / wp
        };
        nodes.push(XNode {
            x,
            u,
            weight: FRAC_PI_2 * w * jac,
            top: 0,
            gap: eps[0] * c * c,
        });
    }
    for i in 1..energies.len() {
        let delta = energies[i] - energies[i - 1];
        for (&t, &w) in ts.iter().zip(&ws) {
            let gap = delta * t * t;
            let u = eps[i] - gap;
            let x = state.x_of_w(u);
            let wp = state.depth_state(x)[1];
            nodes.push(XNode {
                x,
                u,
                weight: w * 2.0 * delta * t / wp,
                top: i,
                gap,
            });
        }
    }
    nodes
}

/// Truncated eigen-factorization ℬ ≈ V diag(s) Vᵀ.
#[derive(Debug, Clone)]
pub struct LowRank {
    pub v: Mat<f64>,
    pub s: Vec<f64>,
}

/// Relative eigenvalue cutoff of the low-rank factor of ℬ.
pub const RANK_TOL: f64 = 1e-13;

impl LowRank {
    pub fn from_symmetric(b: &Mat<f64>) -> Result<Self> {
        let (vals, vecs) = linalg::sym_eigen(b.as_ref())?;
        let top = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let keep: Vec<usize> = (0..vals.len())
            .rev()
            .filter(|&i| vals[i] > RANK_TOL * top)
            .collect();
        let v = Mat::from_fn(b.nrows(), keep.len(), |i, k| vecs[(i, keep[k])]);
        let s = keep.iter().map(|&i| vals[i]).collect();
        Ok(Self { v, s })
    }

    pub fn rank(&self) -> usize {
        self.s.len()
    }
}

/// Spectral class of an eigenvalue of the discretized 𝒜.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EigenClass {
    /// Isolated from the band union.
    Discrete,
    /// Within the resolution margin of a band edge.
    Unresolved,
    /// Inside the band union.
    Essential,
}

/// Serializable eigenvalue report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenSummary {
    pub dimension: usize,
    pub rank_b: usize,
    pub min_eigenvalue: f64,
    pub discrete: Vec<f64>,
    pub unresolved: Vec<f64>,
    pub n_essential: usize,
    pub embedded_candidates_plus: Vec<f64>,
    pub embedded_candidates_minus: Vec<f64>,
}

/// Eigen-decomposition of 𝒜 with classification.
#[derive(Debug, Clone)]
pub struct EigenReport {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
    pub classes: Vec<EigenClass>,
}

/// Discretized Antonov operator.
#[derive(Debug, Clone)]
pub struct AntonovOperator {
    pub grid: Arc<ModeGrid>,
    /// Factor multiplying ℬ.
    pub coupling: f64,
    pub a0: Vec<f64>,
    pub b: Mat<f64>,
    pub a: Mat<f64>,
    pub lowrank: LowRank,
}

/// One-sided free-resolvent boundary value R̃₀ = diag(D) + Σ coef · v vᵀ (per mode block).
#[derive(Debug, Clone)]
pub struct FreeBoundary {
    /// Spectral parameter actually used (nudged off grid values when needed).
    pub gamma: f64,
    pub diag: Vec<C64>,
    pub corrections: Vec<Correction>,
}

/// Singularity-subtraction correction in the block of mode `l`.
#[derive(Debug, Clone)]
pub struct Correction {
    pub l: usize,
    /// E_l(γ).
    pub lambda: f64,
    pub coef: C64,
    /// L_j(λ)/√q_j.
    pub vec: Vec<f64>,
}

impl FreeBoundary {
    /// R̃₀ applied to a block vector.
    pub fn apply(&self, n_energy: usize, f: &[C64]) -> Vec<C64> {
        let mut out: Vec<C64> = f.iter().zip(&self.diag).map(|(a, d)| a * d).collect();
        for c in &self.corrections {
            let off = (c.l - 1) * n_energy;
            let dot: C64 = c.vec.iter().zip(&f[off..off + n_energy]).map(|(v, x)| x * v).sum();
            for (o, v) in out[off..off + n_energy].iter_mut().zip(&c.vec) {
                *o += c.coef * dot * v;
            }
        }
        out
    }

    /// Corrections expanded to full-length vectors.
    fn full_vectors(&self, n: usize, n_energy: usize) -> Vec<(C64, Vec<f64>)> {
        self.corrections
            .iter()
            .map(|c| {
                let mut v = vec![0.0; n];
                let off = (c.l - 1) * n_energy;
                v[off..off + n_energy].copy_from_slice(&c.vec);
                (c.coef, v)
            })
            .collect()
    }
}

/// γ-scan controls.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScanOptions {
    /// Candidate threshold on min |μ − 1|.
    pub threshold: f64,
    /// Refinement factor of the γ-grid around local minima.
    pub refine: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            threshold: 1e-2,
            refine: 10,
        }
    }
}

/// Distance of spec((ℬR₀)±(γ)) to 1.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScanPoint {
    pub gamma: f64,
    pub dist_plus: f64,
    pub dist_minus: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanReport {
    pub points: Vec<ScanPoint>,
    /// Refined candidate locations from the + boundary value.
    pub candidates_plus: Vec<f64>,
    /// Refined candidate locations from the − boundary value.
    pub candidates_minus: Vec<f64>,
}

/// Point of the exceptional set with its exclusion radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalPoint {
    pub value: f64,
    pub radius: f64,
    pub embedded: bool,
}

impl AntonovOperator {
    pub fn new(grid: Arc<ModeGrid>, coupling: f64) -> Result<Self> {
        let mut b = grid.build_b();
        if coupling != 1.0 {
            b.as_mut().iter_mut_scaled(coupling);
        }
        Self::with_b(grid, coupling, b)
    }

    /// Operator with a caller-supplied ℬ.
    pub fn with_b(grid: Arc<ModeGrid>, coupling: f64, b: Mat<f64>) -> Result<Self> {
        let a0 = grid.a0_diag();
        let n = a0.len();
        let a = Mat::from_fn(n, n, |i, k| if i == k { a0[i] } else { 0.0 } - b[(i, k)]);
        let lowrank = LowRank::from_symmetric(&b)?;
        Ok(Self {
            grid,
            coupling,
            a0,
            b,
            a,
            lowrank,
        })
    }

    pub fn dim(&self) -> usize {
        self.a0.len()
    }

    /// ‖ℬ − ℬᵀ‖_max and ‖ℬ‖₂.
    pub fn b_symmetry_defect(&self) -> Result<(f64, f64)> {
        let n = self.dim();
        let mut d = 0.0f64;
        for i in 0..n {
            for k in 0..i {
                d = d.max((self.b[(i, k)] - self.b[(k, i)]).abs());
            }
        }
        Ok((d, linalg::norm2(self.b.as_ref())?))
    }

    /// Resolution margin around each band edge: ten local grid spacings in β.
    pub fn edge_margins(&self) -> Vec<(f64, f64)> {
        let g = &self.grid;
        let n = g.n_energy;
        let mut out = Vec::new();
        for m in &g.bands.modes[..g.lmax] {
            let l = m.l;
            let sp = |a: usize, b: usize| (g.beta(l, a) - g.beta(l, b)).abs();
            let (lo_sp, hi_sp) = if n >= 2 { (sp(n - 2, n - 1), sp(0, 1)) } else { (0.0, 0.0) };
            out.push((m.beta_min, 10.0 * lo_sp));
            out.push((m.beta_max, 10.0 * hi_sp));
        }
        out
    }

    fn classify(&self, lambda: f64, margins: &[(f64, f64)]) -> EigenClass {
        if margins.iter().any(|&(e, r)| (lambda - e).abs() < r) {
            return EigenClass::Unresolved;
        }
        let inside = self.grid.bands.modes[..self.grid.lmax]
            .iter()
            .any(|m| m.beta_min <= lambda && lambda <= m.beta_max);
        if inside {
            EigenClass::Essential
        } else {
            EigenClass::Discrete
        }
    }

    /// Full eigen-decomposition of 𝒜; fails if 𝒜 is not positive.
    pub fn eigen(&self) -> Result<EigenReport> {
        let (values, vectors) = linalg::sym_eigen(self.a.as_ref())?;
        if values[0] <= 0.0 {
            return Err(Error::internal(format!(
                "discretized Antonov operator is not positive: min eigenvalue {}",
                values[0]
            )));
        }
        let margins = self.edge_margins();
        let classes = values.iter().map(|&v| self.classify(v, &margins)).collect();
        Ok(EigenReport {
            values,
            vectors,
            classes,
        })
    }

    fn in_band_union(&self, x: f64) -> bool {
        self.grid.bands.modes[..self.grid.lmax]
            .iter()
            .any(|m| m.beta_min <= x && x <= m.beta_max)
    }

    /// (𝒜₀ − z)⁻¹ f.
    pub fn resolvent_free(&self, z: C64, f: &[C64]) -> Result<Vec<C64>> {
        if z.im == 0.0 && self.in_band_union(z.re) {
            return Err(Error::domain(
                "spectral parameter lies on the band union; use the boundary values",
            ));
        }
        Ok(f.iter()
            .zip(&self.a0)
            .map(|(x, b)| x / (C64::new(*b, 0.0) - z))
            .collect())
    }

    /// (𝒜 − z)⁻¹ f by a dense LU solve.
    pub fn resolvent(&self, z: C64, f: &[C64]) -> Result<Vec<C64>> {
        if z.im == 0.0 && self.in_band_union(z.re) {
            return Err(Error::domain(
                "spectral parameter lies on the band union; use the boundary values",
            ));
        }
        let n = self.dim();
        let m = Mat::from_fn(n, n, |i, k| {
            C64::new(self.a[(i, k)], 0.0) - if i == k { z } else { C64::new(0.0, 0.0) }
        });
        let x = linalg::solve(m.as_ref(), linalg::col(f).as_ref());
        Ok((0..n).map(|i| x[(i, 0)]).collect())
    }

    /// Free-resolvent boundary value at γ + i·sign·eps (eps = 0 gives the limit).
    pub fn free_boundary(&self, gamma: f64, sign: f64, eps: f64) -> Result<FreeBoundary> {
        let g = &self.grid;
        let sign = if sign < 0.0 { -1.0 } else { 1.0 };
        let mut gamma_eff = gamma;
        if eps == 0.0 {
            let tiny = 1e-12 * gamma.abs().max(1.0);
            if self.a0.iter().any(|b| (b - gamma).abs() < tiny) {
                gamma_eff = gamma + 1e3 * tiny;
            }
        }
        let z = C64::new(gamma_eff, sign * eps);
        let diag = self
            .a0
            .iter()
            .map(|&b| C64::new(1.0, 0.0) / (C64::new(b, 0.0) - z))
            .collect();
        let (a, b) = (g.e_lo, g.e_hi);
        let mut corrections = Vec::new();
        for l in 1..=g.lmax {
            let (lo, hi) = g.grid_bands[l - 1];
            if !(lo < gamma_eff && gamma_eff < hi) {
                continue;
            }
            let lambda = g.bands.energy_of_beta(l, gamma_eff)?;
            if !(a < lambda && lambda < b) {
                continue;
            }
            let t = crate::action_angle::period(g.state(), lambda)?;
            let tp = crate::action_angle::period_derivative(g.state(), lambda)?;
            let slope = -2.0 * gamma_eff * tp / t;
            let model = |e: f64| C64::new(1.0, 0.0) / C64::new(slope * (e - lambda), -sign * eps);
            let integral = if eps == 0.0 {
                C64::new(((b - lambda) / (lambda - a)).ln() / slope, sign * PI / slope.abs())
            } else {
                let hi_v = C64::new(slope * (b - lambda), -sign * eps).ln();
                let lo_v = C64::new(slope * (a - lambda), -sign * eps).ln();
                (hi_v - lo_v) / slope
            };
            let discrete: C64 = g.energies.iter().zip(&g.q).map(|(&e, &q)| model(e) * q).sum();
            let vec = g
                .lagrange(lambda)
                .iter()
                .zip(&g.q)
                .map(|(v, q)| v / q.sqrt())
                .collect();
            corrections.push(Correction {
                l,
                lambda,
                coef: integral - discrete,
                vec,
            });
        }
        Ok(FreeBoundary {
            gamma: gamma_eff,
            diag,
            corrections,
        })
    }

    /// Dense (ℬR₀)(γ + i·sign·eps); eps = 0 gives the boundary value (ℬR₀)±(γ).
    ///
    /// Fails with a domain error when γ lies within the resolution margin of a band edge.
    pub fn boundary_br0(&self, gamma: f64, sign: f64, eps: f64) -> Result<Mat<C64>> {
        if self.near_edge(gamma) {
            return Err(Error::domain(format!(
                "gamma {gamma} lies within the edge margin of an exceptional edge"
            )));
        }
        let fb = self.free_boundary(gamma, sign, eps)?;
        let n = self.dim();
        let mut m = Mat::from_fn(n, n, |i, k| fb.diag[k] * self.b[(i, k)]);
        for (coef, v) in fb.full_vectors(n, self.grid.n_energy) {
            let bv: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|k| self.b[(i, k)] * v[k]).sum())
                .collect();
            for i in 0..n {
                if bv[i] == 0.0 {
                    continue;
                }
                for k in 0..n {
                    if v[k] != 0.0 {
                        m[(i, k)] += coef * bv[i] * v[k];
                    }
                }
            }
        }
        Ok(m)
    }

    /// Birman–Schwinger matrix Σ^{½}Vᵀ R̃₀ V Σ^{½}, sharing its nonzero spectrum with ℬR̃₀.
    pub fn birman_schwinger(&self, fb: &FreeBoundary) -> Mat<C64> {
        let v = &self.lowrank.v;
        let (n, r) = (v.nrows(), v.ncols());
        let re = Mat::from_fn(n, r, |i, k| fb.diag[i].re * v[(i, k)]);
        let out_re = linalg::mm_tn(v.as_ref(), re.as_ref());
        let has_im = fb.diag.iter().any(|d| d.im != 0.0);
        let out_im = has_im.then(|| {
            let im = Mat::from_fn(n, r, |i, k| fb.diag[i].im * v[(i, k)]);
            linalg::mm_tn(v.as_ref(), im.as_ref())
        });
        let sq: Vec<f64> = self.lowrank.s.iter().map(|s| s.sqrt()).collect();
        let mut m = Mat::from_fn(r, r, |i, k| {
            let im = out_im.as_ref().map_or(0.0, |x| x[(i, k)]);
            C64::new(out_re[(i, k)], im)
        });
        for c in &fb.corrections {
            let off = (c.l - 1) * self.grid.n_energy;
            let y: Vec<f64> = (0..r)
                .map(|k| (0..c.vec.len()).map(|j| v[(off + j, k)] * c.vec[j]).sum())
                .collect();
            for i in 0..r {
                for k in 0..r {
                    m[(i, k)] += c.coef * y[i] * y[k];
                }
            }
        }
        for i in 0..r {
            for k in 0..r {
                m[(i, k)] *= sq[i] * sq[k];
            }
        }
        m
    }

    /// min_k |μ_k − 1| over eigenvalues μ_k of (ℬR₀)(γ ± i0).
    pub fn distance_to_one(&self, gamma: f64, sign: f64) -> Result<f64> {
        let fb = self.free_boundary(gamma, sign, 0.0)?;
        let m = self.birman_schwinger(&fb);
        if m.nrows() == 0 {
            return Ok(1.0);
        }
        let mu = linalg::eigenvalues(m.as_ref())?;
        Ok(mu
            .iter()
            .map(|z| (z - C64::new(1.0, 0.0)).norm())
            .fold(f64::INFINITY, f64::min))
    }

    /// Uniform γ-grid over the band union avoiding continuum and grid band edges.
    pub fn gamma_grid(&self, n: usize, margin_rel: f64) -> Vec<f64> {
        let g = &self.grid;
        let lo = g.bands.modes[0].beta_min;
        let hi = g.bands.modes[g.lmax - 1].beta_max;
        let margin = margin_rel * (hi - lo);
        let mut edges: Vec<f64> = g.bands.exceptional_edges();
        edges.retain(|e| *e <= hi);
        edges.extend(g.grid_bands.iter().flat_map(|&(a, b)| [a, b]));
        (0..n)
            .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / n as f64)
            .filter(|x| edges.iter().all(|e| (x - e).abs() > margin) && !self.near_edge(*x))
            .collect()
    }

    /// Whether γ lies within the resolution margin of a band edge.
    pub fn near_edge(&self, gamma: f64) -> bool {
        self.edge_margins()
            .iter()
            .any(|&(e, r)| (gamma - e).abs() < r)
    }

    /// Log-log slope of ‖(ℬR₀)₊(γ₁) − (ℬR₀)₊(γ₂)‖ against |γ₁ − γ₂| over the middle half of
    /// band `l`, with the sampled (separation, norm) pairs.
    pub fn holder_fit(&self, l: usize, n_pairs: usize) -> Result<(f64, Vec<(f64, f64)>)> {
        let band = self.grid.bands.band(l)?;
        let width = band.beta_max - band.beta_min;
        let center = band.beta_min + 0.5 * width;
        let base = self.boundary_br0(center, 1.0, 0.0)?;
        let n = self.dim();
        let mut samples = Vec::with_capacity(n_pairs);
        for k in 0..n_pairs {
            let delta = 0.25 * width * 0.5f64.powi(k as i32);
            let other = self.boundary_br0(center + delta, 1.0, 0.0)?;
            let diff = Mat::from_fn(n, n, |i, j| other[(i, j)] - base[(i, j)]);
            samples.push((delta, linalg::norm2(diff.as_ref())?));
        }
        let pts: Vec<(f64, f64)> = samples
            .iter()
            .filter(|(_, v)| *v > 0.0)
            .map(|(d, v)| (d.ln(), v.ln()))
            .collect();
        let m = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let (sxx, sxy) = pts
            .iter()
            .fold((0.0, 0.0), |a, p| (a.0 + p.0 * p.0, a.1 + p.0 * p.1));
        let alpha = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        Ok((alpha, samples))
    }

    /// Singular values of ℬR₀(z) for z off the real axis.
    pub fn br0_singular_values(&self, z: C64) -> Result<Vec<f64>> {
        if z.im == 0.0 {
            return Err(Error::domain("compactness surrogate needs a nonreal spectral parameter"));
        }
        let n = self.dim();
        let m = Mat::from_fn(n, n, |i, k| self.b[(i, k)] / (C64::from(self.a0[k]) - z));
        linalg::singular_values(m.as_ref())
    }

    /// Eigenvalue report with classes and embedded candidates.
    pub fn eigen_summary(&self, eig: &EigenReport, scan: Option<&ScanReport>) -> EigenSummary {
        let pick = |c: EigenClass| {
            eig.values
                .iter()
                .zip(&eig.classes)
                .filter(|(_, k)| **k == c)
                .map(|(v, _)| *v)
                .collect::<Vec<_>>()
        };
        EigenSummary {
            dimension: self.dim(),
            rank_b: self.lowrank.rank(),
            min_eigenvalue: eig.values[0],
            discrete: pick(EigenClass::Discrete),
            unresolved: pick(EigenClass::Unresolved),
            n_essential: pick(EigenClass::Essential).len(),
            embedded_candidates_plus: scan.map(|s| s.candidates_plus.clone()).unwrap_or_default(),
            embedded_candidates_minus: scan.map(|s| s.candidates_minus.clone()).unwrap_or_default(),
        }
    }

    /// Scans the γ-grid for near-eigenvalue 1 of the boundary values of ℬR₀.
    pub fn scan_embedded(&self, gammas: &[f64], opts: ScanOptions) -> Result<ScanReport> {
        let points = gammas
            .par_iter()
            .map(|&g| {
                Ok(ScanPoint {
                    gamma: g,
                    dist_plus: self.distance_to_one(g, 1.0)?,
                    dist_minus: self.distance_to_one(g, -1.0)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let candidates_plus = self.refine_minima(&points, 1.0, opts)?;
        let candidates_minus = self.refine_minima(&points, -1.0, opts)?;
        Ok(ScanReport {
            points,
            candidates_plus,
            candidates_minus,
        })
    }

    fn refine_minima(&self, pts: &[ScanPoint], sign: f64, opts: ScanOptions) -> Result<Vec<f64>> {
        let d = |p: &ScanPoint| if sign > 0.0 { p.dist_plus } else { p.dist_minus };
        let mut out = Vec::new();
        for i in 1..pts.len().saturating_sub(1) {
            let (a, b, c) = (d(&pts[i - 1]), d(&pts[i]), d(&pts[i + 1]));
            if !(b <= a && b <= c && b < 10.0 * opts.threshold) {
                continue;
            }
            let (lo, hi) = (pts[i - 1].gamma, pts[i + 1].gamma);
            let m = 2 * opts.refine.max(1);
            let mut best = (b, pts[i].gamma);
            for k in 1..m {
                let g = lo + (hi - lo) * k as f64 / m as f64;
                let dist = self.distance_to_one(g, sign)?;
                if dist < best.0 {
                    best = (dist, g);
                }
            }
            if best.0 < opts.threshold {
                out.push(best.1);
            }
        }
        Ok(out)
    }

    /// Exceptional set: band edges with their resolution margins plus embedded candidates.
    pub fn exceptional_set(&self, scan: Option<&ScanReport>, radius: f64) -> Vec<ExceptionalPoint> {
        let mut out: Vec<ExceptionalPoint> = self
            .edge_margins()
            .into_iter()
            .map(|(value, r)| ExceptionalPoint {
                value,
                radius: r,
                embedded: false,
            })
            .collect();
        if let Some(s) = scan {
            out.extend(s.candidates_plus.iter().map(|&value| ExceptionalPoint {
                value,
                radius,
                embedded: true,
            }));
        }
        out.sort_by(|a, b| a.value.total_cmp(&b.value));
        out.dedup_by(|a, b| {
            let same = (a.value - b.value).abs() <= 1e-12 * b.value.abs().max(1.0);
            if same {
                b.radius = b.radius.max(a.radius);
                b.embedded |= a.embedded;
            }
            same
        });
        out
    }
}

trait ScaleInPlace {
    fn iter_mut_scaled(self, c: f64);
}

impl ScaleInPlace for faer::MatMut<'_, f64> {
    fn iter_mut_scaled(mut self, c: f64) {
        for j in 0..self.ncols() {
            for i in 0..self.nrows() {
                self[(i, j)] *= c;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action_angle::chart_point;
    use crate::steady_state::{solve_steady_state, AnsatzProfile, SolveOptions};
    use std::sync::LazyLock;

    fn grid(profile: AnsatzProfile, depth: f64, lmax: usize, n_e: usize) -> Arc<ModeGrid> {
        let st = solve_steady_state(profile, depth, SolveOptions::default()).unwrap();
        let bands = Arc::new(BandStructure::build(Arc::new(st), lmax).unwrap());
        let opts = GridOptions {
            lmax,
            n_energy: n_e,
            ..Default::default()
        };
        Arc::new(ModeGrid::new(bands, opts).unwrap())
    }

    static KING: LazyLock<Arc<ModeGrid>> =
        LazyLock::new(|| grid(AnsatzProfile::king(), 2.0, 3, 32));
    static KING_OP: LazyLock<AntonovOperator> =
        LazyLock::new(|| AntonovOperator::new(KING.clone(), 1.0).unwrap());

    #[test]
    fn modes_orthonormal_under_theta_rule() {
        let g = &*KING;
        let th = g.theta_nodes();
        for l in 1..=g.lmax {
            for k in 1..=g.lmax {
                let s: f64 =
                    th.iter().map(|&t| ModeGrid::mode(l, t) * ModeGrid::mode(k, t)).sum::<f64>()
                        / th.len() as f64;
                let want = if l == k { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn projection_examples() {
        let g = &*KING;
        let th = g.theta_nodes();
        let samples: Vec<Vec<f64>> = (0..g.n_energy)
            .map(|_| th.iter().map(|&t| ModeGrid::mode(1, t) + 0.5 * ModeGrid::mode(3, t)).collect())
            .collect();
        let c = g.project_modes(&samples).unwrap();
        for j in 0..g.n_energy {
            assert!((c[g.index(1, j)] - 1.0).abs() < 1e-12);
            assert!(c[g.index(2, j)].abs() < 1e-12);
            assert!((c[g.index(3, j)] - 0.5).abs() < 1e-12);
            assert!((g.synthesize(&c, j, 0.3) - (ModeGrid::mode(1, 0.3) + 0.5 * ModeGrid::mode(3, 0.3))).abs() < 1e-12);
        }
        let bad: Vec<Vec<f64>> = (0..g.n_energy)
            .map(|_| th.iter().map(|&t| (2.0 * PI * t).sin()).collect())
            .collect();
        assert!(g.project_modes(&bad).is_err());
    }

    #[test]
    fn x_rule_integrates_orbit_lengths() {
        // Σ ω_m over nodes below energy E_j equals x₊(E_j).
        let g = &*KING;
        let j = g.n_energy / 2;
        let s: f64 = g
            .x_nodes
            .iter()
            .filter(|n| n.top <= j)
            .map(|n| n.weight)
            .sum();
        assert!((s - g.records[j].x_plus).abs() < 1e-11 * s);
    }

    /// 4π∫(∫v g dv)² dx by direct quadrature in (x, v), for g given through its mode functions.
    fn oracle_quadratic_form(g: &ModeGrid, psi: &dyn Fn(usize, f64) -> f64, n: usize) -> f64 {
        let st = g.state();
        let xr = GaussLegendre::new(n);
        let vr = GaussLegendre::new(n);
        let emax = g.e_hi;
        let xmax = st.x_of_w(emax - st.emin);
        let gfun = |x: f64, v: f64| -> f64 {
            let e = st.u0(x) + 0.5 * v * v;
            if e <= g.e_lo || e >= g.e_hi {
                return 0.0;
            }
            let rec = EnergyRecord::new(st, e, ChartOptions { n_cheb: 32 }).unwrap();
            let t = rec.angle_clamped(st, x);
            let theta = if v >= 0.0 { t } else { 1.0 - t };
            let w = (st.phi_prime_abs(e).unwrap() / rec.period).sqrt();
            (1..=g.lmax).map(|l| psi(l, e) * w * ModeGrid::mode(l, theta)).sum()
        };
        // Substitution x = xmax sin(s) concentrates nodes at the support edge.
        8.0 * PI
            * xr.integrate(0.0, FRAC_PI_2, |s| {
                let x = xmax * s.sin();
                let vmax = (2.0 * (emax - st.u0(x))).max(0.0).sqrt();
                let m = vr.integrate(0.0, FRAC_PI_2, |r| {
                    let v = vmax * r.sin();
                    2.0 * v * gfun(x, v) * vmax * r.cos()
                });
                m * m * xmax * s.cos()
            })
    }

    #[test]
    fn quadratic_form_matches_phase_space_oracle() {
        let g = grid(AnsatzProfile::king(), 2.0, 2, 48);
        let op = AntonovOperator::new(g.clone(), 1.0).unwrap();
        let psi = |l: usize, e: f64| -> f64 {
            let s = (e - g.e_lo) / (g.e_hi - g.e_lo);
            if l == 1 { (1.0 + s) * (PI * s).sin() } else { 0.3 * s * (1.0 - s) }
        };
        let c: Vec<f64> = (1..=g.lmax)
            .flat_map(|l| (0..g.n_energy).map(move |j| (l, j)))
            .map(|(l, j)| g.q[j].sqrt() * psi(l, g.energies[j]))
            .collect();
        let quad: f64 = (0..c.len())
            .map(|i| (0..c.len()).map(|k| c[i] * op.b[(i, k)] * c[k]).sum::<f64>())
            .sum();
        let want = oracle_quadratic_form(&g, &psi, 30);
        assert!((quad - want).abs() < 1e-4 * want, "{quad} vs {want}");
    }

    #[test]
    fn b_symmetric_psd_and_a_positive() {
        let op = &*KING_OP;
        let (defect, norm) = op.b_symmetry_defect().unwrap();
        assert!(defect <= 1e-8 * norm);
        let eb = linalg::sym_eigenvalues(op.b.as_ref()).unwrap();
        assert!(eb[0] >= -1e-8 * norm);
        let rep = op.eigen().unwrap();
        let beta1 = op.grid.bands.modes[0].beta_min;
        assert!(rep.values[0] > 0.0);
        assert!(rep.values[0] <= beta1 + norm);
    }

    #[test]
    fn zero_coupling_gives_free_spectrum() {
        let op = AntonovOperator::new(KING.clone(), 0.0).unwrap();
        let rep = op.eigen().unwrap();
        let mut want = op.a0.clone();
        want.sort_by(f64::total_cmp);
        for (a, b) in rep.values.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12 * b);
        }
        assert_eq!(op.lowrank.rank(), 0);
        let g = op.gamma_grid(5, 1e-3);
        assert!(g.iter().all(|&x| op.distance_to_one(x, 1.0).unwrap() == 1.0));
    }

    #[test]
    fn velocity_moment_is_odd_and_supported() {
        let g = &*KING;
        let st = g.state();
        let n = g.dim();
        let c: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.4).collect();
        let xs = [0.1 * st.r0, 0.5 * st.r0, 0.9 * st.r0];
        let mp = g.velocity_moment(&c, &xs);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        let mm = g.velocity_moment(&c, &neg);
        for (a, b) in mp.iter().zip(&mm) {
            assert!((a + b).abs() < 1e-12 * a.abs().max(1e-12));
        }
        assert!(g.velocity_moment(&vec![0.0; n], &xs).iter().all(|&v| v == 0.0));
        let j = 5;
        let mut delta = vec![0.0; n];
        delta[g.index(2, j)] = 1.0;
        let xp = g.records[j].x_plus;
        let out = g.velocity_moment(&delta, &[0.5 * xp, 1.01 * xp, 1.5 * xp]);
        assert!(out[0] != 0.0 && out[1] == 0.0 && out[2] == 0.0);
        assert_eq!(g.velocity_moment(&c, &[2.0 * st.r0])[0], 0.0);
    }

    #[test]
    fn moment_matrix_matches_moment() {
        let g = &*KING;
        let n = g.dim();
        let c: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).cos()).collect();
        let xs: Vec<f64> = (0..21).map(|i| g.state().r0 * (i as f64 / 10.0 - 1.0)).collect();
        let m = g.moment_matrix(&xs);
        let direct = g.velocity_moment(&c, &xs);
        for (i, d) in direct.iter().enumerate() {
            let v: f64 = (0..n).map(|k| m[(i, k)] * c[k]).sum();
            assert!((v - d).abs() <= 1e-12 * d.abs().max(1.0));
        }
    }

    #[test]
    fn quadratic_form_equals_moment_integral() {
        let g = &*KING;
        let op = &*KING_OP;
        let n = g.dim();
        let c: Vec<f64> = (0..n).map(|i| ((i * 31) % 17) as f64 / 17.0 - 0.5).collect();
        let xs: Vec<f64> = g.x_nodes.iter().map(|x| x.x).collect();
        let m = g.velocity_moment(&c, &xs);
        let direct: f64 = m
            .iter()
            .zip(&g.x_nodes)
            .map(|(m, nd)| 2.0 * nd.weight * (m / (4.0 * PI)).powi(2))
            .sum::<f64>()
            * 4.0 * PI;
        let quad: f64 = (0..n)
            .map(|i| (0..n).map(|k| c[i] * op.b[(i, k)] * c[k]).sum::<f64>())
            .sum();
        assert!((direct - quad).abs() < 1e-6 * quad, "{direct} vs {quad}");
    }

    #[test]
    fn free_resolvent_examples() {
        let op = &*KING_OP;
        let n = op.dim();
        let mut f = vec![C64::new(0.0, 0.0); n];
        f[3] = C64::new(1.0, 0.0);
        let r = op.resolvent_free(C64::new(-1.0, 0.0), &f).unwrap();
        assert!((r[3].re - 1.0 / (op.a0[3] + 1.0)).abs() < 1e-15);
        let inside = 0.5 * (op.grid.bands.modes[0].beta_min + op.grid.bands.modes[0].beta_max);
        assert!(op.resolvent_free(C64::new(inside, 0.0), &f).is_err());
        let gap = 0.5 * op.grid.bands.modes[0].beta_min;
        let rr = op.resolvent(C64::new(gap, 0.0), &f).unwrap();
        assert!(rr.iter().all(|z| z.im == 0.0));
    }

    #[test]
    fn second_resolvent_identity() {
        let op = &*KING_OP;
        let n = op.dim();
        let z = C64::new(40.0, 3.0);
        let f: Vec<C64> = (0..n).map(|i| C64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let ra = op.resolvent(z, &f).unwrap();
        let r0 = op.resolvent_free(z, &f).unwrap();
        let br0: Vec<C64> = (0..n)
            .map(|i| (0..n).map(|k| op.b[(i, k)] * r0[k]).sum())
            .collect();
        let rabr0 = op.resolvent(z, &br0).unwrap();
        let res: f64 = (0..n).map(|i| (ra[i] - r0[i] - rabr0[i]).norm_sqr()).sum::<f64>().sqrt();
        let scale: f64 = ra.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(res <= 1e-8 * scale);
    }

    #[test]
    fn boundary_value_in_gap_is_real() {
        let op = &*KING_OP;
        let gap = 0.5 * op.grid.bands.modes[0].beta_min;
        let m = op.boundary_br0(gap, 1.0, 0.0).unwrap();
        let im = (0..op.dim())
            .flat_map(|i| (0..op.dim()).map(move |k| (i, k)))
            .fold(0.0f64, |a, (i, k)| a.max(m[(i, k)].im.abs()));
        assert!(im <= 1e-10);
    }

    #[test]
    fn epsilon_sweep_converges_to_boundary_value() {
        let op = &*KING_OP;
        let band = op.grid.bands.modes[0];
        let gamma = band.beta_min + 0.37 * (band.beta_max - band.beta_min);
        let limit = op.boundary_br0(gamma, 1.0, 0.0).unwrap();
        let mut prev = f64::INFINITY;
        for eps in [1e-2, 1e-3, 1e-4] {
            let m = op.boundary_br0(gamma, 1.0, eps).unwrap();
            let diff = Mat::from_fn(op.dim(), op.dim(), |i, k| m[(i, k)] - limit[(i, k)]);
            let d = linalg::norm2(diff.as_ref()).unwrap();
            assert!(d < prev, "eps {eps}: {d} vs {prev}");
            prev = d;
        }
    }

    #[test]
    fn boundary_matches_direct_resolvent_for_moderate_eps() {
        // With eps much larger than the β-grid spacing the plain diagonal resolvent is accurate.
        let op = &*KING_OP;
        let band = op.grid.bands.modes[0];
        let gamma = band.beta_min + 0.5 * (band.beta_max - band.beta_min);
        let eps = 0.5 * (band.beta_max - band.beta_min);
        let fb = op.free_boundary(gamma, 1.0, eps).unwrap();
        let n = op.dim();
        let f: Vec<C64> = (0..n)
            .map(|i| {
                let j = i % op.grid.n_energy;
                C64::new(op.grid.q[j].sqrt() * (op.grid.energies[j] - op.grid.e_lo), 0.0)
            })
            .collect();
        let with = fb.apply(op.grid.n_energy, &f);
        let plain = op.resolvent_free(C64::new(gamma, eps), &f).unwrap();
        let d: f64 = with.iter().zip(&plain).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let s: f64 = plain.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        assert!(d < 1e-6 * s, "{d} vs {s}");
    }

    #[test]
    fn birman_schwinger_spectrum_matches_dense_boundary() {
        let op = &*KING_OP;
        let band = op.grid.bands.modes[1];
        let gamma = band.beta_min + 0.41 * (band.beta_max - band.beta_min);
        let fb = op.free_boundary(gamma, 1.0, 0.0).unwrap();
        let small = linalg::eigenvalues(op.birman_schwinger(&fb).as_ref()).unwrap();
        let dense = linalg::eigenvalues(op.boundary_br0(gamma, 1.0, 0.0).unwrap().as_ref()).unwrap();
        let top = |v: &[C64]| v.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let (a, b) = (top(&small), top(&dense));
        assert!((a - b).abs() < 1e-8 * a, "{a} vs {b}");
        for z in small.iter().filter(|z| z.norm() > 1e-6 * a) {
            let d = dense.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min);
            assert!(d < 1e-7 * a);
        }
    }

    #[test]
    fn birman_schwinger_counts_gap_eigenvalues() {
        // Below the band: #{eig(𝒜₀ − cℬ) < γ} = #{μ(γ) > 1/c}, monotone in c.
        let g = KING.clone();
        let gamma = 0.9 * g.bands.modes[0].beta_min.min(g.a0_diag().iter().cloned().fold(f64::INFINITY, f64::min));
        let mut prev = 0;
        for c in [0.5, 1.0, 4.0, 16.0] {
            let op = AntonovOperator::new(g.clone(), c).unwrap();
            let below = linalg::sym_eigenvalues(op.a.as_ref()).unwrap().iter().filter(|&&v| v < gamma).count();
            let fb = op.free_boundary(gamma, 1.0, 0.0).unwrap();
            let mu = linalg::eigenvalues(op.birman_schwinger(&fb).as_ref()).unwrap();
            let above = mu.iter().filter(|z| z.re > 1.0).count();
            assert_eq!(below, above, "c = {c}");
            assert!(below >= prev);
            prev = below;
        }
    }

    #[test]
    fn scan_flags_coincide() {
        let op = &*KING_OP;
        let gs = op.gamma_grid(24, 1e-3);
        let rep = op.scan_embedded(&gs, ScanOptions::default()).unwrap();
        for p in &rep.points {
            assert!((p.dist_plus - p.dist_minus).abs() < 1e-8);
        }
        assert_eq!(rep.candidates_plus.len(), rep.candidates_minus.len());
        let ex = op.exceptional_set(Some(&rep), 0.1);
        assert!(ex.windows(2).all(|w| w[0].value < w[1].value));
    }

    #[test]
    fn toy_grid_is_one_by_one() {
        let st = solve_steady_state(AnsatzProfile::king(), 2.0, SolveOptions::default()).unwrap();
        let bands = Arc::new(BandStructure::build(Arc::new(st), 1).unwrap());
        let opts = GridOptions {
            lmax: 1,
            n_energy: 1,
            ..Default::default()
        };
        let g = Arc::new(ModeGrid::new(bands, opts).unwrap());
        let b = g.build_b();
        assert_eq!((b.nrows(), b.ncols()), (1, 1));
        assert!(b[(0, 0)] >= 0.0);
    }

    #[test]
    fn near_edge_boundary_rejected() {
        let op = &*KING_OP;
        let e = op.grid.bands.modes[0].beta_min;
        assert!(op.boundary_br0(e, 1.0, 0.0).is_err());
        assert!(op.gamma_grid(200, 0.0).iter().all(|&g| !op.near_edge(g)));
    }

    #[test]
    fn discrete_eigenvalues_stabilize() {
        let lowest = |n_e: usize| {
            let op = AntonovOperator::new(grid(AnsatzProfile::polytrope(1.0).unwrap(), 1.0, 2, n_e), 1.0).unwrap();
            let rep = op.eigen().unwrap();
            rep.values
                .iter()
                .zip(&rep.classes)
                .filter(|(_, c)| **c == EigenClass::Discrete)
                .map(|(v, _)| *v)
                .collect::<Vec<_>>()
        };
        let (a, b) = (lowest(32), lowest(64));
        assert!(!a.is_empty() && a.len() == b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 5e-4 * y, "{x} {y}");
        }
    }

    #[test]
    fn holder_and_compactness_reports() {
        let op = &*KING_OP;
        let (alpha, samples) = op.holder_fit(1, 4).unwrap();
        assert_eq!(samples.len(), 4);
        assert!(alpha.is_finite());
        let s = op.br0_singular_values(C64::new(50.0, 5.0)).unwrap();
        assert!(s.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        assert!(op.br0_singular_values(C64::new(50.0, 0.0)).is_err());
    }

    #[test]
    fn harmonic_exceptional_set_is_collapsed_bands() {
        let st = Arc::new(SteadyState::harmonic(1.0, -1.0, 2.0).unwrap());
        let bands = Arc::new(BandStructure::build(st.clone(), 2).unwrap());
        let e = bands.exceptional_edges();
        assert_eq!(e.len(), 2);
        assert!((e[0] - 4.0).abs() < 1e-10 && (e[1] - 16.0).abs() < 1e-10);
        let (x, _) = chart_point(&st, 0.25, 0.0).unwrap();
        assert!(x.abs() < 1e-15);
    }
}
