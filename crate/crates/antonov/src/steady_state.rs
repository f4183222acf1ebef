//! Plane-symmetric steady states for polytropic and King ansatz functions.
//!
//! The potential is handled through its depth profile W(x) = U₀(x) − E_min, which
//! solves W″ = 4π r(h − W) with W(0) = W′(0) = 0, where r is the density as a function
//! of the local depth below the cutoff energy. The auxiliary quantity
//! N = W′² − 2 W W″ is carried as a third ODE component so that period derivatives
//! can be evaluated without cancellation.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::ode::{self, Controls};

/// Shape of the ansatz function φ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    /// φ(E) = (E₀ − E)₊ᵏ.
    Polytrope,
    /// φ(E) = (e^{E₀−E} − 1)₊.
    King,
}

/// Ansatz function together with its cutoff energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnsatzProfile {
    pub kind: ProfileKind,
    /// Polytropic exponent; ignored for King profiles.
    pub k: f64,
    /// Cutoff energy, fixed once a steady state has been normalized.
    pub e0: f64,
}

impl AnsatzProfile {
    pub fn polytrope(k: f64) -> Result<Self> {
        if !(k >= 1.0) || !k.is_finite() {
            return Err(Error::domain(format!(
                "polytropic exponent must satisfy k >= 1, got {k}"
            )));
        }
        Ok(Self {
            kind: ProfileKind::Polytrope,
            k,
            e0: 0.0,
        })
    }

    pub fn king() -> Self {
        Self {
            kind: ProfileKind::King,
            k: 0.0,
            e0: 0.0,
        }
    }

    /// φ(E).
    pub fn phi(&self, e: f64) -> f64 {
        let d = self.e0 - e;
        if d <= 0.0 {
            return 0.0;
        }
        match self.kind {
            ProfileKind::Polytrope => d.powf(self.k),
            ProfileKind::King => d.exp_m1(),
        }
    }
}

/// |φ′(E)|, the weight of the energy space.
///
/// At E = E₀ the weight of a polytrope with k > 1 vanishes and a domain error is
/// returned; above E₀ the weight is identically zero.
pub fn phi_prime_abs(profile: &AnsatzProfile, e: f64) -> Result<f64> {
    let d = profile.e0 - e;
    if d < 0.0 {
        return Err(Error::domain(format!(
            "energy {e} lies above the cutoff {}; the weight vanishes there",
            profile.e0
        )));
    }
    match profile.kind {
        ProfileKind::King => Ok(d.exp()),
        ProfileKind::Polytrope => {
            if profile.k == 1.0 {
                Ok(1.0)
            } else if d == 0.0 {
                Err(Error::domain(
                    "weight |phi'| vanishes at the cutoff energy for k > 1",
                ))
            } else {
                Ok(profile.k * d.powf(profile.k - 1.0))
            }
        }
    }
}

fn check_depth(d: f64) -> Result<()> {
    if d < 0.0 || d.is_nan() {
        return Err(Error::domain(format!("depth must be nonnegative, got {d}")));
    }
    Ok(())
}

fn polytrope_constant(k: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    (2.0 * PI).sqrt() * (ln_gamma(k + 1.0) - ln_gamma(k + 1.5)).exp()
}

/// Series √(2π) Σ_{n≥1} d^{n+s}/Γ(n+1+s) for s = ±1/2; exact for King densities.
fn king_series(d: f64, s: f64) -> f64 {
    // Γ(3/2 + s) for n = 1.
    let mut gamma = if s > 0.0 { 0.75 * PI.sqrt() } else { 0.5 * PI.sqrt() };
    let mut pow = d.powf(1.0 + s);
    let mut sum = 0.0;
    for n in 1..200 {
        let term = pow / gamma;
        sum += term;
        if term <= 1e-17 * sum {
            break;
        }
        pow *= d;
        gamma *= n as f64 + 1.0 + s;
    }
    (2.0 * PI).sqrt() * sum
}

/// Density at depth d = E₀ − U below the cutoff: 2∫₀^{√(2d)} φ(E₀ − d + v²/2) dv.
pub fn rho_of_depth(profile: &AnsatzProfile, d: f64) -> Result<f64> {
    check_depth(d)?;
    Ok(rho_unchecked(profile, d))
}

/// Derivative of [`rho_of_depth`] with respect to the depth.
pub fn rho_prime_of_depth(profile: &AnsatzProfile, d: f64) -> Result<f64> {
    check_depth(d)?;
    Ok(rho_prime_unchecked(profile, d))
}

fn rho_unchecked(profile: &AnsatzProfile, d: f64) -> f64 {
    if d <= 0.0 {
        return 0.0;
    }
    match profile.kind {
        ProfileKind::Polytrope => polytrope_constant(profile.k) * d.powf(profile.k + 0.5),
        ProfileKind::King => {
            if d < 4.0 {
                king_series(d, 0.5)
            } else {
                use statrs::function::erf::erf;
                (2.0 * PI).sqrt() * d.exp() * erf(d.sqrt()) - 2.0 * (2.0 * d).sqrt()
            }
        }
    }
}

fn rho_prime_unchecked(profile: &AnsatzProfile, d: f64) -> f64 {
    if d <= 0.0 {
        return 0.0;
    }
    match profile.kind {
        ProfileKind::Polytrope => {
            let k = profile.k;
            polytrope_constant(k) * (k + 0.5) * d.powf(k - 0.5)
        }
        ProfileKind::King => {
            use statrs::function::erf::erf;
            (2.0 * PI).sqrt() * d.exp() * erf(d.sqrt())
        }
    }
}

/// Numerical controls for the shooting integration.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Target tolerance of the steady-state invariants.
    pub tol: f64,
    /// Upper bound on the support radius, in units of the central length scale √(2h/W″(0)).
    pub x_bound: f64,
    pub max_steps: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            x_bound: 1e4,
            max_steps: 200_000,
        }
    }
}

/// Admissible depth range searched by [`solve_for_mass`].
#[derive(Debug, Clone, Copy)]
pub struct DepthRange {
    pub h_min: f64,
    pub h_max: f64,
}

impl Default for DepthRange {
    fn default() -> Self {
        Self {
            h_min: 1e-6,
            h_max: 100.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
enum Backend {
    /// Accepted integrator nodes (x, [W, W′, N]) on [0, R₀].
    Shooting { x: Vec<f64>, y: Vec<[f64; 3]> },
    /// Synthetic potential W = ω²x²/2 without self-consistency.
    Harmonic { omega: f64 },
}

/// Steady state (U₀, ρ₀) with its scalar invariants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SteadyState {
    pub profile: AnsatzProfile,
    /// Central depth h = E₀ − E_min.
    pub depth: f64,
    pub tol: f64,
    pub m0: f64,
    pub r0: f64,
    pub e0: f64,
    pub emin: f64,
    backend: Backend,
}

fn rhs(profile: AnsatzProfile, h: f64) -> impl Fn(f64, &[f64; 3]) -> [f64; 3] {
    move |_x, y| {
        let d = h - y[0];
        let r = rho_unchecked(&profile, d);
        let rp = rho_prime_unchecked(&profile, d);
        [y[1], 4.0 * PI * r, 8.0 * PI * rp * y[0] * y[1]]
    }
}

fn controls(tol: f64, scale: f64, max_steps: usize) -> Controls {
    let rtol = (tol * 1e-2).max(1e-14);
    Controls {
        rtol,
        atol: rtol * 1e-8,
        h_init: 1e-3 * scale,
        h_max: 0.05 * scale,
        max_steps,
    }
}

/// Solves for the steady state with central depth `depth`.
pub fn solve_steady_state(
    mut profile: AnsatzProfile,
    depth: f64,
    opts: SolveOptions,
) -> Result<SteadyState> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(Error::domain("depth must be positive"));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::domain("tolerance must be positive"));
    }
    if profile.kind == ProfileKind::Polytrope && !(profile.k >= 1.0) {
        return Err(Error::domain(format!(
            "polytropic exponent must satisfy k >= 1, got {}",
            profile.k
        )));
    }
    let a = 4.0 * PI * rho_unchecked(&profile, depth);
    let scale = (2.0 * depth / a).sqrt();
    let f = rhs(profile, depth);
    let ctl = controls(opts.tol, scale, opts.max_steps);
    let tr = ode::integrate(
        &f,
        0.0,
        [0.0; 3],
        opts.x_bound * scale,
        ctl,
        |_, y| y[0] >= depth,
    )?;
    let mut xs = tr.t;
    let mut ys = tr.y;
    let n = xs.len();
    if ys[n - 1][0] < depth {
        return Err(Error::solver(format!(
            "integration reached x = {} without attaining depth {depth}",
            xs[n - 1]
        )));
    }
    if ys.windows(2).any(|w| w[1][1] < w[0][1]) {
        return Err(Error::internal("W' is not monotone along the shooting orbit"));
    }
    // Locate W = h inside the last step.
    let x_prev = xs[n - 2];
    let y_prev = ys[n - 2];
    let (mut lo, mut hi) = (0.0, xs[n - 1] - x_prev);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (y, _) = ode::dp5_step(&f, x_prev, &y_prev, mid);
        if y[0] < depth {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let step = 0.5 * (lo + hi);
    let (mut y_end, _) = ode::dp5_step(&f, x_prev, &y_prev, step);
    y_end[0] = depth;
    xs[n - 1] = x_prev + step;
    ys[n - 1] = y_end;
    let r0 = xs[n - 1];
    let m0 = y_end[1] / (2.0 * PI);
    let e0 = 2.0 * PI * m0 * r0;
    let emin = e0 - depth;
    profile.e0 = e0;
    Ok(SteadyState {
        profile,
        depth,
        tol: opts.tol,
        m0,
        r0,
        e0,
        emin,
        backend: Backend::Shooting { x: xs, y: ys },
    })
}

/// Finds the steady state of total mass `m0_target` by bisection on the central depth.
pub fn solve_for_mass(
    profile: AnsatzProfile,
    m0_target: f64,
    opts: SolveOptions,
    range: DepthRange,
) -> Result<SteadyState> {
    if !(m0_target > 0.0) || !m0_target.is_finite() {
        return Err(Error::domain("target mass must be positive"));
    }
    if !(range.h_min > 0.0 && range.h_min < range.h_max) {
        return Err(Error::domain("depth range must satisfy 0 < h_min < h_max"));
    }
    let mass = |h: f64| solve_steady_state(profile, h, opts).map(|s| s.m0);
    // Expand a bracket geometrically from h = 1 (clamped into the range).
    let start = 1f64.clamp(range.h_min, range.h_max);
    let (mut lo, mut hi) = (start, start);
    let (mut m_lo, mut m_hi) = (mass(lo)?, mass(hi)?);
    while m_lo > m0_target && lo > range.h_min {
        hi = lo;
        m_hi = m_lo;
        lo = (lo * 0.25).max(range.h_min);
        m_lo = mass(lo)?;
    }
    while m_hi < m0_target && hi < range.h_max {
        lo = hi;
        m_lo = m_hi;
        hi = (hi * 4.0).min(range.h_max);
        m_hi = mass(hi)?;
    }
    if !(m_lo <= m0_target && m0_target <= m_hi) {
        return Err(Error::solver(format!(
            "target mass {m0_target} is outside the bracket [{m_lo}, {m_hi}] spanned by depths [{}, {}]",
            range.h_min, range.h_max
        )));
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        let st = solve_steady_state(profile, mid, opts)?;
        if (st.m0 - m0_target).abs() <= opts.tol * m0_target {
            return Ok(st);
        }
        if st.m0 < m0_target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            return Ok(st);
        }
    }
    Err(Error::solver("mass bisection did not converge"))
}

impl SteadyState {
    /// Synthetic state with U₀ = E_min + ω²x²/2, used as an oracle in downstream tests.
    ///
    /// The ansatz is the k = 1 polytrope so that the energy weight is identically one.
    pub fn harmonic(omega: f64, emin: f64, depth: f64) -> Result<Self> {
        if !(omega > 0.0) || !(depth > 0.0) {
            return Err(Error::domain("frequency and depth must be positive"));
        }
        let r0 = (2.0 * depth).sqrt() / omega;
        let e0 = emin + depth;
        let mut profile = AnsatzProfile::polytrope(1.0)?;
        profile.e0 = e0;
        Ok(Self {
            profile,
            depth,
            tol: 0.0,
            m0: omega * omega * r0 / (2.0 * PI),
            r0,
            e0,
            emin,
            backend: Backend::Harmonic { omega },
        })
    }

    pub fn is_harmonic(&self) -> bool {
        matches!(self.backend, Backend::Harmonic { .. })
    }

    /// (W, W′, N) at s = |x|; outside the support the potential continues linearly.
    pub fn depth_state(&self, x: f64) -> [f64; 3] {
        let s = x.abs();
        match &self.backend {
            Backend::Harmonic { omega } => {
                let w2 = omega * omega;
                [0.5 * w2 * s * s, w2 * s, 0.0]
            }
            Backend::Shooting { x: xs, y: ys } => {
                if s >= self.r0 {
                    let wp = 2.0 * PI * self.m0;
                    let w = self.depth + wp * (s - self.r0);
                    return [w, wp, wp * wp];
                }
                let i = xs.partition_point(|&t| t <= s).saturating_sub(1);
                let dx = s - xs[i];
                if dx == 0.0 {
                    return ys[i];
                }
                let f = rhs(self.profile, self.depth);
                ode::dp5_step(&f, xs[i], &ys[i], dx).0
            }
        }
    }

    /// W(x) = U₀(x) − E_min.
    pub fn w(&self, x: f64) -> f64 {
        self.depth_state(x)[0]
    }

    pub fn u0(&self, x: f64) -> f64 {
        self.emin + self.w(x)
    }

    pub fn du0(&self, x: f64) -> f64 {
        let wp = self.depth_state(x)[1];
        if x < 0.0 {
            -wp
        } else {
            wp
        }
    }

    /// U₀″(x), evaluated through the Poisson equation.
    pub fn d2u0(&self, x: f64) -> f64 {
        match &self.backend {
            Backend::Harmonic { omega } => omega * omega,
            Backend::Shooting { .. } => 4.0 * PI * self.rho0(x),
        }
    }

    pub fn rho0(&self, x: f64) -> f64 {
        match &self.backend {
            Backend::Harmonic { omega } => {
                if x.abs() <= self.r0 {
                    omega * omega / (4.0 * PI)
                } else {
                    0.0
                }
            }
            Backend::Shooting { .. } => {
                if x.abs() >= self.r0 {
                    return 0.0;
                }
                rho_unchecked(&self.profile, self.depth - self.w(x))
            }
        }
    }

    /// W″(0) = U₀″(0).
    pub fn curvature_at_center(&self) -> f64 {
        match &self.backend {
            Backend::Harmonic { omega } => omega * omega,
            Backend::Shooting { .. } => 4.0 * PI * rho_unchecked(&self.profile, self.depth),
        }
    }

    /// Derivative of W″ with respect to −W at the center, i.e. 4π r′(h).
    pub fn curvature_slope_at_center(&self) -> f64 {
        match &self.backend {
            Backend::Harmonic { .. } => 0.0,
            Backend::Shooting { .. } => 4.0 * PI * rho_prime_unchecked(&self.profile, self.depth),
        }
    }

    /// |φ′(E)|.
    pub fn phi_prime_abs(&self, e: f64) -> Result<f64> {
        phi_prime_abs(&self.profile, e)
    }

    /// Nonnegative root s of W(s) = u.
    pub fn x_of_w(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        let (xs, ys) = match &self.backend {
            Backend::Harmonic { omega } => return (2.0 * u).sqrt() / omega,
            Backend::Shooting { x, y } => (x, y),
        };
        if u >= self.depth {
            return self.r0 + (u - self.depth) / (2.0 * PI * self.m0);
        }
        let i = ys.partition_point(|y| y[0] <= u).saturating_sub(1);
        let (mut lo, mut hi) = (xs[i], xs[(i + 1).min(xs.len() - 1)]);
        let mut s = if i == 0 {
            (2.0 * u / self.curvature_at_center()).sqrt().clamp(lo, hi)
        } else {
            let (w0, w1) = (ys[i][0], ys[i + 1][0]);
            lo + (hi - lo) * (u - w0) / (w1 - w0)
        };
        for _ in 0..100 {
            let st = self.depth_state(s);
            let g = st[0] - u;
            if g == 0.0 {
                return s;
            }
            if g < 0.0 {
                lo = s;
            } else {
                hi = s;
            }
            let mut next = if st[1] > 0.0 { s - g / st[1] } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - s).abs() <= 4.0 * f64::EPSILON * s || hi - lo <= 4.0 * f64::EPSILON * hi {
                return next;
            }
            s = next;
        }
        s
    }

    /// Integrator nodes on [0, R₀] as (x, U₀, U₀′) triples; empty for the synthetic potential.
    pub fn nodes(&self) -> Vec<(f64, f64, f64)> {
        match &self.backend {
            Backend::Harmonic { .. } => Vec::new(),
            Backend::Shooting { x, y } => x
                .iter()
                .zip(y)
                .map(|(x, y)| (*x, self.emin + y[0], y[1]))
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("steady state serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::domain(format!("invalid steady state: {e}")))
    }
}
