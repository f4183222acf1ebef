//! Turning points, period function and the energy-angle chart.
//!
//! Orbit integrals are written in the variable φ ∈ [0, π/2] defined by
//! W(x) = ε sin²φ with ε = E − E_min. The inverse-square-root endpoint singularity
//! then disappears: dx/√(2(E − U₀)) = √(2ε) sinφ / W′(x) dφ.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quadrature::{Chebyshev, GaussLegendre};
use crate::steady_state::SteadyState;

/// Relative energy offset above E_min below which T′ is replaced by its asymptote.
pub const DERIVATIVE_FLOOR: f64 = 1e-6;

fn check_energy(state: &SteadyState, e: f64) -> Result<f64> {
    let eps = e - state.emin;
    if !(eps > 0.0) || e > state.e0 {
        return Err(Error::domain(format!(
            "energy {e} outside (E_min, E0] = ({}, {}]",
            state.emin, state.e0
        )));
    }
    Ok(eps)
}

/// sinφ / W′(x(ε sin²φ)), extended continuously to φ = 0.
fn g_integrand(state: &SteadyState, eps: f64, phi: f64) -> f64 {
    let s = phi.sin();
    if s == 0.0 {
        return 1.0 / (2.0 * eps * state.curvature_at_center()).sqrt();
    }
    let x = state.x_of_w(eps * s * s);
    let wp = state.depth_state(x)[1];
    s / wp
}

/// sinφ N / W′³ in the same variable, extended continuously to φ = 0.
fn n_integrand(state: &SteadyState, eps: f64, phi: f64) -> f64 {
    let s = phi.sin();
    if s == 0.0 {
        return 0.0;
    }
    let x = state.x_of_w(eps * s * s);
    let [_, wp, n] = state.depth_state(x);
    s * n / (wp * wp * wp)
}

/// Positive turning point x₊(E).
pub fn turning_point(state: &SteadyState, e: f64) -> Result<f64> {
    let eps = check_energy(state, e)?;
    if e == state.e0 {
        return Ok(state.r0);
    }
    Ok(state.x_of_w(eps))
}

fn adaptive_phi_integral(f: impl Fn(f64) -> f64, tol: f64) -> Result<f64> {
    let mut n = 32;
    let mut prev = GaussLegendre::new(n).integrate(0.0, FRAC_PI_2, &f);
    while n < 1024 {
        n *= 2;
        let cur = GaussLegendre::new(n).integrate(0.0, FRAC_PI_2, &f);
        if (cur - prev).abs() <= tol * cur.abs().max(1e-300) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::solver(format!(
        "orbit quadrature did not reach tolerance {tol:e}; last estimate {prev}"
    )))
}

/// Default relative tolerance for stand-alone orbit quadratures.
pub const QUAD_TOL: f64 = 1e-11;

/// Period T(E) = 4∫₀^{x₊} (2(E − U₀))^{−1/2} dx.
pub fn period(state: &SteadyState, e: f64) -> Result<f64> {
    let eps = check_energy(state, e)?;
    let i = adaptive_phi_integral(|p| g_integrand(state, eps, p), QUAD_TOL)?;
    Ok(4.0 * (2.0 * eps).sqrt() * i)
}

/// lim_{E↓E_min} T(E) = 2π/√(U₀″(0)).
pub fn period_limit(state: &SteadyState) -> f64 {
    2.0 * PI / state.curvature_at_center().sqrt()
}

/// lim_{E↓E_min} T′(E) = π² r′(h)/a^{3/2} with a = U₀″(0) and r the density in depth.
pub fn period_derivative_limit(state: &SteadyState) -> f64 {
    let a = state.curvature_at_center();
    PI * state.curvature_slope_at_center() / (4.0 * a.powf(1.5))
}

/// T′(E) = (2/ε)∫₀^{x₊} N/W′² (2(E − U₀))^{−1/2} dx with N = W′² − 2 W W″.
pub fn period_derivative(state: &SteadyState, e: f64) -> Result<f64> {
    let eps = check_energy(state, e)?;
    if eps < DERIVATIVE_FLOOR * state.depth {
        return Ok(period_derivative_limit(state));
    }
    let i = adaptive_phi_integral(|p| n_integrand(state, eps, p), QUAD_TOL)?;
    Ok(2.0 * 2f64.sqrt() / eps.sqrt() * i)
}

/// Chart resolution.
#[derive(Debug, Clone, Copy)]
pub struct ChartOptions {
    /// Chebyshev points per energy record.
    pub n_cheb: usize,
}

impl Default for ChartOptions {
    fn default() -> Self {
        Self { n_cheb: 64 }
    }
}

/// Per-energy orbit data: Chebyshev model of sinφ/W′ and its antiderivative Φ.
#[derive(Debug, Clone)]
pub struct EnergyRecord {
    pub energy: f64,
    pub x_plus: f64,
    pub period: f64,
    pub period_derivative: f64,
    eps: f64,
    g: Chebyshev,
    big_phi: Chebyshev,
    quarter: f64,
}

impl EnergyRecord {
    pub fn new(state: &SteadyState, e: f64, opts: ChartOptions) -> Result<Self> {
        let eps = check_energy(state, e)?;
        let pts = Chebyshev::points(0.0, FRAC_PI_2, opts.n_cheb);
        let vals: Vec<f64> = pts.iter().map(|&p| g_integrand(state, eps, p)).collect();
        let g = Chebyshev::from_samples(0.0, FRAC_PI_2, &vals);
        let big_phi = g.integral();
        let quarter = big_phi.right_value();
        Ok(Self {
            energy: e,
            x_plus: turning_point(state, e)?,
            period: 4.0 * (2.0 * eps).sqrt() * quarter,
            period_derivative: period_derivative(state, e)?,
            eps,
            g,
            big_phi,
            quarter,
        })
    }

    /// Relative size of the trailing Chebyshev coefficients of the orbit integrand.
    pub fn resolution(&self) -> f64 {
        self.g.tail_ratio()
    }

    /// θ(x, E) ∈ [0, 1/2]; `None` when x lies outside [x₋, x₊].
    pub fn angle(&self, state: &SteadyState, x: f64) -> Option<f64> {
        let w = state.w(x);
        if w > self.eps * (1.0 + 1e-12) {
            return None;
        }
        let phi = (w / self.eps).sqrt().min(1.0).asin();
        let frac = self.big_phi.eval(phi) / self.quarter;
        Some(0.25 + 0.25 * x.signum() * frac.clamp(0.0, 1.0))
    }

    /// θ at a point with W(x) = u and ε − u = gap on the side `sign` of the center.
    ///
    /// Passing the gap separately avoids cancellation near the turning point.
    pub fn angle_at_depth(&self, u: f64, gap: f64, sign: f64) -> f64 {
        let phi = u.max(0.0).sqrt().atan2(gap.max(0.0).sqrt());
        let frac = (self.big_phi.eval(phi) / self.quarter).clamp(0.0, 1.0);
        0.25 + 0.25 * sign * frac
    }

    /// ε = E − E_min.
    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// θ(x, E) clamped to 0 left of x₋ and to 1/2 right of x₊.
    pub fn angle_clamped(&self, state: &SteadyState, x: f64) -> f64 {
        self.angle(state, x)
            .unwrap_or(if x < 0.0 { 0.0 } else { 0.5 })
    }

    /// φ ∈ [0, π/2] with Φ(φ) = target, by safeguarded Newton.
    fn invert_phi(&self, target: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, FRAC_PI_2);
        let mut p = FRAC_PI_2 * target / self.quarter;
        for _ in 0..60 {
            let r = self.big_phi.eval(p) - target;
            if r < 0.0 {
                lo = p;
            } else {
                hi = p;
            }
            let d = self.g.eval(p);
            let mut next = p - r / d;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - p).abs() <= 1e-15 || hi - lo <= 1e-15 {
                return next;
            }
            p = next;
        }
        p
    }

    /// (x, v) at angle θ ∈ [0, 1).
    pub fn chart_point(&self, state: &SteadyState, theta: f64) -> (f64, f64) {
        let t = theta.rem_euclid(1.0);
        let (half, sign_v) = if t <= 0.5 { (t, 1.0) } else { (1.0 - t, -1.0) };
        let s = 4.0 * (half - 0.25) * self.quarter;
        let p = self.invert_phi(s.abs());
        let sp = p.sin();
        let x = s.signum() * state.x_of_w(self.eps * sp * sp);
        let v = (2.0 * self.eps).sqrt() * p.cos();
        (x, sign_v * v)
    }
}

/// θ(x, E) for a single energy; x outside [x₋, x₊] is clamped and flagged.
///
/// Returns the angle and whether clamping occurred.
pub fn angle(state: &SteadyState, x: f64, e: f64) -> Result<(f64, bool)> {
    let rec = EnergyRecord::new(state, e, ChartOptions::default())?;
    Ok(match rec.angle(state, x) {
        Some(t) => (t, false),
        None => (rec.angle_clamped(state, x), true),
    })
}

/// Energy-angle chart tabulated on an energy grid.
#[derive(Debug, Clone)]
pub struct ActionAngleChart {
    pub state: Arc<SteadyState>,
    pub records: Vec<EnergyRecord>,
    pub opts: ChartOptions,
}

impl ActionAngleChart {
    /// Builds records at the given energies in parallel.
    pub fn build(state: Arc<SteadyState>, energies: &[f64], opts: ChartOptions) -> Result<Self> {
        let records = energies
            .par_iter()
            .map(|&e| EnergyRecord::new(&state, e, opts))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            state,
            records,
            opts,
        })
    }

    /// Builds records on `n` energies uniformly spaced in (E_min, E₀].
    pub fn uniform(state: Arc<SteadyState>, n: usize, opts: ChartOptions) -> Result<Self> {
        let (a, h) = (state.emin, state.depth);
        let energies: Vec<f64> = (1..=n).map(|j| a + h * j as f64 / n as f64).collect();
        Self::build(state, &energies, opts)
    }

    fn record_for(&self, e: f64) -> Result<std::borrow::Cow<'_, EnergyRecord>> {
        if let Some(r) = self.records.iter().find(|r| r.energy == e) {
            return Ok(std::borrow::Cow::Borrowed(r));
        }
        Ok(std::borrow::Cow::Owned(EnergyRecord::new(
            &self.state,
            e,
            self.opts,
        )?))
    }

    /// (x, v) at angle θ and energy E.
    pub fn chart_point(&self, theta: f64, e: f64) -> Result<(f64, f64)> {
        let r = self.record_for(e)?;
        Ok(r.chart_point(&self.state, theta))
    }

    /// θ(x, E) with the clamping convention outside the orbit.
    pub fn angle(&self, x: f64, e: f64) -> Result<f64> {
        let r = self.record_for(e)?;
        Ok(r.angle_clamped(&self.state, x))
    }

    /// Rows (E, x₊, T, T′) of the tabulated records.
    pub fn table(&self) -> Vec<[f64; 4]> {
        self.records
            .iter()
            .map(|r| [r.energy, r.x_plus, r.period, r.period_derivative])
            .collect()
    }
}

/// chart_point for a single energy without a prebuilt chart.
pub fn chart_point(state: &SteadyState, theta: f64, e: f64) -> Result<(f64, f64)> {
    Ok(EnergyRecord::new(state, e, ChartOptions::default())?.chart_point(state, theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::steady_state::{solve_steady_state, AnsatzProfile, SolveOptions};
    use proptest::prelude::*;

    fn poly() -> SteadyState {
        solve_steady_state(AnsatzProfile::polytrope(1.0).unwrap(), 1.0, SolveOptions::default())
            .unwrap()
    }

    fn king() -> SteadyState {
        solve_steady_state(AnsatzProfile::king(), 2.0, SolveOptions::default()).unwrap()
    }

    /// Direct orbit integral in x with the substitution x = x₊ sin ψ (independent of the φ chart).
    fn oracle_period(st: &SteadyState, e: f64) -> f64 {
        let xp = oracle_turning_point(st, e);
        let rule = GaussLegendre::new(400);
        4.0 * rule.integrate(0.0, FRAC_PI_2, |psi| {
            let x = xp * psi.sin();
            let gap = e - st.u0(x);
            if gap <= 0.0 {
                return 0.0;
            }
            xp * psi.cos() / (2.0 * gap).sqrt()
        })
    }

    fn oracle_turning_point(st: &SteadyState, e: f64) -> f64 {
        let nodes = st.nodes();
        let i = nodes.iter().position(|n| n.1 >= e).unwrap();
        let (mut lo, mut hi) = (nodes[i - 1].0, nodes[i].0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if st.u0(mid) < e {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn harmonic_oracles() {
        let h = SteadyState::harmonic(1.0, -1.0, 2.0).unwrap();
        assert!((turning_point(&h, -0.5).unwrap() - 1.0).abs() < 1e-15);
        for e in [-0.999, -0.5, 0.3, 1.0] {
            assert!((period(&h, e).unwrap() - 2.0 * PI).abs() < 1e-12);
            assert_eq!(period_derivative(&h, e).unwrap(), 0.0);
        }
        let rec = EnergyRecord::new(&h, -0.5, ChartOptions::default()).unwrap();
        let t = rec.angle(&h, 1.0 / 2f64.sqrt()).unwrap();
        assert!((t - 0.375).abs() < 1e-13);
        let (x, v) = rec.chart_point(&h, 0.125);
        assert!((x + 0.5f64.sqrt()).abs() < 1e-13);
        assert!((v - 0.5f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn turning_point_matches_bisection_oracle() {
        let st = poly();
        let e = st.emin + 0.5 * st.depth;
        let got = turning_point(&st, e).unwrap();
        assert!((got - oracle_turning_point(&st, e)).abs() < 1e-10);
        assert_eq!(turning_point(&st, st.e0).unwrap(), st.r0);
        assert!(turning_point(&st, st.emin).is_err());
    }

    #[test]
    fn period_matches_direct_quadrature() {
        for st in [poly(), king()] {
            for f in [0.1, 0.5, 0.9] {
                let e = st.emin + f * st.depth;
                let got = period(&st, e).unwrap();
                let want = oracle_period(&st, e);
                assert!((got - want).abs() < 1e-9 * want, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn period_limits() {
        let st = king();
        let lim = period_limit(&st);
        assert!((lim - (PI / st.rho0(0.0)).sqrt()).abs() < 1e-12 * lim);
        let e = st.emin + 1e-7 * st.depth;
        assert!((period(&st, e).unwrap() - lim).abs() < 1e-5 * lim);
        let tp = period_derivative(&st, st.emin + 1e-4 * st.depth).unwrap();
        let tl = period_derivative_limit(&st);
        assert!((tp - tl).abs() < 1e-3 * tl, "{tp} vs {tl}");
    }

    #[test]
    fn period_derivative_matches_finite_differences() {
        for st in [poly(), king()] {
            let d = 1e-5 * st.depth;
            for f in [0.2, 0.5, 0.8, 0.999] {
                let e = st.emin + f * st.depth;
                let fd = (period(&st, e + d).unwrap() - period(&st, e - d).unwrap()) / (2.0 * d);
                let got = period_derivative(&st, e).unwrap();
                assert!(got > 0.0);
                assert!((got - fd).abs() < 1e-4 * got, "{got} vs {fd}");
            }
            assert!(period_derivative(&st, st.e0).unwrap().is_finite());
        }
    }

    #[test]
    fn angle_landmarks() {
        let st = king();
        let e = st.emin + 0.7 * st.depth;
        let rec = EnergyRecord::new(&st, e, ChartOptions::default()).unwrap();
        assert!((rec.angle(&st, 0.0).unwrap() - 0.25).abs() < 1e-15);
        assert!((rec.angle(&st, rec.x_plus).unwrap() - 0.5).abs() < 1e-12);
        assert!(rec.angle(&st, -rec.x_plus).unwrap().abs() < 1e-12);
        let (t, flagged) = angle(&st, 2.0 * rec.x_plus, e).unwrap();
        assert!(flagged && t == 0.5);
        let (x, v) = rec.chart_point(&st, 0.0);
        assert!((x + rec.x_plus).abs() < 1e-10 && v.abs() < 1e-7);
        let (x, v) = rec.chart_point(&st, 0.25);
        assert!(x.abs() < 1e-15 && (v - (2.0 * (e - st.emin)).sqrt()).abs() < 1e-13);
        assert!(rec.resolution() < 1e-12);
    }

    #[test]
    fn jacobian_equals_period() {
        let st = poly();
        let e = st.emin + 0.6 * st.depth;
        let rec = EnergyRecord::new(&st, e, ChartOptions::default()).unwrap();
        let de = 1e-6 * st.depth;
        let rp = EnergyRecord::new(&st, e + de, ChartOptions::default()).unwrap();
        let rm = EnergyRecord::new(&st, e - de, ChartOptions::default()).unwrap();
        for th in [0.1, 0.3, 0.65, 0.9] {
            let dt = 1e-6;
            let (xp, vp) = rec.chart_point(&st, th + dt);
            let (xm, vm) = rec.chart_point(&st, th - dt);
            let (xe, ve) = rp.chart_point(&st, th);
            let (xf, vf) = rm.chart_point(&st, th);
            let j = ((xp - xm) * (ve - vf) - (vp - vm) * (xe - xf)) / (4.0 * dt * de);
            assert!((j.abs() - rec.period).abs() < 1e-6 * rec.period, "{j} {}", rec.period);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn chart_round_trip_and_energy(theta in 0.0f64..1.0, frac in 0.01f64..1.0) {
            let st = std::sync::LazyLock::force(&KING);
            let e = st.emin + frac * st.depth;
            let rec = EnergyRecord::new(st, e, ChartOptions::default()).unwrap();
            let (x, v) = rec.chart_point(st, theta);
            let back = rec.angle_clamped(st, x);
            prop_assert!((back - theta.min(1.0 - theta)).abs() <= 1e-8);
            prop_assert!((0.5 * v * v + st.u0(x) - e).abs() <= 1e-10);
            let expected_sign = if theta <= 0.5 { 1.0 } else { -1.0 };
            prop_assert!(v.signum() == expected_sign || v == 0.0);
        }

        #[test]
        fn period_strictly_increasing(f1 in 0.001f64..0.999, gap in 1e-3f64..0.5) {
            let st = std::sync::LazyLock::force(&KING);
            let f2 = (f1 + gap).min(1.0);
            let t1 = period(st, st.emin + f1 * st.depth).unwrap();
            let t2 = period(st, st.emin + f2 * st.depth).unwrap();
            prop_assert!(t1 < t2);
        }
    }

    static KING: std::sync::LazyLock<SteadyState> = std::sync::LazyLock::new(king);
}
