//! Dormand–Prince 5(4) integrator for small autonomous-in-form systems.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// One Dormand–Prince step of size `h` from `(t, y)`.
///
/// Returns the fifth-order solution and the embedded error estimate.
pub fn dp5_step<const N: usize>(
    f: &impl Fn(f64, &[f64; N]) -> [f64; N],
    t: f64,
    y: &[f64; N],
    h: f64,
) -> ([f64; N], [f64; N]) {
    let comb = |coeffs: &[(f64, &[f64; N])]| -> [f64; N] {
        let mut out = *y;
        for (c, k) in coeffs {
            for i in 0..N {
                out[i] += h * c * k[i];
            }
        }
        out
    };
    let k1 = f(t, y);
    let k2 = f(t + C2 * h, &comb(&[(A21, &k1)]));
    let k3 = f(t + C3 * h, &comb(&[(A31, &k1), (A32, &k2)]));
    let k4 = f(t + C4 * h, &comb(&[(A41, &k1), (A42, &k2), (A43, &k3)]));
    let k5 = f(
        t + C5 * h,
        &comb(&[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    );
    let k6 = f(
        t + h,
        &comb(&[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
    );
    let y5 = comb(&[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
    let k7 = f(t + h, &y5);
    let mut err = [0.0; N];
    for i in 0..N {
        err[i] = h
            * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    (y5, err)
}

/// Adaptive stepping controls.
#[derive(Debug, Clone, Copy)]
pub struct Controls {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

/// Accepted nodes of an adaptive integration.
#[derive(Debug, Clone)]
pub struct Trajectory<const N: usize> {
    pub t: Vec<f64>,
    pub y: Vec<[f64; N]>,
}

/// Integrates from `t0` until `stop(t, y)` returns true or `t_end` is reached.
///
/// The final accepted step is the first one for which `stop` holds; callers locate
/// the exact event inside that step themselves.
pub fn integrate<const N: usize>(
    f: &impl Fn(f64, &[f64; N]) -> [f64; N],
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    ctl: Controls,
    stop: impl Fn(f64, &[f64; N]) -> bool,
) -> Result<Trajectory<N>> {
    let mut tr = Trajectory {
        t: vec![t0],
        y: vec![y0],
    };
    let mut t = t0;
    let mut y = y0;
    let mut h = ctl.h_init.min(ctl.h_max);
    for _ in 0..ctl.max_steps {
        if t >= t_end {
            return Ok(tr);
        }
        h = h.min(t_end - t);
        let (yn, err) = dp5_step(f, t, &y, h);
        let mut norm = 0.0f64;
        for i in 0..N {
            let sc = ctl.atol + ctl.rtol * y[i].abs().max(yn[i].abs());
            norm = norm.max((err[i] / sc).abs());
        }
        if !norm.is_finite() {
            h *= 0.25;
            continue;
        }
        if norm <= 1.0 {
            t += h;
            y = yn;
            tr.t.push(t);
            tr.y.push(y);
            if stop(t, &y) {
                return Ok(tr);
            }
        }
        let fac = if norm == 0.0 {
            5.0
        } else {
            (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = (h * fac).min(ctl.h_max);
        if h < 1e-15 * t.abs().max(1.0) {
            return Err(Error::solver(format!("step size underflow at t = {t}")));
        }
    }
    Err(Error::solver(format!(
        "exceeded {} steps before reaching the end of integration",
        ctl.max_steps
    )))
}
