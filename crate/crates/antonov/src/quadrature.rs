//! Quadrature rules, barycentric interpolation and Chebyshev series.

use crate::error::{Error, Result};

/// Gauss–Legendre rule on [-1, 1] with nodes in ascending order.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes the `n`-point rule by Newton iteration on the Legendre recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1e-300) {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d.is_finite() {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights affinely mapped to [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let x = self.nodes.iter().map(|t| mid + half * t).collect();
        let w = self.weights.iter().map(|w| half * w).collect();
        (x, w)
    }

    /// Integral of `f` over [a, b].
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        half * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| w * f(mid + half * t))
            .sum::<f64>()
    }

    /// Barycentric weights of the rule's nodes, valid for any affine image.
    pub fn barycentric_weights(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .zip(&self.weights)
            .enumerate()
            .map(|(j, (x, w))| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                s * ((1.0 - x * x) * w).sqrt()
            })
            .collect()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Values of the Lagrange basis polynomials of `nodes` at `x` (second barycentric form).
pub fn lagrange_row(nodes: &[f64], bary: &[f64], x: f64, out: &mut [f64]) {
    if let Some(j) = nodes.iter().position(|&xj| xj == x) {
        out.iter_mut().for_each(|v| *v = 0.0);
        out[j] = 1.0;
        return;
    }
    let mut denom = 0.0;
    for ((o, &xj), &bj) in out.iter_mut().zip(nodes).zip(bary) {
        let t = bj / (x - xj);
        *o = t;
        denom += t;
    }
    out.iter_mut().for_each(|v| *v /= denom);
}

/// Tanh-sinh quadrature of `f` over [a, b]; endpoint singularities are allowed.
///
/// `f` receives the abscissa together with its distances to `a` and `b`, computed
/// without cancellation. Returns the integral and an error estimate.
pub fn tanh_sinh(
    a: f64,
    b: f64,
    tol: f64,
    mut f: impl FnMut(f64, f64, f64) -> f64,
) -> Result<(f64, f64)> {
    use std::f64::consts::FRAC_PI_2;
    let len = b - a;
    if len == 0.0 {
        return Ok((0.0, 0.0));
    }
    let t_max = 4.5;
    let mut eval = |t: f64| -> f64 {
        let u = FRAC_PI_2 * t.sinh();
        let cu = u.cosh();
        let w = FRAC_PI_2 * t.cosh() / (cu * cu);
        let e = (2.0 * u.abs()).exp();
        let comp = 2.0 / (e + 1.0);
        let (da, db) = if u >= 0.0 {
            (len * (1.0 - 0.5 * comp), 0.5 * len * comp)
        } else {
            (0.5 * len * comp, len * (1.0 - 0.5 * comp))
        };
        if da <= 0.0 || db <= 0.0 || w == 0.0 {
            return 0.0;
        }
        let x = if u >= 0.0 { b - db } else { a + da };
        0.5 * len * w * f(x, da, db)
    };
    let mut h = 1.0;
    let mut sum = eval(0.0);
    let mut k = 1;
    while k as f64 * h <= t_max {
        let t = k as f64 * h;
        sum += eval(t) + eval(-t);
        k += 1;
    }
    let mut prev = h * sum;
    for _level in 0..12 {
        h *= 0.5;
        let mut k = 1;
        while k as f64 * h <= t_max {
            let t = k as f64 * h;
            sum += eval(t) + eval(-t);
            k += 2;
        }
        let cur = h * sum;
        let err = (cur - prev).abs();
        if err <= tol * cur.abs().max(1e-300) {
            return Ok((cur, err));
        }
        prev = cur;
    }
    Err(Error::solver(format!(
        "tanh-sinh quadrature did not reach tolerance {tol:e} on [{a}, {b}]"
    )))
}

/// Principal value of the integral of f(x)/(x − c) over [a, b] by singularity subtraction.
pub fn principal_value(
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    c: f64,
    mut f: impl FnMut(f64) -> f64,
) -> Result<f64> {
    if !(a < c && c < b) {
        return Err(Error::domain(format!(
            "principal value pole {c} must lie inside ({a}, {b})"
        )));
    }
    let fc = f(c);
    let (x, w) = rule.mapped(a, b);
    let guard = 1e-12 * (b - a);
    let mut sum = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        let d = xi - c;
        let term = if d.abs() < guard {
            let h = 1e-6 * (b - a);
            (f(c + h) - f(c - h)) / (2.0 * h)
        } else {
            (f(*xi) - fc) / d
        };
        sum += wi * term;
    }
    Ok(sum + fc * ((b - c) / (c - a)).ln())
}

/// Chebyshev series on [a, b] built from samples at first-kind Chebyshev points.
#[derive(Debug, Clone)]
pub struct Chebyshev {
    a: f64,
    b: f64,
    coef: Vec<f64>,
}

impl Chebyshev {
    /// First-kind Chebyshev points on [a, b] in ascending order.
    pub fn points(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| {
                let t = -(std::f64::consts::PI * (k as f64 + 0.5) / n as f64).cos();
                0.5 * (a + b) + 0.5 * (b - a) * t
            })
            .collect()
    }

    /// Interpolant of samples taken at `Chebyshev::points(a, b, n)`.
    pub fn from_samples(a: f64, b: f64, values: &[f64]) -> Self {
        let n = values.len();
        let nf = n as f64;
        let mut coef = vec![0.0; n];
        for (j, c) in coef.iter_mut().enumerate() {
            let mut s = 0.0;
            for (k, v) in values.iter().enumerate() {
                // Points are stored ascending, i.e. t_k = cos(pi (n - 1 - k + 1/2) / n).
                let kk = (n - 1 - k) as f64;
                s += v * (std::f64::consts::PI * j as f64 * (kk + 0.5) / nf).cos();
            }
            *c = if j == 0 { s / nf } else { 2.0 * s / nf };
        }
        Self { a, b, coef }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = (2.0 * x - self.a - self.b) / (self.b - self.a);
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &c in self.coef.iter().skip(1).rev() {
            let b0 = 2.0 * t * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + self.coef[0]
    }

    /// Antiderivative vanishing at the left end of the domain.
    pub fn integral(&self) -> Chebyshev {
        let n = self.coef.len();
        let c = |j: usize| -> f64 {
            if j == 0 {
                2.0 * self.coef[0]
            } else if j < n {
                self.coef[j]
            } else {
                0.0
            }
        };
        let scale = 0.5 * (self.b - self.a);
        let mut out = vec![0.0; n + 1];
        for (j, o) in out.iter_mut().enumerate().skip(1) {
            *o = scale * (c(j - 1) - c(j + 1)) / (2.0 * j as f64);
        }
        let mut at_left = 0.0;
        for (j, o) in out.iter().enumerate().skip(1) {
            at_left += if j % 2 == 0 { *o } else { -*o };
        }
        out[0] = -at_left;
        Chebyshev {
            a: self.a,
            b: self.b,
            coef: out,
        }
    }

    /// Value at the right end of the domain.
    pub fn right_value(&self) -> f64 {
        self.coef.iter().sum()
    }

    /// Magnitude of the trailing coefficients relative to the largest one.
    pub fn tail_ratio(&self) -> f64 {
        let n = self.coef.len();
        let top = self.coef.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        if top == 0.0 || n < 4 {
            return 0.0;
        }
        let tail = self.coef[n - 3..].iter().fold(0.0f64, |m, c| m.max(c.abs()));
        tail / top
    }
}
