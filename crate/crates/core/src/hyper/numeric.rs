//! One-dimensional numerics used by the hyper-parameter analysis: monotone
//! cubic interpolation, adaptive Simpson quadrature, golden-section search and
//! trapezoid weights.

use crate::error::{Result, SmcError};

/// Shape-preserving piecewise-cubic Hermite interpolant (Fritsch–Carlson).
#[derive(Debug, Clone, PartialEq)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    slopes: Vec<f64>,
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if s.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        s
    }
}

impl Pchip {
    /// `x` must be strictly increasing, with at least two knots.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(SmcError::InvalidArgument(format!(
                "interpolation needs >= 2 matching knots, got {} and {}",
                n,
                y.len()
            )));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SmcError::InvalidArgument("knots must be strictly increasing".into()));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(SmcError::InvalidArgument("non-finite knot".into()));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut slopes = vec![0.0; n];
        if n == 2 {
            slopes[0] = delta[0];
            slopes[1] = delta[0];
        } else {
            for k in 1..n - 1 {
                let (d0, d1) = (delta[k - 1], delta[k]);
                if d0 * d1 > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    slopes[k] = (w1 + w2) / (w1 / d0 + w2 / d1);
                }
            }
            slopes[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            slopes[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self { x, y, slopes })
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    /// Value at `u`; constant extrapolation outside the knot range.
    pub fn eval(&self, u: f64) -> f64 {
        let n = self.x.len();
        if u <= self.x[0] {
            return self.y[0];
        }
        if u >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let k = self.x.partition_point(|&v| v <= u) - 1;
        let h = self.x[k + 1] - self.x[k];
        let t = (u - self.x[k]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.y[k] + h10 * h * self.slopes[k] + h01 * self.y[k + 1] + h11 * h * self.slopes[k + 1]
    }
}

fn simpson_step<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let (lm, flm, left) = simpson_step(f, a, fa, m, fm);
    let (rm, frm, right) = simpson_step(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || !(delta.abs() > 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
        + adaptive(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson_step(&f, a, fa, b, fb);
    adaptive(&f, a, fa, b, fb, m, fm, whole, tol, 18)
}

/// Integral over `[a, b]` split at the given interior breakpoints, with the
/// total absolute error targeted at `rel_tol` of a coarse first estimate.
pub fn integrate_piecewise<F: Fn(f64) -> f64>(f: F, breaks: &[f64], rel_tol: f64) -> f64 {
    if breaks.len() < 2 {
        return 0.0;
    }
    let fx: Vec<f64> = breaks.iter().map(|&x| f(x)).collect();
    // one Simpson panel per piece, reused as the start of the refinement
    let panels: Vec<(f64, f64, f64)> = breaks
        .windows(2)
        .zip(fx.windows(2))
        .map(|(x, y)| simpson_step(&f, x[0], y[0], x[1], y[1]))
        .collect();
    let coarse: f64 = panels.iter().map(|p| p.2.abs()).sum();
    let span = breaks[breaks.len() - 1] - breaks[0];
    let tol = (rel_tol * coarse).max(f64::MIN_POSITIVE);
    (0..panels.len())
        .map(|k| {
            let (a, b) = (breaks[k], breaks[k + 1]);
            let (m, fm, whole) = panels[k];
            adaptive(&f, a, fx[k], b, fx[k + 1], m, fm, whole, tol * (b - a) / span, 18)
        })
        .sum()
}

/// Maximizer of a unimodal `f` on `[a, b]`, to absolute tolerance `tol` in `x`.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Trapezoid-rule weights `g_t` for the (possibly unsorted) knots `thetas`.
pub fn trapezoid_weights(thetas: &[f64]) -> Result<Vec<f64>> {
    let n = thetas.len();
    if n < 2 {
        return Err(SmcError::InvalidArgument(format!("trapezoid rule needs >= 2 knots, got {n}")));
    }
    let mut g = vec![0.0; n];
    g[0] = (thetas[1] - thetas[0]).abs() / 2.0;
    g[n - 1] = (thetas[n - 1] - thetas[n - 2]).abs() / 2.0;
    for t in 1..n - 1 {
        g[t] = (thetas[t + 1] - thetas[t - 1]).abs() / 2.0;
    }
    Ok(g)
}
