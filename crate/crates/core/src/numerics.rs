//! Small numerical building blocks shared by the pipelines: Gauss–Legendre
//! rules on an interval, uniform grids, the trapezoid rule with a
//! Richardson error estimate, a natural cubic spline, and Brent's method.

use gauss_quad::legendre::GaussLegendre;
use std::num::NonZeroUsize;

/// Gauss–Legendre nodes and weights mapped onto `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize, a: f64, b: f64) -> Self {
        let n = NonZeroUsize::new(n.max(1)).expect("n >= 1");
        let rule = GaussLegendre::new(n);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let (nodes, weights) = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (mid + half * x, half * w))
            .unzip();
        Self { nodes, weights }
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Result of an adaptive Gauss–Legendre integration.
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveResult {
    pub value: f64,
    pub error_estimate: f64,
    /// Node count of the rule that met the target.
    pub nodes: usize,
}

/// Doubles the Gauss–Legendre order on `[a, b]` until two successive
/// estimates agree to `rel_tol`. Returns the last pair's difference as the
/// error estimate even when the target was not met.
pub fn adaptive_gauss(
    a: f64,
    b: f64,
    rel_tol: f64,
    start_nodes: usize,
    max_nodes: usize,
    mut f: impl FnMut(f64) -> f64,
) -> (AdaptiveResult, bool) {
    let mut n = start_nodes.max(2);
    let mut prev = GaussRule::new(n, a, b).integrate(&mut f);
    loop {
        let next_n = 2 * n;
        let next = GaussRule::new(next_n, a, b).integrate(&mut f);
        let err = (next - prev).abs();
        let scale = next.abs().max(f64::MIN_POSITIVE);
        if err <= rel_tol * scale || next == 0.0 {
            return (AdaptiveResult { value: next, error_estimate: err, nodes: n }, true);
        }
        if next_n >= max_nodes {
            return (AdaptiveResult { value: next, error_estimate: err, nodes: next_n }, false);
        }
        prev = next;
        n = next_n;
    }
}

/// `n` equally spaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let h = (b - a) / (n - 1) as f64;
            (0..n).map(|i| if i + 1 == n { b } else { a + h * i as f64 }).collect()
        }
    }
}

/// `n` log-spaced points from `a` to `b` inclusive (`0 < a < b`).
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    linspace(a.ln(), b.ln(), n)
        .into_iter()
        .enumerate()
        .map(|(i, v)| if i == 0 { a } else if i + 1 == n { b } else { v.exp() })
        .collect()
}

/// Trapezoid rule on arbitrary (sorted) abscissae.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.windows(2).zip(y.windows(2)).map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1])).sum()
}

/// Trapezoid on a uniform grid together with a Richardson error estimate
/// from the half-resolution (every other node) rule.
///
/// Returns `(value, error_estimate)`. For fewer than 5 nodes the estimate
/// is the magnitude of the value itself.
pub fn trapezoid_with_error(x: &[f64], y: &[f64]) -> (f64, f64) {
    let full = trapezoid(x, y);
    let n = x.len();
    if n < 5 {
        return (full, full.abs());
    }
    // Coarse rule on even-indexed nodes; an odd node count keeps both ends.
    let (xc, yc): (Vec<f64>, Vec<f64>) = if n % 2 == 1 {
        x.iter().zip(y).step_by(2).map(|(&a, &b)| (a, b)).unzip()
    } else {
        let mut pairs: Vec<(f64, f64)> = x[..n - 1].iter().zip(&y[..n - 1]).step_by(2).map(|(&a, &b)| (a, b)).collect();
        pairs.push((x[n - 1], y[n - 1]));
        pairs.into_iter().unzip()
    };
    let coarse = trapezoid(&xc, &yc);
    (full, (full - coarse).abs() / 3.0)
}

/// Natural cubic spline through `(x_i, y_i)` with strictly increasing `x`.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        assert!(n >= 2 && n == y.len(), "spline needs at least two matching points");
        let mut m = vec![0.0; n];
        if n > 2 {
            // Tridiagonal solve (Thomas) for the interior second derivatives.
            let mut c_prime = vec![0.0; n];
            let mut d_prime = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                let a = h0 / 6.0;
                let b = (h0 + h1) / 3.0;
                let c = h1 / 6.0;
                let d = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
                let denom = b - a * c_prime[i - 1];
                c_prime[i] = c / denom;
                d_prime[i] = (d - a * d_prime[i - 1]) / denom;
            }
            for i in (1..n - 1).rev() {
                m[i] = d_prime[i] - c_prime[i] * m[i + 1];
            }
        }
        Self { x, y, m }
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.x.len();
        match self.x.binary_search_by(|v| v.partial_cmp(&t).expect("finite knots")) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        (self.y[i + 1] - self.y[i]) / h - (3.0 * a * a - 1.0) / 6.0 * h * self.m[i]
            + (3.0 * b * b - 1.0) / 6.0 * h * self.m[i + 1]
    }

    /// The spline's second derivative, piecewise linear between knots.
    pub fn second_derivative(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let b = ((t - self.x[i]) / h).clamp(0.0, 1.0);
        (1.0 - b) * self.m[i] + b * self.m[i + 1]
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    pub fn knot_second_derivatives(&self) -> &[f64] {
        &self.m
    }
}

/// Brent's root finder on a sign-changing bracket `[a, b]`.
///
/// Iterates until the bracket is at machine resolution or `f` is exactly
/// zero. Returns `None` when `f(a)` and `f(b)` have the same sign.
pub fn brent(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, max_iter: usize) -> Option<f64> {
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + f64::MIN_POSITIVE;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol || fb == 0.0 {
            return Some(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(xm) };
        fb = f(b);
    }
    Some(b)
}

/// Ordinary least-squares line `y = slope·x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
