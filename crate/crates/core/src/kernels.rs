//! Cylinder functions of integer order for real arguments.
//!
//! `J_m` is evaluated with Miller's backward recurrence normalized by the
//! Neumann sum `J_0 + 2 Σ J_2k = 1`, which gives absolute accuracy close to
//! machine precision for every argument up to a few hundred. `K_0` and `K_1`
//! come from Temme's series for `x < 2` and Steed's continued fraction
//! above it; higher orders use the (stable) forward recurrence.
//!
//! The modified functions are also exposed in exponentially scaled form,
//! `e^x K_m(x)`, because the dispersion residual multiplies `K_m(qa)` by
//! quantities that only matter through their sign.

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Azimuthal mode index `m ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FunctionOrder(u32);

impl FunctionOrder {
    pub const fn new(m: u32) -> Self {
        Self(m)
    }

    /// Accepts a signed index, rejecting negative values.
    pub fn try_from_signed(m: i64) -> Result<Self> {
        u32::try_from(m)
            .map(Self)
            .map_err(|_| Error::invalid("mode order m", format!("{m} must be a non-negative integer")))
    }

    pub const fn get(self) -> u32 {
        self.0
    }

    pub(crate) fn as_usize(self) -> usize {
        self.0 as usize
    }
}

impl From<u32> for FunctionOrder {
    fn from(m: u32) -> Self {
        Self(m)
    }
}

/// `J_0(x), …, J_{n_max}(x)` for `x ≥ 0`.
pub fn bessel_j_sequence(n_max: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let x = x.abs();
    let reach = (n_max as f64).max(x);
    let mut start = reach.ceil() as usize + 20 + (60.0 * reach).sqrt() as usize;
    if start % 2 == 1 {
        start += 1;
    }

    let two_over_x = 2.0 / x;
    let mut j_next = 0.0_f64;
    let mut j_curr = 1.0e-30_f64;
    let mut even_sum = 0.0_f64;
    if start <= n_max {
        out[start] = j_curr;
    }
    // Downward: J_{k-1} = (2k/x) J_k - J_{k+1}.
    for k in (1..=start).rev() {
        let j_prev = k as f64 * two_over_x * j_curr - j_next;
        j_next = j_curr;
        j_curr = j_prev;
        let idx = k - 1;
        if idx <= n_max {
            out[idx] = j_curr;
        }
        if idx % 2 == 0 && idx > 0 {
            even_sum += j_curr;
        }
        if j_curr.abs() > 1.0e250 {
            j_curr *= 1.0e-250;
            j_next *= 1.0e-250;
            even_sum *= 1.0e-250;
            for v in out.iter_mut().skip(idx) {
                *v *= 1.0e-250;
            }
        }
    }
    let norm = j_curr + 2.0 * even_sum;
    for v in &mut out {
        *v /= norm;
    }
    out
}

/// Bessel function of the first kind `J_m(x)`.
///
/// Negative arguments use `J_m(-x) = (-1)^m J_m(x)`.
pub fn bessel_j(m: FunctionOrder, x: f64) -> f64 {
    let m = m.as_usize();
    let v = bessel_j_sequence(m, x.abs())[m];
    if x < 0.0 && m % 2 == 1 {
        -v
    } else {
        v
    }
}

/// `J_m'(x) = (J_{m-1}(x) - J_{m+1}(x)) / 2`, with `J_{-1} = -J_1`.
pub fn bessel_j_prime(m: FunctionOrder, x: f64) -> f64 {
    let (_, d) = bessel_j_with_derivative(m, x);
    d
}

/// `(J_m(x), J_m'(x))` from a single recurrence sweep.
pub fn bessel_j_with_derivative(m: FunctionOrder, x: f64) -> (f64, f64) {
    let mi = m.as_usize();
    let seq = bessel_j_sequence(mi + 1, x.abs());
    let lower = if mi == 0 { -seq[1] } else { seq[mi - 1] };
    let (v, d) = (seq[mi], 0.5 * (lower - seq[mi + 1]));
    if x < 0.0 {
        // J_m has parity (-1)^m, so J_m' has parity (-1)^(m+1).
        if mi % 2 == 1 {
            (-v, d)
        } else {
            (v, -d)
        }
    } else {
        (v, d)
    }
}

/// Scaled `(e^x K_0(x), e^x K_1(x))` for `x > 0`.
fn bessel_k01_scaled(x: f64) -> (f64, f64) {
    const EPS: f64 = 1.0e-16;
    if x < 2.0 {
        // Temme's series at order zero.
        let half = 0.5 * x;
        let mut ff = -EULER_GAMMA - half.ln();
        let mut sum = ff;
        let mut p = 0.5;
        let mut q = 0.5;
        let mut c = 1.0;
        let d = half * half;
        let mut sum1 = p;
        for i in 1..200 {
            let fi = i as f64;
            ff = (fi * ff + p + q) / (fi * fi);
            c *= d / fi;
            p /= fi;
            q /= fi;
            let del = c * ff;
            sum += del;
            sum1 += c * (p - fi * ff);
            if del.abs() < sum.abs() * EPS {
                break;
            }
        }
        let scale = x.exp();
        (sum * scale, sum1 * 2.0 / x * scale)
    } else {
        // Steed's continued fraction (CF2) at order zero.
        let mut b = 2.0 * (1.0 + x);
        let mut d = 1.0 / b;
        let mut delh = d;
        let mut h = d;
        let mut q1 = 0.0;
        let mut q2 = 1.0;
        let a1 = 0.25;
        let mut q = a1;
        let mut c = a1;
        let mut a = -a1;
        let mut s = 1.0 + q * delh;
        for i in 2..10_000 {
            let fi = i as f64;
            a -= 2.0 * (fi - 1.0);
            c = -a * c / fi;
            let qnew = (q1 - b * q2) / a;
            q1 = q2;
            q2 = qnew;
            q += c * qnew;
            b += 2.0;
            d = 1.0 / (b + a * d);
            delh = (b * d - 1.0) * delh;
            h += delh;
            let dels = q * delh;
            s += dels;
            if (dels / s).abs() < EPS {
                break;
            }
        }
        h *= a1;
        let k0 = (std::f64::consts::PI / (2.0 * x)).sqrt() / s;
        let k1 = k0 * (x + 0.5 - h) / x;
        (k0, k1)
    }
}

/// Scaled `e^x K_0(x), …, e^x K_{n_max}(x)` for `x > 0`.
pub fn bessel_k_scaled_sequence(n_max: usize, x: f64) -> Result<Vec<f64>> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("K_m requires a finite argument x > 0, got {x}")));
    }
    let (k0, k1) = bessel_k01_scaled(x);
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(k0);
    if n_max >= 1 {
        out.push(k1);
    }
    for n in 1..n_max {
        let next = out[n - 1] + 2.0 * n as f64 / x * out[n];
        out.push(next);
    }
    Ok(out)
}

/// Exponentially scaled `e^x K_m(x)`.
pub fn bessel_k_scaled(m: FunctionOrder, x: f64) -> Result<f64> {
    Ok(bessel_k_scaled_sequence(m.as_usize(), x)?[m.as_usize()])
}

/// `ln K_m(x)`, finite even where `K_m(x)` underflows.
pub fn ln_bessel_k(m: FunctionOrder, x: f64) -> Result<f64> {
    Ok(bessel_k_scaled(m, x)?.ln() - x)
}

/// Modified Bessel function of the second kind `K_m(x)`, `x > 0`.
pub fn bessel_k(m: FunctionOrder, x: f64) -> Result<f64> {
    Ok(bessel_k_scaled(m, x)? * (-x).exp())
}

/// `K_m'(x) = -(K_{m-1}(x) + K_{m+1}(x)) / 2`, with `K_{-1} = K_1`.
pub fn bessel_k_prime(m: FunctionOrder, x: f64) -> Result<f64> {
    let (_, d) = bessel_k_scaled_with_derivative(m, x)?;
    Ok(d * (-x).exp())
}

/// Scaled pair `(e^x K_m(x), e^x K_m'(x))`.
pub fn bessel_k_scaled_with_derivative(m: FunctionOrder, x: f64) -> Result<(f64, f64)> {
    let mi = m.as_usize();
    let seq = bessel_k_scaled_sequence(mi + 1, x)?;
    let lower = if mi == 0 { seq[1] } else { seq[mi - 1] };
    Ok((seq[mi], -0.5 * (lower + seq[mi + 1])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn order(m: u32) -> FunctionOrder {
        FunctionOrder::new(m)
    }

    /// Bessel's integral over one full period; the trapezoid rule is
    /// exponentially accurate for periodic analytic integrands.
    fn j_oracle(m: u32, x: f64) -> f64 {
        let n = 2048;
        let h = 2.0 * PI / n as f64;
        (0..n)
            .map(|i| {
                let th = i as f64 * h;
                (m as f64 * th - x * th.sin()).cos()
            })
            .sum::<f64>()
            / n as f64
    }

    /// K_m(x) = ∫_0^∞ exp(-x cosh t) cosh(m t) dt, trapezoid in t.
    fn k_oracle(m: u32, x: f64) -> f64 {
        let h = 0.005;
        let mut sum = 0.5 * (-x).exp();
        let mut i = 1;
        loop {
            let t = i as f64 * h;
            let term = (-x * t.cosh() + m as f64 * t).exp() * 0.5 * (1.0 + (-2.0 * m as f64 * t).exp());
            sum += term;
            if term < 1e-300 || (term < sum * 1e-18 && x * (t.cosh() - 1.0) > 50.0) {
                break;
            }
            i += 1;
        }
        sum * h
    }

    /// Power series for I_m; all terms are positive so no cancellation.
    fn i_oracle(m: u32, x: f64) -> f64 {
        let half = 0.5 * x;
        let mut term = (0..m).fold(1.0, |acc, k| acc * half / (k + 1) as f64);
        let mut sum = term;
        for k in 1..1000 {
            term *= half * half / (k as f64 * (k + m) as f64);
            sum += term;
            if term < sum * 1e-18 {
                break;
            }
        }
        sum
    }

    #[test]
    fn j_values_at_origin() {
        assert_eq!(bessel_j(order(0), 0.0), 1.0);
        assert_eq!(bessel_j(order(1), 0.0), 0.0);
        assert_eq!(bessel_j_prime(order(0), 0.0), 0.0);
        assert_abs_diff_eq!(bessel_j_prime(order(1), 0.0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn first_zero_of_j0() {
        // Root of the oracle by bisection, then compare.
        let (mut lo, mut hi) = (2.0, 3.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if j_oracle(0, lo) * j_oracle(0, mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert_abs_diff_eq!(lo, 2.404825557695773, epsilon = 1e-12);
        assert_abs_diff_eq!(bessel_j(order(0), 2.404825557695773), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn j_matches_integral_representation() {
        for m in 0..=6 {
            for &x in &[1e-3, 0.1, 0.7, 1.0, 2.5, 5.0, 11.3, 25.0, 49.9, 73.1, 100.0] {
                let got = bessel_j(order(m), x);
                assert_abs_diff_eq!(got, j_oracle(m, x), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn j_prime_matches_finite_difference() {
        let h = 1e-5;
        let fd = (bessel_j(order(2), 1.7 + h) - bessel_j(order(2), 1.7 - h)) / (2.0 * h);
        assert_abs_diff_eq!(bessel_j_prime(order(2), 1.7), fd, epsilon = 1e-8);
    }

    #[test]
    fn negative_argument_parity() {
        for m in 0..4 {
            let (v, d) = bessel_j_with_derivative(order(m), -1.3);
            let (vp, dp) = bessel_j_with_derivative(order(m), 1.3);
            let s = if m % 2 == 0 { 1.0 } else { -1.0 };
            assert_abs_diff_eq!(v, s * vp, epsilon = 1e-15);
            assert_abs_diff_eq!(d, -s * dp, epsilon = 1e-15);
        }
    }

    #[test]
    fn k_asymptote_at_fifty() {
        let x = 50.0;
        let v = bessel_k(order(0), x).unwrap() * x.exp() * (2.0 * x / PI).sqrt();
        // Leading term alone: the first correction is -1/(8x) = -2.5e-3.
        assert_abs_diff_eq!(v, 1.0, epsilon = 3e-3);
        let t = 1.0 / (8.0 * x);
        let series = 1.0 - t + 9.0 / 2.0 * t * t - 225.0 / 6.0 * t * t * t;
        assert_abs_diff_eq!(v, series, epsilon = 1e-6);
    }

    #[test]
    fn k1_at_one_matches_integral_representation() {
        let oracle = k_oracle(1, 1.0);
        assert_abs_diff_eq!(bessel_k(order(1), 1.0).unwrap(), oracle, epsilon = 1e-10);
        assert_abs_diff_eq!(oracle, 0.601_907_230_197_234_6, epsilon = 1e-12);
    }

    #[test]
    fn k_matches_integral_representation_across_switchover() {
        for m in 0..=5 {
            for &x in &[0.05, 0.5, 1.0, 1.999, 2.0, 2.001, 3.7, 10.0, 30.0] {
                let got = bessel_k(order(m), x).unwrap();
                let want = k_oracle(m, x);
                assert!(((got - want) / want).abs() < 1e-12, "m={m} x={x} got={got} want={want}");
            }
        }
    }

    #[test]
    fn k_rejects_non_positive_argument() {
        assert!(bessel_k(order(0), 0.0).is_err());
        assert!(bessel_k(order(1), -1.0).is_err());
        assert!(bessel_k_prime(order(1), f64::NAN).is_err());
    }

    #[test]
    fn k_is_positive_and_decreasing() {
        for m in 0..=5 {
            let mut prev = f64::INFINITY;
            for i in 1..400 {
                let x = 0.05 * i as f64;
                let v = bessel_k(order(m), x).unwrap();
                assert!(v > 0.0 && v < prev, "m={m} x={x}");
                prev = v;
            }
        }
    }

    #[test]
    fn scaled_k_survives_large_arguments() {
        let ln_k = ln_bessel_k(order(1), 2000.0).unwrap();
        assert!(ln_k.is_finite());
        assert_abs_diff_eq!(ln_k, (PI / 4000.0).sqrt().ln() - 2000.0, epsilon = 1e-3);
        assert_eq!(bessel_k(order(1), 2000.0).unwrap(), 0.0);
    }

    #[test]
    fn recurrences_hold() {
        for m in 1..=5u32 {
            for i in 0..=200 {
                let x = 0.1 + (80.0 - 0.1) * i as f64 / 200.0;
                let jm1 = bessel_j(order(m - 1), x);
                let jp1 = bessel_j(order(m + 1), x);
                let rhs = 2.0 * m as f64 / x * bessel_j(order(m), x);
                let scale = jm1.abs().max(jp1.abs()).max(rhs.abs());
                assert!((jm1 + jp1 - rhs).abs() <= 1e-10 * scale, "J m={m} x={x}");

                let km1 = bessel_k(order(m - 1), x).unwrap();
                let kp1 = bessel_k(order(m + 1), x).unwrap();
                let rhs = -2.0 * m as f64 / x * bessel_k(order(m), x).unwrap();
                assert!((km1 - kp1 - rhs).abs() <= 1e-10 * kp1.abs(), "K m={m} x={x}");
            }
        }
    }

    #[test]
    fn wronskian_identities() {
        for m in 0..=5u32 {
            for &x in &[0.1, 0.5, 1.0, 3.0, 7.5, 20.0, 45.0, 80.0] {
                // I_m K_{m+1} + I_{m+1} K_m = 1/x
                let w = i_oracle(m, x) * bessel_k(order(m + 1), x).unwrap()
                    + i_oracle(m + 1, x) * bessel_k(order(m), x).unwrap();
                assert!((w * x - 1.0).abs() < 1e-10, "m={m} x={x} w*x={}", w * x);
            }
        }
        // J_0^2 + 2 Σ J_k^2 = 1
        for &x in &[0.3, 4.0, 17.0, 60.0, 100.0] {
            let seq = bessel_j_sequence(200, x);
            let s: f64 = seq[0] * seq[0] + 2.0 * seq[1..].iter().map(|v| v * v).sum::<f64>();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for m in 0..=5u32 {
            for i in 0..=40 {
                let x = 0.1 + (80.0 - 0.1) * i as f64 / 40.0;
                let h = 1e-5;
                let fd = (bessel_j(order(m), x + h) - bessel_j(order(m), x - h)) / (2.0 * h);
                let d = bessel_j_prime(order(m), x);
                let scale = d.abs().max(bessel_j(order(m), x).abs()).max(1e-3);
                assert!((fd - d).abs() <= 1e-7 * scale, "J' m={m} x={x}");

                let fd = (bessel_k(order(m), x + h).unwrap() - bessel_k(order(m), x - h).unwrap()) / (2.0 * h);
                let d = bessel_k_prime(order(m), x).unwrap();
                assert!(((fd - d) / d).abs() <= 1e-7, "K' m={m} x={x} fd={fd} d={d}");
            }
        }
    }

    #[test]
    fn signed_order_is_validated() {
        assert!(FunctionOrder::try_from_signed(-1).is_err());
        assert_eq!(FunctionOrder::try_from_signed(3).unwrap().get(), 3);
    }
}
