//! Large-distance constants `τ̃_n` and the slopes `A`, `B` of
//! `t̄ ≈ A z` and `σ ≈ B z`.
//!
//! With `s = 1/|ω'|` the constants are `τ̃0 = π∫ w s`, `τ̃1 = π∫ w s²`,
//! `τ̃2 = π∫ w s³` over the weight grid. All three are sums over the same
//! nodes, so `B²` is formed as the weighted variance of `s`; for a fiber
//! `B/A` is about `10⁻⁵` and the raw difference `τ̃2/τ̃0 − A²` would keep
//! almost no digits.
//!
//! `τ̃1` is also computed through `−(π/4)∫ ln|2k| h''` with `h = w/F²` on a
//! cubic spline of `h`, which shares no integrand with the node sums and
//! serves as the cross-check.

use crate::arrival_stats::ArrivalStatistics;
use crate::dispersion::DispersionModel;
use crate::error::{Error, Result};
use crate::mode_fields::SpectralWeight;
use crate::numerics::{trapezoid_with_error, CubicSpline, GaussRule};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::collections::HashMap;
use std::f64::consts::PI;

/// Relative agreement required between the two `τ̃1` routes.
pub const CROSS_CHECK_TOLERANCE: f64 = 1e-3;
/// Relative change that ends the halving of the principal-value excision.
pub const PV_TOLERANCE: f64 = 1e-6;
/// Largest relative change of `σ/z` accepted by [`calibrate_b`].
pub const ASYMPTOTIC_CHANGE: f64 = 0.02;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Group delay per node of a weight grid.
#[derive(Debug, Clone)]
pub struct SlownessTable {
    pub k: Vec<f64>,
    pub weight: Vec<f64>,
    /// `1/|ω'(k)|`; zero where the weight vanishes.
    pub slowness: Vec<f64>,
    pub panels: Vec<std::ops::Range<usize>>,
}

impl SlownessTable {
    /// Evaluates `ω'` once per distinct `|k|` carrying weight.
    pub fn build(weight: &SpectralWeight, model: &DispersionModel) -> Result<Self> {
        let mut keys: Vec<f64> = weight.k.iter().zip(&weight.weight).filter(|(_, &w)| w > 0.0).map(|(k, _)| k.abs()).collect();
        keys.sort_by(|a, b| a.total_cmp(b));
        keys.dedup();
        let eps = weight.eps;
        let slow: Vec<(u64, f64)> = keys
            .par_iter()
            .map(|&k| -> Result<(u64, f64)> {
                let f = match crate::dispersion::f_diag(model, k, eps) {
                    Ok(f) => f,
                    Err(Error::Domain(_)) if k == 0.0 => 0.0,
                    Err(e) => return Err(e),
                };
                let big_k = eps.effective_k(k);
                // |k|F = |ω'|/2 on the regularized branch.
                let vg = 2.0 * big_k * f.abs();
                Ok((k.to_bits(), if vg > 0.0 { 1.0 / vg } else { f64::INFINITY }))
            })
            .collect::<Result<_>>()?;
        let lookup: HashMap<u64, f64> = slow.into_iter().collect();
        let slowness = weight
            .k
            .iter()
            .zip(&weight.weight)
            .map(|(k, &w)| if w > 0.0 { lookup[&k.abs().to_bits()] } else { 0.0 })
            .collect();
        Ok(Self { k: weight.k.clone(), weight: weight.weight.clone(), slowness, panels: weight.panels() })
    }

    fn integrand(&self, n: i32) -> Vec<f64> {
        self.weight.iter().zip(&self.slowness).map(|(&w, &s)| if w > 0.0 { w * s.powi(n) } else { 0.0 }).collect()
    }

    /// `π ∫ w sⁿ dk` with a Richardson error estimate, summed over panels.
    fn node_integral(&self, n: i32, what: &str) -> Result<(f64, f64)> {
        let y = self.integrand(n);
        check_integrable(&self.k, &y, what)?;
        let (mut value, mut err) = (0.0, 0.0);
        for r in &self.panels {
            let (v, e) = trapezoid_with_error(&self.k[r.clone()], &y[r.clone()]);
            value += v;
            err += e;
        }
        Ok((PI * value, PI * err))
    }
}

/// Rejects integrands that behave like `|k|^p`, `p ≤ −1`, near `k = 0`.
///
/// The test only applies when the grid reaches within 1% of its largest
/// `|k|` of the origin; elsewhere the integrand is bounded.
fn check_integrable(k: &[f64], y: &[f64], what: &str) -> Result<()> {
    let k_max = k.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let y_max = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if y.iter().any(|v| v.is_infinite()) {
        return Err(Error::Integrability { what: what.into(), exponent: f64::NEG_INFINITY });
    }
    if k_max == 0.0 || y_max == 0.0 {
        return Ok(());
    }
    let mut near: Vec<(f64, f64)> =
        k.iter().zip(y).filter(|(k, y)| **k != 0.0 && **y > 1e-14 * y_max && k.abs() < 1e-2 * k_max).map(|(k, y)| (k.abs(), *y)).collect();
    near.sort_by(|a, b| a.0.total_cmp(&b.0));
    near.dedup_by(|a, b| a.0 == b.0);
    if near.len() < 2 {
        return Ok(());
    }
    let (k1, y1) = near[0];
    let (k2, y2) = near[1];
    let exponent = (y2 / y1).ln() / (k2 / k1).ln();
    // A log divergence (p = −1) is rejected too; allow for rounding.
    if exponent <= -1.0 + 1e-3 {
        return Err(Error::Integrability { what: what.into(), exponent });
    }
    Ok(())
}

/// `τ̃0 = π ∫ |f|²/|ω'| dk`.
pub fn tau0_tilde(weight: &SpectralWeight, model: &DispersionModel) -> Result<f64> {
    Ok(SlownessTable::build(weight, model)?.node_integral(1, "tau0")?.0)
}

/// `τ̃2 = π ∫ |f|²/|ω'|³ dk`.
pub fn tau2_tilde(weight: &SpectralWeight, model: &DispersionModel) -> Result<f64> {
    Ok(SlownessTable::build(weight, model)?.node_integral(3, "tau2")?.0)
}

/// Both routes to `τ̃1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tau1Routes {
    /// `(π/4) PV∫ h/k²`, the primary value.
    pub by_parts: f64,
    /// `−(π/4) ∫ ln|2k| h''` on a spline of `h`.
    pub direct: f64,
    pub relative_difference: f64,
    /// Final excision half-width; zero when no node needed excising.
    pub pv_delta: f64,
    pub quadrature_error: f64,
}

fn by_parts_route(t: &SlownessTable) -> Result<(f64, f64, f64)> {
    // h/k² = 4 w s².
    let y = t.integrand(2);
    check_integrable(&t.k, &y, "tau1")?;
    let sum_excised = |delta: f64| -> (f64, f64) {
        let masked: Vec<f64> = t.k.iter().zip(&y).map(|(k, v)| if k.abs() < delta { 0.0 } else { *v }).collect();
        let (mut value, mut err) = (0.0, 0.0);
        for r in &t.panels {
            let (v, e) = trapezoid_with_error(&t.k[r.clone()], &masked[r.clone()]);
            value += v;
            err += e;
        }
        (PI * value, PI * err)
    };
    let k_min = t.k.iter().zip(&t.weight).filter(|(_, &w)| w > 0.0).fold(f64::INFINITY, |m, (k, _)| m.min(k.abs()));
    if !(k_min > 0.0) || !k_min.is_finite() {
        let (v, e) = sum_excised(0.0);
        return Ok((v, e, 0.0));
    }
    // No node closer to the origin than k_min: start the excision there.
    let mut delta = k_min;
    let mut previous = sum_excised(delta);
    for _ in 0..60 {
        delta *= 0.5;
        let current = sum_excised(delta);
        if (current.0 - previous.0).abs() <= PV_TOLERANCE * current.0.abs() {
            let used = if current.0 == previous.0 && delta * 2.0 <= k_min { 0.0 } else { delta };
            return Ok((current.0, current.1, used));
        }
        previous = current;
    }
    Err(Error::Quadrature { what: "principal value of tau1".into(), achieved: f64::NAN, target: PV_TOLERANCE })
}

fn direct_route(t: &SlownessTable) -> f64 {
    let rule = GaussRule::new(4, 0.0, 1.0);
    let mut total = 0.0;
    for r in &t.panels {
        let ks = t.k[r.clone()].to_vec();
        if ks.len() < 3 {
            continue;
        }
        // h = 4k² w s², referenced to the panel's weight peak; ∫h'' = 0 so the
        // constant log offset drops out and the cancellation is smaller.
        let h: Vec<f64> = r.clone().map(|i| 4.0 * t.k[i] * t.k[i] * t.weight[i] * t.slowness[i].powi(2)).collect();
        let peak = h.iter().enumerate().fold((0, 0.0), |m, (i, v)| if *v > m.1 { (i, *v) } else { m }).0;
        let k_ref = ks[peak].abs();
        if k_ref == 0.0 {
            continue;
        }
        let spline = CubicSpline::new(ks.clone(), h);
        for w in ks.windows(2) {
            let (a, b) = (w[0], w[1]);
            let len = b - a;
            total += len
                * rule
                    .nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(u, wt)| {
                        let k = a + u * len;
                        wt * (k.abs() / k_ref).ln() * spline.second_derivative(k)
                    })
                    .sum::<f64>();
        }
    }
    -0.25 * PI * total
}

/// Computes `τ̃1` both ways and fails when they disagree beyond
/// [`CROSS_CHECK_TOLERANCE`].
pub fn tau1_tilde_routes(weight: &SpectralWeight, model: &DispersionModel) -> Result<Tau1Routes> {
    let t = SlownessTable::build(weight, model)?;
    tau1_routes(&t)
}

fn tau1_routes(t: &SlownessTable) -> Result<Tau1Routes> {
    let (by_parts, quadrature_error, pv_delta) = by_parts_route(t)?;
    let direct = direct_route(t);
    let relative_difference = (direct - by_parts).abs() / by_parts.abs().max(f64::MIN_POSITIVE);
    if relative_difference > CROSS_CHECK_TOLERANCE {
        return Err(Error::CrossCheckMismatch {
            what: "tau1 (by parts vs log-kernel)".into(),
            first: by_parts,
            second: direct,
            relative: relative_difference,
            tolerance: CROSS_CHECK_TOLERANCE,
        });
    }
    Ok(Tau1Routes { by_parts, direct, relative_difference, pv_delta, quadrature_error })
}

/// `τ̃1`, by-parts value after the cross-check.
pub fn tau1_tilde(weight: &SpectralWeight, model: &DispersionModel) -> Result<f64> {
    Ok(tau1_tilde_routes(weight, model)?.by_parts)
}

/// Constants and slopes for one weight and dispersion law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticConstants {
    pub tau0_t: f64,
    pub tau1_t: f64,
    pub tau2_t: f64,
    /// Mean delay per length, `t̄ ≈ A z`.
    pub a: f64,
    /// Duration per length, `σ ≈ B z`.
    pub b: f64,
    pub p_nu: f64,
    pub tau1_routes: Tau1Routes,
    /// Quadrature error estimates of `τ̃0, τ̃1, τ̃2`.
    pub errors: [f64; 3],
}

/// `A = τ̃1/(P_ν τ̃0)`, `B = √(τ̃2/(P_ν τ̃0) − A²)`.
pub fn slopes(weight: &SpectralWeight, model: &DispersionModel, p_nu: f64) -> Result<AsymptoticConstants> {
    if !(p_nu > 0.0 && p_nu <= 1.0) {
        return Err(Error::invalid("P_nu", format!("{p_nu} must lie in (0, 1]")));
    }
    let t = SlownessTable::build(weight, model)?;
    let (tau0, e0) = t.node_integral(1, "tau0")?;
    let routes = tau1_routes(&t)?;
    let (tau2, e2) = t.node_integral(3, "tau2")?;
    if !(tau0 > 0.0) {
        return Err(Error::InsufficientData("spectral weight has no mass".into()));
    }
    let tau1 = routes.by_parts;
    let a = tau1 / (p_nu * tau0);

    // Variance of s under w·s, from the same trapezoid weights as τ̃0.
    let mean = tau1 / tau0;
    let centered: Vec<f64> =
        t.weight.iter().zip(&t.slowness).map(|(&w, &s)| if w > 0.0 { w * s * (s - mean).powi(2) } else { 0.0 }).collect();
    let mut var = 0.0;
    for r in &t.panels {
        var += trapezoid_with_error(&t.k[r.clone()], &centered[r.clone()]).0;
    }
    let var = PI * var / tau0;
    let radicand = var / p_nu + mean * mean * (1.0 / p_nu - 1.0 / (p_nu * p_nu));
    let tolerance = 1e-12 * mean * mean + mean * mean * (e2 / tau2 + 2.0 * e0 / tau0);
    if radicand < -tolerance {
        return Err(Error::NegativeVariance { radicand, tolerance });
    }
    Ok(AsymptoticConstants {
        tau0_t: tau0,
        tau1_t: tau1,
        tau2_t: tau2,
        a,
        b: radicand.max(0.0).sqrt(),
        p_nu,
        tau1_routes: routes,
        errors: [e0, routes.quadrature_error, e2],
    })
}

/// Numerical `∫₀^∞ ln t e^{−st} dt` against `−(γ + ln s)/s`.
///
/// Returns `(numerical, closed_form)`. The integral is taken in `y = ln t`,
/// where the integrand is smooth and decays on both sides, so the
/// trapezoid rule converges geometrically.
pub fn laplace_log_selfcheck(s: f64) -> Result<(f64, f64)> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::invalid("s", format!("{s} must be > 0")));
    }
    let (lo, hi) = (-45.0 - s.ln(), (60.0 / s).ln());
    let h = 0.01;
    let n = ((hi - lo) / h).ceil() as usize;
    let step = (hi - lo) / n as f64;
    let f = |y: f64| y * (y - s * y.exp()).exp();
    let mut sum = 0.5 * (f(lo) + f(hi));
    for i in 1..n {
        sum += f(lo + i as f64 * step);
    }
    Ok((sum * step, -(EULER_GAMMA + s.ln()) / s))
}

/// `σ(z) ≈ B z`.
pub fn extrapolate_sigma(b: f64, z: f64) -> f64 {
    b * z
}

/// Least-squares line through the origin with a Student-t band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub std_error: f64,
    /// Half width of the 95% interval; zero for a single point.
    pub ci95_half_width: f64,
    pub dof: usize,
}

/// Origin-constrained fit `σ = B z`.
pub fn origin_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.is_empty() {
        return Err(Error::InsufficientData("no (z, sigma) points".into()));
    }
    let szz: f64 = points.iter().map(|(z, _)| z * z).sum();
    if !(szz > 0.0) {
        return Err(Error::InsufficientData("all z are zero".into()));
    }
    let slope = points.iter().map(|(z, s)| z * s).sum::<f64>() / szz;
    let dof = points.len() - 1;
    if dof == 0 {
        return Ok(SlopeFit { slope, std_error: 0.0, ci95_half_width: 0.0, dof });
    }
    let rss: f64 = points.iter().map(|(z, s)| (s - slope * z).powi(2)).sum();
    let std_error = (rss / dof as f64 / szz).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof as f64).map_err(|e| Error::invalid("Student-t", e.to_string()))?.inverse_cdf(0.975);
    Ok(SlopeFit { slope, std_error, ci95_half_width: t * std_error, dof })
}

/// `B` from measured `(z, σ)`; the largest two `z` must agree on `σ/z`
/// within [`ASYMPTOTIC_CHANGE`].
pub fn calibrate_b(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 2 {
        return Err(Error::InsufficientData("calibration needs at least two (z, sigma) points".into()));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let [.., (z1, s1), (z2, s2)] = sorted[..] else { unreachable!() };
    if !(z1 > 0.0) {
        return Err(Error::invalid("calibration z", "must be > 0"));
    }
    let (r1, r2) = (s1 / z1, s2 / z2);
    let change = (r2 - r1).abs() / r2.abs().max(f64::MIN_POSITIVE);
    if change > ASYMPTOTIC_CHANGE {
        return Err(Error::NotAsymptotic { change, limit: ASYMPTOTIC_CHANGE });
    }
    origin_slope(&sorted)
}

/// One row of a growth report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthRow {
    pub z: f64,
    pub t_mean: f64,
    pub sigma: f64,
    pub sigma_over_z: f64,
    /// `B z` when a predicted `B` is supplied.
    pub predicted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    pub rows: Vec<GrowthRow>,
    pub fit: SlopeFit,
    pub predicted_b: Option<f64>,
}

/// Table of `(z, t̄, σ, σ/z)` with the origin-constrained slope of `σ`.
pub fn report_duration_growth(stats: &[ArrivalStatistics], predicted_b: Option<f64>) -> Result<GrowthReport> {
    if stats.len() < 3 {
        return Err(Error::InsufficientData(format!("growth report needs >= 3 z points, got {}", stats.len())));
    }
    let points: Vec<(f64, f64)> = stats.iter().map(|s| (s.z, s.sigma)).collect();
    let fit = origin_slope(&points)?;
    let rows = stats
        .iter()
        .map(|s| GrowthRow { z: s.z, t_mean: s.t_mean, sigma: s.sigma, sigma_over_z: s.sigma / s.z, predicted: predicted_b.map(|b| b * s.z) })
        .collect();
    Ok(GrowthReport { rows, fit, predicted_b })
}
