//! Arrival-time moments, mean and duration, expectations, and Monte Carlo
//! sampling of arrivals.
//!
//! Moments are accumulated about a reference time near the pulse center and
//! converted afterwards. For a pulse arriving at `t̄` with width `σ ≪ t̄`
//! the raw combination `τ2/τ0 − (τ1/τ0)²` would lose `(t̄/σ)²` in relative
//! precision; the centered sums keep it.

use crate::error::{Error, Result};
use crate::numerics::trapezoid_with_error;
use crate::propagation::ArrivalDistribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

/// `τ_n(z) = ∫ tⁿ P(z, t) dt` for `n ≤ 2`, with centered companions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentSet {
    pub z: f64,
    pub tau0: f64,
    pub tau1: f64,
    pub tau2: f64,
    /// Reference time of the centered moments.
    pub t_ref: f64,
    /// `∫ (t − t_ref) P dt` and `∫ (t − t_ref)² P dt`.
    pub centered1: f64,
    pub centered2: f64,
    /// Richardson estimates for `τ0` and the two centered moments.
    pub errors: [f64; 3],
}

impl MomentSet {
    /// Moments given directly, centered at `t = 0`.
    pub fn from_raw(z: f64, tau0: f64, tau1: f64, tau2: f64) -> Self {
        Self { z, tau0, tau1, tau2, t_ref: 0.0, centered1: tau1, centered2: tau2, errors: [0.0; 3] }
    }

    /// Multiplies every moment by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = *self;
        out.tau0 *= c;
        out.tau1 *= c;
        out.tau2 *= c;
        out.centered1 *= c;
        out.centered2 *= c;
        out.errors.iter_mut().for_each(|e| *e *= c);
        out
    }

    /// `τ2 τ0 − τ1²` relative to `τ2 τ0`, from the centered sums.
    pub fn cauchy_schwarz_gap(&self) -> f64 {
        let c = self.centered2 * self.tau0 - self.centered1 * self.centered1;
        c / (self.tau2 * self.tau0).abs().max(f64::MIN_POSITIVE)
    }
}

/// Mean arrival time and duration at one `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArrivalStatistics {
    pub z: f64,
    pub t_mean: f64,
    pub sigma: f64,
    pub p_nu: f64,
}

/// Trapezoid moments of the distribution up to `n_max ≤ 2`.
pub fn moments(dist: &ArrivalDistribution, n_max: usize) -> Result<MomentSet> {
    if n_max > 2 {
        return Err(Error::invalid("n_max", "moments beyond n = 2 are not provided"));
    }
    let (tau0, e0) = trapezoid_with_error(&dist.t, &dist.density);
    if !(tau0 > 0.0) {
        return Err(Error::InsufficientData(format!("zero arrival mass at z={}", dist.z)));
    }
    let weighted: Vec<f64> = dist.t.iter().zip(&dist.density).map(|(t, p)| t * p).collect();
    let t_ref = trapezoid_with_error(&dist.t, &weighted).0 / tau0;
    for n in 0..=n_max {
        dist.check_tail(n, Some(t_ref))?;
    }
    let shifted = |n: i32| -> Vec<f64> { dist.t.iter().zip(&dist.density).map(|(t, p)| (t - t_ref).powi(n) * p).collect() };
    let (c1, e1) = trapezoid_with_error(&dist.t, &shifted(1));
    let (c2, e2) = trapezoid_with_error(&dist.t, &shifted(2));
    Ok(MomentSet {
        z: dist.z,
        tau0,
        tau1: c1 + t_ref * tau0,
        tau2: c2 + 2.0 * t_ref * c1 + t_ref * t_ref * tau0,
        t_ref,
        centered1: c1,
        centered2: c2,
        errors: [e0, e1, e2],
    })
}

/// Relative tolerance on the variance radicand beyond quadrature error.
pub const VARIANCE_TOLERANCE: f64 = 1e-10;

/// `t̄ = τ1/(P_ν τ0)`, `σ = √(τ2/(P_ν τ0) − t̄²)`.
///
/// The radicand is formed from the centered moments; the result is
/// algebraically identical to the raw formula for every `P_ν`.
pub fn mean_and_sigma(ms: &MomentSet, p_nu: f64) -> Result<ArrivalStatistics> {
    if !(ms.tau0 > 0.0) {
        return Err(Error::InsufficientData("tau0 must be > 0".into()));
    }
    if !(p_nu > 0.0) {
        return Err(Error::invalid("P_nu", "must be > 0"));
    }
    let d = p_nu * ms.tau0;
    let t_mean = ms.tau1 / d;
    let c1 = ms.centered1 / d;
    let extra = (1.0 / p_nu - 1.0 / (p_nu * p_nu)) * (2.0 * ms.t_ref * ms.centered1 / ms.tau0 + ms.t_ref * ms.t_ref);
    let radicand = ms.centered2 / d - c1 * c1 + extra;
    let scale = (ms.tau2 / d).abs();
    let quad = ms.errors[2] / d + 2.0 * c1.abs() * ms.errors[1] / d;
    let tolerance = VARIANCE_TOLERANCE * scale + quad;
    if radicand < -tolerance {
        return Err(Error::NegativeVariance { radicand, tolerance });
    }
    Ok(ArrivalStatistics { z: ms.z, t_mean, sigma: radicand.max(0.0).sqrt(), p_nu })
}

/// `∫ f(t) p(z, t) dt` with `p = P/(P_ν ∫P dt)`.
pub fn expectation(dist: &ArrivalDistribution, f: impl Fn(f64) -> f64) -> Result<f64> {
    dist.check_tail(0, None)?;
    let mass = dist.mass();
    if !(mass > 0.0) {
        return Err(Error::InsufficientData("zero arrival mass".into()));
    }
    let y: Vec<f64> = dist.t.iter().zip(&dist.density).map(|(&t, p)| f(t) * p).collect();
    Ok(crate::numerics::trapezoid(&dist.t, &y) / (dist.p_nu * mass))
}

/// Samples drawn per RNG stream.
const SAMPLE_CHUNK: usize = 4096;

/// Arrival times drawn from one distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSet {
    pub z: f64,
    pub samples: Vec<f64>,
    pub rng_seed: u64,
}

impl SampleSet {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t")?;
        for t in &self.samples {
            writeln!(out, "{t:.17e}")?;
        }
        Ok(())
    }
}

/// Inverse-CDF sampler for the unit-mass piecewise-linear density `p·P_ν`.
struct InverseCdf<'a> {
    t: &'a [f64],
    p: &'a [f64],
    cdf: Vec<f64>,
}

impl<'a> InverseCdf<'a> {
    fn new(t: &'a [f64], p: &'a [f64]) -> Self {
        let mut cdf = Vec::with_capacity(t.len());
        cdf.push(0.0);
        for i in 0..t.len() - 1 {
            let last = cdf[i];
            cdf.push(last + 0.5 * (t[i + 1] - t[i]) * (p[i] + p[i + 1]));
        }
        Self { t, p, cdf }
    }

    fn draw(&self, u: f64) -> f64 {
        let total = self.cdf[self.cdf.len() - 1];
        let target = u * total;
        let i = self.cdf.partition_point(|&c| c <= target).clamp(1, self.cdf.len() - 1) - 1;
        let h = self.t[i + 1] - self.t[i];
        let r = target - self.cdf[i];
        let (p0, p1) = (self.p[i], self.p[i + 1]);
        let slope = (p1 - p0) / h;
        // Root of p0 x + slope x²/2 = r in the rationalized form.
        let disc = (p0 * p0 + 2.0 * slope * r).max(0.0);
        let den = p0 + disc.sqrt();
        let x = if den > 0.0 { 2.0 * r / den } else { 0.0 };
        self.t[i] + x.clamp(0.0, h)
    }
}

/// Draws `n` arrivals; chunk `c` uses ChaCha8 stream `c` of `seed`, so the
/// result does not depend on the number of worker threads.
pub fn sample_arrival_times(dist: &ArrivalDistribution, n: usize, seed: u64) -> Result<SampleSet> {
    if n < 2 {
        return Err(Error::InsufficientData(format!("need N >= 2 samples, got {n}")));
    }
    dist.check_tail(0, None)?;
    if !(dist.mass() > 0.0) {
        return Err(Error::InsufficientData("zero arrival mass".into()));
    }
    let sampler = InverseCdf::new(&dist.t, &dist.density);
    let chunks = n.div_ceil(SAMPLE_CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = SAMPLE_CHUNK.min(n - c * SAMPLE_CHUNK);
            (0..len).map(|_| sampler.draw(rng.gen::<f64>())).collect()
        })
        .collect();
    Ok(SampleSet { z: dist.z, samples: parts.concat(), rng_seed: seed })
}

/// `√((1/(N−1)) [Σ t_n² − (1/N)(Σ t_n)²])`.
///
/// The sums run over `t_n − t_1`; the value is unchanged by the shift and the
/// two sums no longer cancel catastrophically when `t̄ ≫ σ`.
pub fn estimate_sigma(ss: &SampleSet) -> Result<f64> {
    sample_sigma(&ss.samples)
}

pub fn sample_sigma(samples: &[f64]) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("need N >= 2 samples, got {n}")));
    }
    let origin = samples[0];
    let (mut s1, mut s2) = (0.0, 0.0);
    for &t in samples {
        let d = t - origin;
        s1 += d;
        s2 += d * d;
    }
    let nf = n as f64;
    Ok(((s2 - s1 * s1 / nf) / (nf - 1.0)).max(0.0).sqrt())
}
