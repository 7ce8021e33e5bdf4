//! Direct evaluation of `A(ρ, z, t) = ∫ dk f(k, ρ) e^{i(kz − ωt)}` and the
//! arrival densities built from it.
//!
//! The k integral is a trapezoid sum on uniform panels. Phases are taken
//! relative to the carrier `(k_c, ω_c)`, which only changes the global
//! phase of `A`. A panel is evaluated on the coarsest power-of-two
//! subsampling of its fine table for which every step of the phase
//! `kz − ωt` is at most `π/4` (eight samples per local period). A panel whose
//! phase is monotone with `min |∂_k φ| · σ_k ≥ 40` over the whole time
//! window contributes below `e^{−800}` of its envelope and is skipped; this
//! is what happens to the backward-moving half of a two-sided spectrum.

use crate::dispersion::RegularizationParameter;
use crate::error::{Error, Result};
use crate::mode_fields::{Handedness, ModeSlice, PolarizationVector, SpectralAmplitude, Waveguide};
use crate::numerics::{linspace, GaussRule};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

/// Largest allowed phase step between neighbouring k nodes.
pub const MAX_PHASE_STEP: f64 = PI / 4.0;
/// `min |∂_k φ| σ_k` above which a panel counts as non-stationary.
const SKIP_THRESHOLD: f64 = 40.0;
/// Largest node spacing relative to the envelope width; the trapezoid
/// error on a Gaussian envelope is then below `e^{−2π²·16}`.
const ENVELOPE_STEP: f64 = 0.25;
/// Hard cap on nodes per fine panel.
const MAX_PANEL_NODES: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationSettings {
    /// Nodes per panel of the coarse table used for planning.
    pub base_nodes: usize,
    /// Radial Gauss nodes; `None` picks the count from a convergence check.
    pub radial_nodes: Option<usize>,
    /// Fraction of each panel covered by the cosine end taper.
    pub taper_fraction: f64,
    pub t_points: usize,
    /// Half-width of the time window in guessed standard deviations.
    pub n_sigma: f64,
    /// Largest acceptable tail mass fraction.
    pub tail_bound: f64,
    pub eps: RegularizationParameter,
}

impl Default for PropagationSettings {
    fn default() -> Self {
        Self {
            base_nodes: 257,
            radial_nodes: None,
            taper_fraction: 0.05,
            t_points: 1025,
            n_sigma: 12.0,
            tail_bound: 1e-6,
            eps: RegularizationParameter::ZERO,
        }
    }
}

/// Radial quadrature over the core with the `2πρ` factor folded in.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialNodes {
    pub rho: Vec<f64>,
    pub weight: Vec<f64>,
}

impl RadialNodes {
    pub fn gauss(n: usize, a: f64) -> Self {
        let rule = GaussRule::new(n, 0.0, a);
        let weight = rule.nodes.iter().zip(&rule.weights).map(|(r, w)| 2.0 * PI * r * w).collect();
        Self { rho: rule.nodes, weight }
    }
}

#[derive(Debug, Clone)]
struct Panel {
    k: Vec<f64>,
    spacing: f64,
    /// `g(k)` times the end taper.
    coeff: Vec<Complex64>,
    /// `ω − ω_c` per node.
    d_omega: Vec<f64>,
    /// `√(ħω/2ε0) ν·ψ(ρ_r)` per node and radial node, row-major by node.
    field: Vec<f64>,
    slices: Vec<ModeSlice>,
    /// Amplitude envelope width for the skip test.
    envelope_width: f64,
}

/// Panel-wise table of everything the k sum needs.
#[derive(Debug, Clone)]
pub struct AmplitudeTable {
    panels: Vec<Panel>,
    radial: RadialNodes,
    k_carrier: f64,
    omega_carrier: f64,
    handedness: Handedness,
    p_nu: f64,
}

fn taper(u: f64, fraction: f64) -> f64 {
    // u in [0, 1] across the panel.
    if fraction <= 0.0 {
        return 1.0;
    }
    let edge = u.min(1.0 - u);
    if edge >= fraction {
        1.0
    } else {
        0.5 * (1.0 - (PI * edge / fraction).cos())
    }
}

impl AmplitudeTable {
    /// Builds panels with `nodes` points each.
    pub fn build(
        wg: &Waveguide,
        g: &SpectralAmplitude,
        nu: &PolarizationVector,
        settings: &PropagationSettings,
        nodes: usize,
    ) -> Result<Self> {
        if nodes < 3 {
            return Err(Error::invalid("k nodes per panel", "need at least 3"));
        }
        let radial = choose_radial(wg, g, nu, settings)?;
        let k_carrier = g.carrier();
        let omega_carrier = wg.slice(k_carrier, settings.eps, None)?.omega;
        let mut panels: Vec<Panel> = Vec::new();
        for (lo, hi) in g.panels() {
            // A panel that mirrors an already built one reuses its mode data.
            if let Some(src) = panels.iter().find(|p| p.k[0] == -hi && p.k[p.k.len() - 1] == -lo) {
                let k: Vec<f64> = src.k.iter().rev().map(|v| -v).collect();
                let n = k.len();
                let mut field = vec![0.0; src.field.len()];
                let nr = radial.rho.len();
                for j in 0..n {
                    field[j * nr..(j + 1) * nr].copy_from_slice(&src.field[(n - 1 - j) * nr..(n - j) * nr]);
                }
                let coeff = k
                    .iter()
                    .enumerate()
                    .map(|(j, &kk)| g.value(kk) * taper(j as f64 / (n - 1) as f64, settings.taper_fraction))
                    .collect();
                panels.push(Panel {
                    k,
                    spacing: src.spacing,
                    coeff,
                    d_omega: src.d_omega.iter().rev().copied().collect(),
                    field,
                    slices: src.slices.iter().rev().copied().collect(),
                    envelope_width: src.envelope_width,
                });
                continue;
            }
            let k = linspace(lo, hi, nodes);
            let mut slices = Vec::with_capacity(nodes);
            let mut hint = None;
            for &kk in &k {
                let s = wg.slice(kk.abs(), settings.eps, hint.as_ref())?;
                hint = s.point;
                slices.push(s);
            }
            let nr = radial.rho.len();
            let mut field = Vec::with_capacity(nodes * nr);
            for s in &slices {
                for &rho in &radial.rho {
                    field.push(s.field(nu.handedness, rho));
                }
            }
            let coeff: Vec<Complex64> = k
                .iter()
                .enumerate()
                .map(|(j, &kk)| g.value(kk) * taper(j as f64 / (nodes - 1) as f64, settings.taper_fraction))
                .collect();
            let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
            for (kk, c) in k.iter().zip(&coeff) {
                let w = c.norm_sqr();
                m0 += w;
                m1 += w * kk;
                m2 += w * kk * kk;
            }
            let var = if m0 > 0.0 { (m2 / m0 - (m1 / m0).powi(2)).max(0.0) } else { 0.0 };
            panels.push(Panel {
                spacing: k[1] - k[0],
                d_omega: slices.iter().map(|s| s.omega - omega_carrier).collect(),
                k,
                coeff,
                field,
                slices,
                // Width of |g| as an amplitude: √2 times the std of |g|².
                envelope_width: (2.0 * var).sqrt(),
            });
        }
        Ok(Self { panels, radial, k_carrier, omega_carrier, handedness: nu.handedness, p_nu: nu.p_nu })
    }

    pub fn radial_nodes(&self) -> &RadialNodes {
        &self.radial
    }

    pub fn nodes_per_panel(&self) -> usize {
        self.panels.first().map_or(0, |p| p.k.len())
    }

    pub fn p_nu(&self) -> f64 {
        self.p_nu
    }

    /// Group delay `1/ω'` and radial spectral power per forward node, with
    /// `ω'` from differences along the table.
    fn forward_slowness(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (mut ks, mut s, mut w) = (Vec::new(), Vec::new(), Vec::new());
        let nr = self.radial.rho.len();
        for p in self.panels.iter().filter(|p| p.k[0] > 0.0) {
            let n = p.k.len();
            for j in 0..n {
                let (a, b) = if j == 0 { (0, 1) } else if j == n - 1 { (n - 2, n - 1) } else { (j - 1, j + 1) };
                let vg = (p.d_omega[b] - p.d_omega[a]) / (p.k[b] - p.k[a]);
                let power: f64 = (0..nr).map(|r| self.radial.weight[r] * p.field[j * nr + r].powi(2)).sum();
                ks.push(p.k[j]);
                s.push(1.0 / vg);
                w.push(p.coeff[j].norm_sqr() * power / vg.abs());
            }
        }
        (ks, s, w)
    }

    /// Guessed mean arrival time and duration at `z`.
    pub fn pulse_guess(&self, z: f64) -> (f64, f64) {
        let (ks, s, w) = self.forward_slowness();
        let total: f64 = w.iter().sum();
        if total == 0.0 {
            return (0.0, 0.0);
        }
        let mean_s: f64 = s.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / total;
        let var_s: f64 = s.iter().zip(&w).map(|(a, b)| (a - mean_s).powi(2) * b).sum::<f64>() / total;
        let mean_k: f64 = ks.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / total;
        let var_k: f64 = ks.iter().zip(&w).map(|(a, b)| (a - mean_k).powi(2) * b).sum::<f64>() / total;
        let sigma0 = mean_s.abs() / (2.0 * var_k.sqrt());
        (z * mean_s, (sigma0 * sigma0 + z * z * var_s).sqrt())
    }

    /// Time window `[max(0, t̄ − nσ), t̄ + nσ]` for `z`.
    pub fn time_window(&self, z: f64, n_sigma: f64) -> (f64, f64) {
        let (tm, sg) = self.pulse_guess(z);
        ((tm - n_sigma * sg).max(0.0), tm + n_sigma * sg)
    }

    fn phase_steps(&self, p: &Panel, stride: usize, z: f64, t: f64) -> f64 {
        let mut worst = 0.0_f64;
        let mut j = 0;
        while j + stride < p.k.len() {
            let d = (p.k[j + stride] - p.k[j]) * z - (p.d_omega[j + stride] - p.d_omega[j]) * t;
            worst = worst.max(d.abs());
            j += stride;
        }
        worst
    }

    fn skippable(&self, p: &Panel, z: f64, t_lo: f64, t_hi: f64) -> bool {
        if p.envelope_width == 0.0 {
            return true;
        }
        let mut min_abs = f64::INFINITY;
        let mut sign = 0.0;
        for &t in &[t_lo, t_hi] {
            for j in 0..p.k.len() - 1 {
                let d = ((p.k[j + 1] - p.k[j]) * z - (p.d_omega[j + 1] - p.d_omega[j]) * t) / p.spacing;
                if sign == 0.0 {
                    sign = d.signum();
                }
                if d.signum() != sign || d == 0.0 {
                    return false;
                }
                min_abs = min_abs.min(d.abs());
            }
        }
        min_abs * p.envelope_width >= SKIP_THRESHOLD
    }

    /// Plan for a time range at `z`: per-panel stride, or `None` to skip.
    pub fn plan(&self, z: f64, t_lo: f64, t_hi: f64) -> Result<Vec<Option<usize>>> {
        let mut out = Vec::with_capacity(self.panels.len());
        for p in &self.panels {
            if self.skippable(p, z, t_lo, t_hi) {
                out.push(None);
                continue;
            }
            let worst = self.phase_steps(p, 1, z, t_lo).max(self.phase_steps(p, 1, z, t_hi));
            if worst > MAX_PHASE_STEP {
                let n = p.k.len() as f64;
                return Err(Error::PhaseResolution { z, t: t_hi, needed: n * worst / MAX_PHASE_STEP, actual: n });
            }
            let mut stride = 1;
            while (p.k.len() - 1) % (2 * stride) == 0
                && (p.k.len() - 1) / (2 * stride) >= 16
                && p.spacing * (2 * stride) as f64 <= ENVELOPE_STEP * p.envelope_width
                && self.phase_steps(p, 2 * stride, z, t_lo).max(self.phase_steps(p, 2 * stride, z, t_hi)) <= MAX_PHASE_STEP
            {
                stride *= 2;
            }
            out.push(Some(stride));
        }
        Ok(out)
    }

    /// Power-of-two refinement of `nodes` that resolves every `(z, t)` range.
    pub fn required_nodes(&self, ranges: &[(f64, f64, f64)]) -> Result<usize> {
        let mut factor = 1usize;
        for &(z, t_lo, t_hi) in ranges {
            for p in &self.panels {
                if self.skippable(p, z, t_lo, t_hi) {
                    continue;
                }
                let worst = self.phase_steps(p, 1, z, t_lo).max(self.phase_steps(p, 1, z, t_hi));
                let need = (1.1 * worst / MAX_PHASE_STEP).ceil().max(1.0) as usize;
                factor = factor.max(need.next_power_of_two());
            }
        }
        let nodes = (self.nodes_per_panel() - 1) * factor + 1;
        if nodes > MAX_PANEL_NODES {
            return Err(Error::PhaseResolution {
                z: ranges.iter().map(|r| r.0).fold(0.0, f64::max),
                t: ranges.iter().map(|r| r.2).fold(0.0, f64::max),
                needed: nodes as f64,
                actual: MAX_PANEL_NODES as f64,
            });
        }
        Ok(nodes)
    }

    /// Amplitudes at every radial node for one `(z, t)`.
    fn radial_amplitudes(&self, plan: &[Option<usize>], z: f64, t: f64, out: &mut [Complex64]) {
        out.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        let nr = self.radial.rho.len();
        for (p, stride) in self.panels.iter().zip(plan) {
            let Some(stride) = *stride else { continue };
            let n = p.k.len();
            let h = p.spacing * stride as f64;
            let mut j = 0;
            while j < n {
                let w = if j == 0 || j == n - 1 { 0.5 * h } else { h };
                let phase = (p.k[j] - self.k_carrier) * z - p.d_omega[j] * t;
                let (s, c) = phase.sin_cos();
                let term = p.coeff[j] * Complex64::new(c, s) * w;
                let row = &p.field[j * nr..(j + 1) * nr];
                for (o, f) in out.iter_mut().zip(row) {
                    *o += term * *f;
                }
                j += stride;
            }
        }
    }

    /// `P(z, t) = 2π ∫₀^a ρ |A(ρ, z, t)|² dρ` with a given plan.
    fn density_with_plan(&self, plan: &[Option<usize>], z: f64, t: f64) -> f64 {
        let mut amps = vec![Complex64::new(0.0, 0.0); self.radial.rho.len()];
        self.radial_amplitudes(plan, z, t, &mut amps);
        amps.iter().zip(&self.radial.weight).map(|(a, w)| w * a.norm_sqr()).sum()
    }

    /// `A(ρ, z, t)` at an arbitrary radius; the carrier phase
    /// `e^{i(k_c z − ω_c t)}` is included.
    pub fn amplitude(&self, z: f64, t: f64, rho: f64) -> Result<Complex64> {
        let plan = self.plan(z, t, t)?;
        let mut acc = Complex64::new(0.0, 0.0);
        for (p, stride) in self.panels.iter().zip(&plan) {
            let Some(stride) = *stride else { continue };
            let n = p.k.len();
            let h = p.spacing * stride as f64;
            let mut j = 0;
            while j < n {
                let w = if j == 0 || j == n - 1 { 0.5 * h } else { h };
                let phase = (p.k[j] - self.k_carrier) * z - p.d_omega[j] * t;
                acc += p.coeff[j] * Complex64::from_polar(w, phase) * p.slices[j].field(self.handedness, rho);
                j += stride;
            }
        }
        let carrier = self.k_carrier * z - self.omega_carrier * t;
        Ok(acc * Complex64::from_polar(1.0, carrier))
    }

    /// `P(ρ, z, t) = |A(ρ, z, t)|²`.
    pub fn probability_density(&self, z: f64, t: f64, rho: f64) -> Result<f64> {
        Ok(self.amplitude(z, t, rho)?.norm_sqr())
    }

    /// `P(z, t)` over the core cross-section.
    pub fn cross_section_density(&self, z: f64, t: f64) -> Result<f64> {
        let plan = self.plan(z, t, t)?;
        Ok(self.density_with_plan(&plan, z, t))
    }

    /// `P(z, ·)` on `t_grid`, evaluated in parallel with a fixed per-point
    /// summation order.
    pub fn density_on(&self, z: f64, t_grid: &[f64]) -> Result<(Vec<f64>, Vec<Option<usize>>)> {
        let (lo, hi) = (t_grid[0], t_grid[t_grid.len() - 1]);
        let plan = self.plan(z, lo, hi)?;
        let values = t_grid.par_iter().map(|&t| self.density_with_plan(&plan, z, t)).collect();
        Ok((values, plan))
    }
}

fn choose_radial(
    wg: &Waveguide,
    g: &SpectralAmplitude,
    nu: &PolarizationVector,
    settings: &PropagationSettings,
) -> Result<RadialNodes> {
    let a = wg.core_radius;
    let slice = wg.slice(g.carrier(), settings.eps, None)?;
    if let Some(n) = settings.radial_nodes {
        return Ok(RadialNodes::gauss(n.max(1), a));
    }
    if matches!(wg.model, crate::dispersion::DispersionModel::Fiber(_)) {
        let power = |nodes: &RadialNodes| -> f64 {
            nodes.rho.iter().zip(&nodes.weight).map(|(r, w)| w * slice.field(nu.handedness, *r).powi(2)).sum()
        };
        let mut n = 4;
        let mut prev = power(&RadialNodes::gauss(n, a));
        while n < 256 {
            let next = power(&RadialNodes::gauss(2 * n, a));
            if (next - prev).abs() <= 1e-12 * next.abs() {
                return Ok(RadialNodes::gauss(n, a));
            }
            prev = next;
            n *= 2;
        }
        Ok(RadialNodes::gauss(n, a))
    } else {
        // Uniform profile: one node integrates it exactly.
        Ok(RadialNodes::gauss(1, a))
    }
}

/// Sampled `P(z, t)` plus the data needed to normalize and audit it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArrivalDistribution {
    pub z: f64,
    pub t: Vec<f64>,
    /// `P(z, t)`; arbitrary overall scale.
    pub density: Vec<f64>,
    pub p_nu: f64,
    /// Fraction of `∫P dt` in the outer bands of each truncated window edge.
    pub tail_mass_estimate: f64,
    pub tail_bound: f64,
    /// Whether the window starts above `t = 0`.
    pub lower_truncated: bool,
    pub k_nodes_used: usize,
    pub skipped_panels: usize,
    pub radial_nodes: usize,
}

/// Width of the audited edge band as a fraction of the window.
const TAIL_BAND: f64 = 1.0 / 24.0;

impl ArrivalDistribution {
    /// Builds from samples, auditing the tail.
    pub fn from_samples(z: f64, t: Vec<f64>, density: Vec<f64>, p_nu: f64, tail_bound: f64, lower_truncated: bool) -> Result<Self> {
        if t.len() != density.len() || t.len() < 3 {
            return Err(Error::invalid("arrival distribution", "need >= 3 matching samples"));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) || t[0] < 0.0 {
            return Err(Error::invalid("time grid", "must be increasing with t >= 0"));
        }
        if density.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::invalid("arrival density", "samples must be finite and >= 0"));
        }
        let mut d = Self {
            z,
            t,
            density,
            p_nu,
            tail_mass_estimate: 0.0,
            tail_bound,
            lower_truncated,
            k_nodes_used: 0,
            skipped_panels: 0,
            radial_nodes: 0,
        };
        d.tail_mass_estimate = d.tail_fraction(0, None);
        Ok(d)
    }

    /// Tail share of `∫ |t − t_ref|^n P dt` in the edge bands.
    pub fn tail_fraction(&self, n: i32, t_ref: Option<f64>) -> f64 {
        let (lo, hi) = (self.t[0], self.t[self.t.len() - 1]);
        let band = TAIL_BAND * (hi - lo);
        let t_ref = t_ref.unwrap_or(0.5 * (lo + hi));
        let (mut tail, mut total) = (0.0, 0.0);
        for i in 0..self.t.len() - 1 {
            let tm = 0.5 * (self.t[i] + self.t[i + 1]);
            let w = (self.t[i + 1] - self.t[i]) * 0.5 * (self.density[i] + self.density[i + 1]) * (tm - t_ref).abs().powi(n);
            total += w;
            let in_upper = tm > hi - band;
            let in_lower = self.lower_truncated && tm < lo + band;
            if in_upper || in_lower {
                tail += w;
            }
        }
        if total > 0.0 {
            tail / total
        } else {
            0.0
        }
    }

    pub fn check_tail(&self, n: usize, t_ref: Option<f64>) -> Result<()> {
        let tail = self.tail_fraction(n as i32, t_ref);
        if tail > self.tail_bound {
            return Err(Error::TailTruncation { n, tail, bound: self.tail_bound });
        }
        Ok(())
    }

    /// `∫ P dt` by the trapezoid rule.
    pub fn mass(&self) -> f64 {
        crate::numerics::trapezoid(&self.t, &self.density)
    }

    /// Piecewise-linear `p(z, t) = P / (P_ν ∫P dt)`; zero outside the grid.
    pub fn normalized_density(&self) -> impl Fn(f64) -> f64 + '_ {
        let scale = 1.0 / (self.p_nu * self.mass());
        move |t: f64| {
            let n = self.t.len();
            if t < self.t[0] || t > self.t[n - 1] {
                return 0.0;
            }
            let i = self.t.partition_point(|&v| v <= t).clamp(1, n - 1) - 1;
            let u = (t - self.t[i]) / (self.t[i + 1] - self.t[i]);
            scale * (self.density[i] * (1.0 - u) + self.density[i + 1] * u)
        }
    }

    /// `∫_{t1}^{t2} p(z, t) dt` of the piecewise-linear density.
    pub fn interval_probability(&self, t1: f64, t2: f64) -> Result<f64> {
        if !(t1 >= 0.0) || !(t2 >= t1) {
            return Err(Error::invalid("interval", format!("need 0 <= t1 <= t2, got [{t1}, {t2}]")));
        }
        self.check_tail(0, None)?;
        let p = self.normalized_density();
        let n = self.t.len();
        let (a, b) = (t1.max(self.t[0]), t2.min(self.t[n - 1]));
        if b <= a {
            return Ok(0.0);
        }
        let mut acc = 0.0;
        for i in 0..n - 1 {
            let lo = self.t[i].max(a);
            let hi = self.t[i + 1].min(b);
            if hi > lo {
                acc += 0.5 * (hi - lo) * (p(lo) + p(hi));
            }
        }
        Ok(acc)
    }
}

/// Direct pipeline for one scenario: the table plus its settings.
#[derive(Debug, Clone)]
pub struct Propagator {
    pub table: AmplitudeTable,
    pub settings: PropagationSettings,
}

impl Propagator {
    /// Plans the table from a coarse build so that every `z` in `zs` is
    /// resolved over its default time window.
    pub fn new(
        wg: &Waveguide,
        g: &SpectralAmplitude,
        nu: &PolarizationVector,
        settings: PropagationSettings,
        zs: &[f64],
    ) -> Result<Self> {
        let coarse = AmplitudeTable::build(wg, g, nu, &settings, settings.base_nodes)?;
        let ranges: Vec<(f64, f64, f64)> = zs
            .iter()
            .map(|&z| {
                // Room for two window doublings.
                let (tm, sg) = coarse.pulse_guess(z);
                let w = 4.0 * settings.n_sigma * sg;
                (z, (tm - w).max(0.0), tm + w)
            })
            .collect();
        let nodes = coarse.required_nodes(&ranges)?;
        let table = if nodes == coarse.nodes_per_panel() {
            coarse
        } else {
            AmplitudeTable::build(wg, g, nu, &settings, nodes)?
        };
        Ok(Self { table, settings })
    }

    /// `P(z, ·)` on the default window, widened up to twice when the tail
    /// audit fails.
    pub fn arrival_distribution(&self, z: f64) -> Result<ArrivalDistribution> {
        let (tm, sg) = self.table.pulse_guess(z);
        let mut half = self.settings.n_sigma * sg;
        let mut last = None;
        for _ in 0..3 {
            let lo = (tm - half).max(0.0);
            let t = linspace(lo, tm + half, self.settings.t_points);
            let d = self.arrival_distribution_on(z, &t)?;
            if d.tail_mass_estimate <= self.settings.tail_bound {
                return Ok(d);
            }
            last = Some(d);
            half *= 2.0;
        }
        Ok(last.expect("loop ran"))
    }

    pub fn arrival_distribution_on(&self, z: f64, t: &[f64]) -> Result<ArrivalDistribution> {
        let (density, plan) = self.table.density_on(z, t)?;
        let mut d = ArrivalDistribution::from_samples(z, t.to_vec(), density, self.table.p_nu, self.settings.tail_bound, t[0] > 0.0)?;
        d.k_nodes_used = self
            .table
            .panels
            .iter()
            .zip(&plan)
            .map(|(p, s)| s.map_or(0, |s| (p.k.len() - 1) / s + 1))
            .sum();
        d.skipped_panels = plan.iter().filter(|s| s.is_none()).count();
        d.radial_nodes = self.table.radial.rho.len();
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::{DispersionModel, FiberMode, FiberParameters};
    use crate::numerics::trapezoid;

    fn toy(model: DispersionModel) -> Waveguide {
        Waveguide::toy(model, 4e-6).unwrap()
    }

    #[test]
    fn origin_amplitude_is_plain_integral() {
        let wg = toy(DispersionModel::dispersionless(2e8).unwrap());
        let g = SpectralAmplitude::gaussian(5e6, 1e5, 2).unwrap().with_one_sided(true);
        let nu = PolarizationVector::default();
        let settings = PropagationSettings { taper_fraction: 0.0, ..Default::default() };
        let table = AmplitudeTable::build(&wg, &g, &nu, &settings, 2049).unwrap();
        let a = table.amplitude(0.0, 0.0, 1e-6).unwrap();
        // Oracle: trapezoid of g(k) √(ħω/2ε0) ψ on an independent finer grid.
        let (lo, hi) = g.forward_support();
        let k = linspace(lo, hi, 8193);
        let y: Vec<f64> = k
            .iter()
            .map(|&kk| {
                let s = wg.slice(kk, RegularizationParameter::ZERO, None).unwrap();
                g.value(kk).re * s.field(Handedness::CoRotating, 1e-6)
            })
            .collect();
        let oracle = trapezoid(&k, &y);
        assert!((a.re / oracle - 1.0).abs() < 1e-10 && a.im.abs() < 1e-10 * oracle, "{a} {oracle}");
    }

    #[test]
    fn dispersionless_translation() {
        let v = 2e8;
        let wg = toy(DispersionModel::dispersionless(v).unwrap());
        let g = SpectralAmplitude::gaussian(5e6, 1e5, 2).unwrap().with_one_sided(true);
        let nu = PolarizationVector::default();
        let z = 0.5;
        let prop = Propagator::new(&wg, &g, &nu, PropagationSettings::default(), &[z]).unwrap();
        let d = prop.arrival_distribution(z).unwrap();
        let peak = d.density.iter().cloned().fold(0.0, f64::max);
        for (i, &t) in d.t.iter().enumerate().step_by(16) {
            let shifted = prop.table.probability_density(0.0, t - z / v, 1e-6).unwrap();
            let here = prop.table.probability_density(z, t, 1e-6).unwrap();
            assert!((here - shifted).abs() <= 1e-6 * peak.max(here), "t index {i}");
            assert!(d.density[i] >= 0.0);
        }
    }

    #[test]
    fn global_phase_and_density_identity() {
        let wg = toy(DispersionModel::massive(2e8, 1e15).unwrap());
        let g = SpectralAmplitude::gaussian(5e6, 1e5, 2).unwrap();
        let nu = PolarizationVector::default();
        let s = PropagationSettings::default();
        let z = 0.01;
        let t1 = Propagator::new(&wg, &g, &nu, s, &[z]).unwrap().table;
        let g2 = g.clone().with_scale(Complex64::from_polar(1.0, 0.7));
        let t2 = Propagator::new(&wg, &g2, &nu, s, &[z]).unwrap().table;
        let (lo, hi) = t1.time_window(z, 12.0);
        let peak = t1.cross_section_density(z, t1.pulse_guess(z).0).unwrap() / (PI * 16e-12);
        for t in linspace(lo, hi, 7) {
            let a = t1.amplitude(z, t, 1e-6).unwrap();
            let p = t1.probability_density(z, t, 1e-6).unwrap();
            assert_eq!(p, a.norm_sqr());
            let p2 = t2.probability_density(z, t, 1e-6).unwrap();
            assert!((p - p2).abs() <= 1e-12 * peak);
            // Uniform profile: the cross-section is πa² times the point density.
            let cs = t1.cross_section_density(z, t).unwrap();
            assert!((cs - PI * 16e-12 * p).abs() <= 1e-10 * PI * 16e-12 * peak);
        }
    }

    #[test]
    fn backward_panel_is_skipped_only_when_non_stationary() {
        let wg = toy(DispersionModel::massive(2e8, 1e15).unwrap());
        let g = SpectralAmplitude::gaussian(5e6, 1e5, 2).unwrap();
        let s = PropagationSettings::default();
        let table = Propagator::new(&wg, &g, &PolarizationVector::default(), s, &[0.02]).unwrap().table;
        let plan = table.plan(0.0, 0.0, 0.0).unwrap();
        assert!(plan.iter().all(|p| p.is_some()));
        let (lo, hi) = table.time_window(0.02, 12.0);
        let plan = table.plan(0.02, lo, hi).unwrap();
        assert!(plan[0].is_none() && plan[1].is_some());
    }

    #[test]
    fn phase_resolution_error_when_table_is_coarse() {
        let wg = toy(DispersionModel::massive(2e8, 1e15).unwrap());
        let g = SpectralAmplitude::gaussian(5e6, 1e5, 2).unwrap().with_one_sided(true);
        let table = AmplitudeTable::build(&wg, &g, &PolarizationVector::default(), &PropagationSettings::default(), 65).unwrap();
        let (lo, hi) = table.time_window(0.5, 12.0);
        assert!(matches!(table.plan(0.5, lo, hi), Err(Error::PhaseResolution { .. })));
    }

    #[test]
    fn fiber_radial_refinement_is_stable() {
        let fp = FiberParameters::new(4e-6, 1.0, 2.1025, 1.0, 2.085).unwrap();
        let wg = Waveguide::fiber(DispersionModel::Fiber(FiberMode::he11(fp).unwrap())).unwrap();
        let kc = 5.8576e6;
        let g = SpectralAmplitude::gaussian(kc, 0.02 * kc, 2).unwrap();
        let nu = PolarizationVector::default();
        let z = 1.0;
        let auto = Propagator::new(&wg, &g, &nu, PropagationSettings::default(), &[z]).unwrap().table;
        let n = auto.radial_nodes().rho.len();
        let s2 = PropagationSettings { radial_nodes: Some(2 * n), ..Default::default() };
        let fine = Propagator::new(&wg, &g, &nu, s2, &[z]).unwrap().table;
        let (lo, hi) = auto.time_window(z, 12.0);
        for t in linspace(lo, hi, 9).into_iter().skip(3).take(3) {
            let a = auto.cross_section_density(z, t).unwrap();
            let b = fine.cross_section_density(z, t).unwrap();
            assert!((a - b).abs() < 1e-7 * a, "{a} {b}");
        }
    }

    #[test]
    fn interval_probabilities() {
        let wg = toy(DispersionModel::massive(2e8, 1e15).unwrap());
        let g = SpectralAmplitude::gaussian(5e6, 1e5, 2).unwrap();
        let nu = PolarizationVector::default();
        let z = 0.04;
        let prop = Propagator::new(&wg, &g, &nu, PropagationSettings::default(), &[z]).unwrap();
        let d = prop.arrival_distribution(z).unwrap();
        assert!(d.tail_mass_estimate < 1e-9);
        let full = d.interval_probability(0.0, f64::INFINITY).unwrap();
        assert!((full - 1.0).abs() < 1e-12);
        assert_eq!(d.interval_probability(1e-9, 1e-9).unwrap(), 0.0);
        // Mean and spread by plain trapezoid sums on the grid.
        let m0 = trapezoid(&d.t, &d.density);
        let m1 = trapezoid(&d.t, &d.t.iter().zip(&d.density).map(|(t, p)| t * p).collect::<Vec<_>>()) / m0;
        let var = trapezoid(&d.t, &d.t.iter().zip(&d.density).map(|(t, p)| (t - m1).powi(2) * p).collect::<Vec<_>>()) / m0;
        let sd = var.sqrt();
        let inner = d.interval_probability(m1 - 3.0 * sd, m1 + 3.0 * sd).unwrap();
        assert!(inner > 0.95 && inner <= full);
        let wider = d.interval_probability(m1 - 4.0 * sd, m1 + 4.0 * sd).unwrap();
        assert!(wider >= inner);
        assert!(d.interval_probability(2.0, 1.0).is_err());
    }
}
