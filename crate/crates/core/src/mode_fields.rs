//! Source spectrum, guided-mode profile and the per-k amplitude
//! `f(k, ρ) = g(k) √(ħω/2ε0) ν·ψ_k(ρ)`.
//!
//! The transverse profile is the standard step-index hybrid mode. With
//! `r = ρ/a` and `E_z` normalized to `J_m(Ur)/J_m(U)` in the core, the
//! radial and azimuthal components combine into the two circular parts
//!
//! ```text
//! core:  e_r + e_p = (x − V0 μ1 b) J_{m−1}(Ur) / (U J_m(U))
//!        e_r − e_p = −(x + V0 μ1 b) J_{m+1}(Ur) / (U J_m(U))
//! clad:  e_r + e_p = (x − V0 μ2 b) K_{m−1}(Wr) / (W K_m(W))
//!        e_r − e_p = (x + V0 μ2 b) K_{m+1}(Wr) / (W K_m(W))
//! ```
//!
//! where `b = m x (1/U² + 1/W²) / (V0 S)`, `S = μ1 J'/(U J) + μ2 K'/(W K)`,
//! fixes the ratio `H_z/E_z` from continuity of `E_φ`. Projecting onto a
//! circular polarization gives a φ-independent density, which is the case
//! handled here. The profile is normalized to unit transverse power
//! `2π ∫ (|e_r|² + |e_p|²) ρ dρ = 1` over the full plane, using Lommel's
//! closed forms for the Bessel integrals.

use crate::dispersion::{
    DispersionModel, FiberParameters, GuidedPoint, RegularizationParameter, REDUCED_PLANCK, VACUUM_PERMITTIVITY,
};
use crate::error::{Error, Result};
use crate::kernels::{bessel_j_sequence, bessel_k_scaled_sequence, FunctionOrder};
use crate::numerics::{adaptive_gauss, linspace};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// Half-width of the retained Gaussian band, in units of its width.
pub const GAUSSIAN_SUPPORT: f64 = 8.0;

/// Source spectrum `g(k)`.
#[derive(Debug, Clone, PartialEq)]
pub enum AmplitudeKind {
    /// `(k/k_ref)^p exp(−(k − k_center)²/(2 k_width²))` for `k > 0`.
    Gaussian { k_center: f64, k_width: f64, power: u32, k_ref: f64 },
    /// Linear interpolation of samples on increasing positive `k`; zero
    /// outside.
    Tabulated { k: Vec<f64>, values: Vec<Complex64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralAmplitude {
    pub kind: AmplitudeKind,
    pub scale: Complex64,
    /// Without the mirror image on `k < 0` the reality condition of the
    /// field does not hold; kept for forward-only packet studies.
    pub one_sided: bool,
}

impl SpectralAmplitude {
    pub fn gaussian(k_center: f64, k_width: f64, power: u32) -> Result<Self> {
        if !(k_center > 0.0 && k_center.is_finite()) || !(k_width > 0.0 && k_width.is_finite()) {
            return Err(Error::invalid("gaussian source", format!("k_center={k_center}, k_width={k_width} must be > 0")));
        }
        if power < 1 {
            return Err(Error::invalid("zero_suppression_power", "must be >= 1 so g vanishes at k = 0"));
        }
        Ok(Self {
            kind: AmplitudeKind::Gaussian { k_center, k_width, power, k_ref: k_center },
            scale: Complex64::new(1.0, 0.0),
            one_sided: false,
        })
    }

    pub fn tabulated(k: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        if k.len() != values.len() || k.len() < 2 {
            return Err(Error::invalid("tabulated source", "needs >= 2 points and matching lengths"));
        }
        if !(k[0] > 0.0) || k.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("tabulated source", "k must be positive and strictly increasing"));
        }
        Ok(Self { kind: AmplitudeKind::Tabulated { k, values }, scale: Complex64::new(1.0, 0.0), one_sided: false })
    }

    pub fn with_scale(mut self, scale: Complex64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_one_sided(mut self, one_sided: bool) -> Self {
        self.one_sided = one_sided;
        self
    }

    pub fn with_reference(mut self, k_ref_new: f64) -> Result<Self> {
        if let AmplitudeKind::Gaussian { k_ref, .. } = &mut self.kind {
            if !(k_ref_new > 0.0) {
                return Err(Error::invalid("k_ref", "must be > 0"));
            }
            *k_ref = k_ref_new;
        }
        Ok(self)
    }

    fn positive_branch(&self, k: f64) -> Complex64 {
        match &self.kind {
            AmplitudeKind::Gaussian { k_center, k_width, power, k_ref } => {
                let d = (k - k_center) / k_width;
                if d.abs() > GAUSSIAN_SUPPORT {
                    return Complex64::new(0.0, 0.0);
                }
                self.scale * ((k / k_ref).powi(*power as i32) * (-0.5 * d * d).exp())
            }
            AmplitudeKind::Tabulated { k: ks, values } => {
                if k < ks[0] || k > ks[ks.len() - 1] {
                    return Complex64::new(0.0, 0.0);
                }
                let i = ks.partition_point(|&v| v <= k).clamp(1, ks.len() - 1) - 1;
                let t = (k - ks[i]) / (ks[i + 1] - ks[i]);
                self.scale * (values[i] * (1.0 - t) + values[i + 1] * t)
            }
        }
    }

    /// `g(k)`; `g(−k) = conj g(k)` unless one-sided.
    pub fn value(&self, k: f64) -> Complex64 {
        if k > 0.0 {
            self.positive_branch(k)
        } else if k < 0.0 && !self.one_sided {
            self.positive_branch(-k).conj()
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    /// Positive-k interval carrying the spectrum.
    pub fn forward_support(&self) -> (f64, f64) {
        match &self.kind {
            AmplitudeKind::Gaussian { k_center, k_width, .. } => {
                let lo = k_center - GAUSSIAN_SUPPORT * k_width;
                let hi = k_center + GAUSSIAN_SUPPORT * k_width;
                (if lo > 0.0 { lo } else { 1e-6 * hi }, hi)
            }
            AmplitudeKind::Tabulated { k, .. } => (k[0], k[k.len() - 1]),
        }
    }

    /// Closed intervals of `k` outside which `g` vanishes, increasing.
    pub fn panels(&self) -> Vec<(f64, f64)> {
        let (lo, hi) = self.forward_support();
        if self.one_sided {
            vec![(lo, hi)]
        } else {
            vec![(-hi, -lo), (lo, hi)]
        }
    }

    /// Carrier wavenumber used to center phases.
    pub fn carrier(&self) -> f64 {
        match &self.kind {
            AmplitudeKind::Gaussian { k_center, .. } => *k_center,
            AmplitudeKind::Tabulated { k, values } => {
                let (mut num, mut den) = (0.0, 0.0);
                for (kk, v) in k.iter().zip(values) {
                    num += kk * v.norm_sqr();
                    den += v.norm_sqr();
                }
                if den > 0.0 {
                    num / den
                } else {
                    0.5 * (k[0] + k[k.len() - 1])
                }
            }
        }
    }

    /// Uniform grid of `n` nodes on every panel.
    pub fn default_grid(&self, n: usize) -> Vec<f64> {
        self.panels().into_iter().flat_map(|(a, b)| linspace(a, b, n)).collect()
    }
}

/// Circular polarization relative to the mode's azimuthal rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Handedness {
    /// Angular factor `e^{i(m−1)φ}`; the dominant part of HE modes.
    #[default]
    CoRotating,
    /// Angular factor `e^{i(m+1)φ}`.
    CounterRotating,
}

/// Detector polarization `ν` and its detection probability `P_ν`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationVector {
    pub handedness: Handedness,
    pub p_nu: f64,
}

impl PolarizationVector {
    pub fn new(handedness: Handedness, p_nu: f64) -> Result<Self> {
        if !(p_nu > 0.0 && p_nu <= 1.0) {
            return Err(Error::invalid("P_nu", format!("{p_nu} must lie in (0, 1]")));
        }
        Ok(Self { handedness, p_nu })
    }
}

impl Default for PolarizationVector {
    fn default() -> Self {
        Self { handedness: Handedness::CoRotating, p_nu: 1.0 }
    }
}

/// Transverse profile of one hybrid mode at one solved point.
#[derive(Debug, Clone, Copy)]
pub struct HybridProfile {
    m: usize,
    u: f64,
    w: f64,
    /// Coefficients of the four circular pieces, already divided by
    /// `U J_m(U)` or `W K_m(W)`.
    core_minus: f64,
    core_plus: f64,
    clad_minus: f64,
    clad_plus: f64,
    /// `1/√(2π N)` in units of `1/a`, with `N = ∫ (e_r² + e_p²) r dr`.
    norm: f64,
    /// `1/J_m(U)` and `1/K̂_m(W)` for `E_z`.
    ez_core: f64,
    ez_clad: f64,
    delocalized: bool,
}

fn j_signed(seq: &[f64], nu: i64) -> f64 {
    if nu >= 0 {
        seq[nu as usize]
    } else if nu % 2 == 0 {
        seq[(-nu) as usize]
    } else {
        -seq[(-nu) as usize]
    }
}

fn k_signed(seq: &[f64], nu: i64) -> f64 {
    seq[nu.unsigned_abs() as usize]
}

/// `∫₀¹ r J_ν(Ur)² dr`.
fn lommel_j(seq: &[f64], nu: i64) -> f64 {
    let j = j_signed(seq, nu);
    0.5 * (j * j - j_signed(seq, nu - 1) * j_signed(seq, nu + 1))
}

/// `∫₁^∞ r K̂_ν(Wr)² e^{−2W(r−1)} dr` with scaled `K̂`, i.e. the integral in
/// units of `e^{−2W}`.
fn lommel_k(seq: &[f64], nu: i64) -> f64 {
    let k = k_signed(seq, nu);
    0.5 * (k_signed(seq, nu - 1) * k_signed(seq, nu + 1) - k * k)
}

impl HybridProfile {
    pub fn new(fp: &FiberParameters, m: FunctionOrder, p: &GuidedPoint) -> Result<Self> {
        let mi = m.as_usize();
        if p.edge_limited || p.w <= 0.0 {
            // The field spreads over the whole cladding; its core share
            // vanishes in the normalized profile.
            return Ok(Self {
                m: mi,
                u: p.u,
                w: 0.0,
                core_minus: 0.0,
                core_plus: 0.0,
                clad_minus: 0.0,
                clad_plus: 0.0,
                norm: 0.0,
                ez_core: 0.0,
                ez_clad: 0.0,
                delocalized: true,
            });
        }
        let (x, u, w, v0) = (p.x, p.u, p.w, p.v0);
        let js = bessel_j_sequence(mi + 2, u);
        let ks = bessel_k_scaled_sequence(mi + 2, w)?;
        let mm = mi as i64;
        let jm = js[mi];
        let km = ks[mi];
        let jp = 0.5 * (j_signed(&js, mm - 1) - js[mi + 1]);
        let kp = -0.5 * (k_signed(&ks, mm - 1) + ks[mi + 1]);
        let s_mu = fp.mu1 * jp / (u * jm) + fp.mu2 * kp / (w * km);
        let b = x * mi as f64 * (1.0 / (u * u) + 1.0 / (w * w)) / (v0 * s_mu);

        let core_minus = (x - v0 * fp.mu1 * b) / (u * jm);
        let core_plus = -(x + v0 * fp.mu1 * b) / (u * jm);
        let clad_minus = (x - v0 * fp.mu2 * b) / (w * km);
        let clad_plus = (x + v0 * fp.mu2 * b) / (w * km);

        let n_core = 0.5 * (core_minus * core_minus * lommel_j(&js, mm - 1) + core_plus * core_plus * lommel_j(&js, mm + 1));
        let n_clad = 0.5 * (clad_minus * clad_minus * lommel_k(&ks, mm - 1) + clad_plus * clad_plus * lommel_k(&ks, mm + 1));
        let total = n_core + n_clad;
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Quadrature { what: "mode normalization".into(), achieved: total, target: 0.0 });
        }
        Ok(Self {
            m: mi,
            u,
            w,
            core_minus,
            core_plus,
            clad_minus,
            clad_plus,
            norm: 1.0 / (2.0 * std::f64::consts::PI * total).sqrt(),
            ez_core: 1.0 / jm,
            ez_clad: 1.0 / km,
            delocalized: false,
        })
    }

    /// Unnormalized `(e_r, e_p, e_z)` at `r = ρ/a`, with `E_z` equal to 1
    /// on the interface.
    pub fn components(&self, r: f64) -> (f64, f64, f64) {
        if self.delocalized {
            return (0.0, 0.0, 0.0);
        }
        let mm = self.m as i64;
        let (s_minus, s_plus, ez) = if r <= 1.0 {
            let js = bessel_j_sequence(self.m + 1, self.u * r);
            (self.core_minus * j_signed(&js, mm - 1), self.core_plus * js[self.m + 1], self.ez_core * js[self.m])
        } else {
            let ks = bessel_k_scaled_sequence(self.m + 1, self.w * r).expect("w r > 0");
            let decay = (-self.w * (r - 1.0)).exp();
            (
                self.clad_minus * k_signed(&ks, mm - 1) * decay,
                self.clad_plus * ks[self.m + 1] * decay,
                self.ez_clad * ks[self.m] * decay,
            )
        };
        (0.5 * (s_minus + s_plus), 0.5 * (s_minus - s_plus), ez)
    }

    /// Normalized circular projection at `r = ρ/a`, in units of `1/a`.
    pub fn circular(&self, handedness: Handedness, r: f64) -> f64 {
        let (er, ep, _) = self.components(r);
        let s = match handedness {
            Handedness::CoRotating => er + ep,
            Handedness::CounterRotating => er - ep,
        };
        s * self.norm / std::f64::consts::SQRT_2
    }

    /// `2π ∫₀¹ |circular|² r dr` in closed form (core share of one
    /// polarization).
    pub fn core_fraction(&self, handedness: Handedness) -> f64 {
        if self.delocalized {
            return 0.0;
        }
        let js = bessel_j_sequence(self.m + 2, self.u);
        let mm = self.m as i64;
        let (c, nu) = match handedness {
            Handedness::CoRotating => (self.core_minus, mm - 1),
            Handedness::CounterRotating => (self.core_plus, mm + 1),
        };
        std::f64::consts::PI * self.norm * self.norm * c * c * lommel_j(&js, nu)
    }

    pub fn is_delocalized(&self) -> bool {
        self.delocalized
    }
}

/// Physical setting shared by every per-k evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waveguide {
    pub model: DispersionModel,
    /// Radius of the detection region (the fiber core).
    pub core_radius: f64,
    pub hbar: f64,
    pub eps0: f64,
}

impl Waveguide {
    pub fn fiber(model: DispersionModel) -> Result<Self> {
        match model {
            DispersionModel::Fiber(mode) => {
                Ok(Self { model, core_radius: mode.fiber.a, hbar: mode.fiber.hbar, eps0: mode.fiber.eps0 })
            }
            _ => Err(Error::invalid("waveguide", "fiber() needs a fiber dispersion model")),
        }
    }

    /// Analytic law with a uniform transverse profile over `core_radius`.
    pub fn toy(model: DispersionModel, core_radius: f64) -> Result<Self> {
        if !(core_radius > 0.0 && core_radius.is_finite()) {
            return Err(Error::invalid("core_radius", format!("{core_radius} must be > 0")));
        }
        Ok(Self { model, core_radius, hbar: REDUCED_PLANCK, eps0: VACUUM_PERMITTIVITY })
    }

    pub fn from_model(model: DispersionModel, toy_radius: f64) -> Result<Self> {
        match model {
            DispersionModel::Fiber(_) => Self::fiber(model),
            _ => Self::toy(model, toy_radius),
        }
    }

    /// Mode data at `k`, reusing `hint` for the fiber root search.
    pub fn slice(&self, k: f64, eps: RegularizationParameter, hint: Option<&GuidedPoint>) -> Result<ModeSlice> {
        let big_k = eps.effective_k(k);
        if big_k == 0.0 {
            return Err(Error::domain("mode data at k = 0 needs regularization"));
        }
        let (omega, point) = self.model.mode_point(big_k, hint)?;
        let profile = match (&self.model, point) {
            (DispersionModel::Fiber(mode), Some(p)) => Some(HybridProfile::new(&mode.fiber, mode.m, &p)?),
            _ => None,
        };
        Ok(ModeSlice { k, omega, point, profile, core_radius: self.core_radius, field_scale: (self.hbar * omega / (2.0 * self.eps0)).sqrt() })
    }
}

/// Everything about one `k` needed to evaluate `f(k, ρ)`.
#[derive(Debug, Clone, Copy)]
pub struct ModeSlice {
    pub k: f64,
    pub omega: f64,
    pub point: Option<GuidedPoint>,
    profile: Option<HybridProfile>,
    core_radius: f64,
    /// `√(ħω/2ε0)`.
    pub field_scale: f64,
}

impl ModeSlice {
    /// `ν·ψ_k(ρ)` (1/m). Real, so `ψ_{−k} = conj ψ_k` holds trivially.
    pub fn projection(&self, handedness: Handedness, rho: f64) -> f64 {
        let a = self.core_radius;
        match &self.profile {
            Some(p) => p.circular(handedness, rho.abs() / a) / a,
            None => {
                if rho.abs() <= a {
                    1.0 / (a * std::f64::consts::PI.sqrt())
                } else {
                    0.0
                }
            }
        }
    }

    /// `√(ħω/2ε0) ν·ψ_k(ρ)`; multiply by `g(k)` for `f(k, ρ)`.
    pub fn field(&self, handedness: Handedness, rho: f64) -> f64 {
        self.field_scale * self.projection(handedness, rho)
    }
}

/// `ν·ψ_{mk}(ρ)` for the fiber mode at `k` (1/m).
pub fn mode_projection(fp: &FiberParameters, m: FunctionOrder, k: f64, nu: &PolarizationVector, rho: f64) -> Result<Complex64> {
    let mode = crate::dispersion::FiberMode::new(*fp, m)?;
    let wg = Waveguide::fiber(DispersionModel::Fiber(mode))?;
    let slice = wg.slice(k, RegularizationParameter::ZERO, None)?;
    Ok(Complex64::new(slice.projection(nu.handedness, rho), 0.0))
}

/// `f_{νmkε}(ρ) = g(k) √(ħω_{kε}/2ε0) ν·ψ_{kε}(ρ)`.
pub fn per_k_amplitude(
    g: &SpectralAmplitude,
    wg: &Waveguide,
    k: f64,
    nu: &PolarizationVector,
    rho: f64,
    eps: RegularizationParameter,
) -> Result<Complex64> {
    let gk = g.value(k);
    if gk == Complex64::new(0.0, 0.0) {
        return Ok(gk);
    }
    let slice = wg.slice(k, eps, None)?;
    Ok(gk * slice.field(nu.handedness, rho))
}

/// Radially integrated `|f|²(k)` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralWeight {
    pub k: Vec<f64>,
    pub weight: Vec<f64>,
    pub eps: RegularizationParameter,
}

/// Target relative error of the radial quadrature.
pub const RADIAL_TOLERANCE: f64 = 1e-9;

/// `2π ∫₀^a ρ |field(ρ)|² dρ` for one slice, by adaptive Gauss–Legendre.
pub fn radial_power(slice: &ModeSlice, handedness: Handedness) -> Result<f64> {
    if slice.profile.is_none() {
        // Uniform profile: the core integral is exactly one.
        return Ok(slice.field_scale * slice.field_scale);
    }
    let a = slice.core_radius;
    let (res, ok) = adaptive_gauss(0.0, a, RADIAL_TOLERANCE, 8, 512, |rho| {
        let v = slice.field(handedness, rho);
        2.0 * std::f64::consts::PI * rho * v * v
    });
    if !ok {
        return Err(Error::Quadrature {
            what: format!("radial integral at k={}", slice.k),
            achieved: res.error_estimate / res.value.abs().max(f64::MIN_POSITIVE),
            target: RADIAL_TOLERANCE,
        });
    }
    Ok(res.value)
}

/// `|f|²(k) = 2π ∫₀^a ρ |f(k, ρ)|² dρ` on `k_grid` (core only).
pub fn spectral_weight(
    g: &SpectralAmplitude,
    wg: &Waveguide,
    nu: &PolarizationVector,
    eps: RegularizationParameter,
    k_grid: &[f64],
) -> Result<SpectralWeight> {
    // Each |k| is solved once; the mirror node reuses it.
    let mut cache: std::collections::HashMap<u64, f64> = std::collections::HashMap::new();
    let mut weight = Vec::with_capacity(k_grid.len());
    let mut hint: Option<GuidedPoint> = None;
    for &k in k_grid {
        let gk = g.value(k).norm_sqr();
        if gk == 0.0 {
            weight.push(0.0);
            continue;
        }
        let key = k.abs().to_bits();
        let radial = match cache.get(&key) {
            Some(&v) => v,
            None => {
                let slice = wg.slice(k.abs(), eps, hint.as_ref())?;
                hint = slice.point;
                let v = radial_power(&slice, nu.handedness)?;
                cache.insert(key, v);
                v
            }
        };
        weight.push(gk * radial);
    }
    Ok(SpectralWeight { k: k_grid.to_vec(), weight, eps })
}

impl SpectralWeight {
    /// Contiguous index ranges separated by a sign change or a gap wider
    /// than twice the neighbouring spacing.
    pub fn panels(&self) -> Vec<std::ops::Range<usize>> {
        let n = self.k.len();
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..n {
            let gap = self.k[i] - self.k[i - 1];
            let left = if i >= 2 { self.k[i - 1] - self.k[i - 2] } else { f64::INFINITY };
            let right = if i + 1 < n { self.k[i + 1] - self.k[i] } else { f64::INFINITY };
            let reference = left.min(right);
            let sign_flip = self.k[i].signum() != self.k[i - 1].signum();
            if sign_flip || (reference.is_finite() && gap > 2.0 * reference) {
                out.push(start..i);
                start = i;
            }
        }
        if n > 0 {
            out.push(start..n);
        }
        out
    }

    /// Largest `|w(k) − w(−k)|` over mirrored node pairs.
    pub fn parity_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (i, &k) in self.k.iter().enumerate() {
            if let Some(j) = self.k.iter().position(|&q| q == -k) {
                worst = worst.max((self.weight[i] - self.weight[j]).abs());
            }
        }
        worst
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "k,weight")?;
        for (k, w) in self.k.iter().zip(&self.weight) {
            writeln!(out, "{k:.17e},{w:.17e}")?;
        }
        Ok(())
    }

    /// Reads `k,weight` rows; lines starting with `#` are skipped.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut k = Vec::new();
        let mut weight = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("k,") {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Config(format!("weight CSV line {}: expected two numbers", n + 1)))
            };
            k.push(parse(parts.next())?);
            let w = parse(parts.next())?;
            if !(w >= 0.0) {
                return Err(Error::Config(format!("weight CSV line {}: weight must be >= 0", n + 1)));
            }
            weight.push(w);
        }
        if k.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(Error::Config("weight CSV: k must be strictly increasing".into()));
        }
        Ok(Self { k, weight, eps: RegularizationParameter::ZERO })
    }
}
