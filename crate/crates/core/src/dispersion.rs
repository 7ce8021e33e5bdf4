//! Guided-mode dispersion of a step-index fiber, plus analytic toy laws.
//!
//! The fiber residual is solved in normalized variables: `x = ka`,
//! `U = κa`, `W = qa` and `V0 = k0 a` with `k0 = ω √(μ0 ε0)`. (Written as
//! `k0 = ω μ0 ε0` in some sources, which is not dimensionally a
//! wavenumber; the vacuum wavenumber is used here.) At fixed `x` the guided
//! band is `0 < U < U_max`, where `U_max = x √(μ1ε1/(μ2ε2) − 1)`, and the
//! lowest frequency root is the first sign change of the residual scanned
//! upward in `U`.
//!
//! For `m = 1` the fundamental mode has no cutoff, but near `k → 0` its
//! `W` becomes exponentially small and the root moves below what double
//! precision can separate from the band edge `ω = k c0/√(μ2ε2)`. When that
//! happens the solver returns the edge value and marks the point
//! `edge_limited`; the frequency is then exact to machine precision.

use crate::error::{Error, Result};
use crate::kernels::{bessel_j_sequence, bessel_k_scaled_sequence, FunctionOrder};
use crate::numerics::{brent, logspace};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// SI vacuum constants.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const VACUUM_PERMEABILITY: f64 = 1.256_637_062_12e-6;
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
pub const REDUCED_PLANCK: f64 = 1.054_571_817e-34;

/// Fiber geometry, materials and the physical constants of the problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberParameters {
    /// Core radius (m).
    pub a: f64,
    pub mu1: f64,
    pub eps1: f64,
    pub mu2: f64,
    pub eps2: f64,
    #[serde(default = "default_c0")]
    pub c0: f64,
    #[serde(default = "default_mu0")]
    pub mu0: f64,
    #[serde(default = "default_eps0")]
    pub eps0: f64,
    #[serde(default = "default_hbar")]
    pub hbar: f64,
}

fn default_c0() -> f64 {
    SPEED_OF_LIGHT
}
fn default_mu0() -> f64 {
    VACUUM_PERMEABILITY
}
fn default_eps0() -> f64 {
    VACUUM_PERMITTIVITY
}
fn default_hbar() -> f64 {
    REDUCED_PLANCK
}

impl FiberParameters {
    /// Fiber in SI vacuum constants.
    pub fn new(a: f64, mu1: f64, eps1: f64, mu2: f64, eps2: f64) -> Result<Self> {
        Self {
            a,
            mu1,
            eps1,
            mu2,
            eps2,
            c0: SPEED_OF_LIGHT,
            mu0: VACUUM_PERMEABILITY,
            eps0: VACUUM_PERMITTIVITY,
            hbar: REDUCED_PLANCK,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        let positive = [
            ("a", self.a),
            ("mu1", self.mu1),
            ("eps1", self.eps1),
            ("mu2", self.mu2),
            ("eps2", self.eps2),
            ("c0", self.c0),
            ("mu0", self.mu0),
            ("eps0", self.eps0),
            ("hbar", self.hbar),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("fiber parameter {name}"), format!("{v} must be finite and > 0")));
            }
        }
        if self.mu1 * self.eps1 <= self.mu2 * self.eps2 {
            return Err(Error::invalid(
                "fiber materials",
                format!(
                    "guiding requires mu1*eps1 > mu2*eps2, got {} <= {}",
                    self.mu1 * self.eps1,
                    self.mu2 * self.eps2
                ),
            ));
        }
        let light = self.c0 * (self.mu0 * self.eps0).sqrt();
        if (light - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(
                "vacuum constants",
                format!("c0*sqrt(mu0*eps0) = {light} but must equal 1 within 1e-6"),
            ));
        }
        Ok(self)
    }

    pub fn core_index_sq(&self) -> f64 {
        self.mu1 * self.eps1
    }

    pub fn cladding_index_sq(&self) -> f64 {
        self.mu2 * self.eps2
    }

    /// `√(μ0 ε0)`, converting ω to the vacuum wavenumber.
    pub fn inverse_light_speed(&self) -> f64 {
        (self.mu0 * self.eps0).sqrt()
    }
}

/// The `ε` of the replacement `k² → k² + ε²`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
pub struct RegularizationParameter(f64);

impl RegularizationParameter {
    pub const ZERO: Self = Self(0.0);

    pub fn new(eps: f64) -> Result<Self> {
        if eps >= 0.0 && eps.is_finite() {
            Ok(Self(eps))
        } else {
            Err(Error::invalid("regularization eps", format!("{eps} must be finite and >= 0")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// `√(k² + ε²)`.
    pub fn effective_k(self, k: f64) -> f64 {
        if self.0 == 0.0 {
            k.abs()
        } else {
            k.hypot(self.0)
        }
    }
}

/// Transverse wavenumbers of a guided point (rad/m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransverseWavenumbers {
    pub kappa: f64,
    pub q: f64,
    pub k0: f64,
}

/// How the residual is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualScaling {
    /// `G_m` exactly as defined.
    Exact,
    /// `G_m · e^{2qa}`, a positive rescaling that cannot underflow.
    ScaledK,
}

/// A solved point on the fiber dispersion branch, in normalized variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidedPoint {
    /// `|k| a` of the effective wavenumber.
    pub x: f64,
    /// `κ a`.
    pub u: f64,
    /// `q a`.
    pub w: f64,
    /// `k0 a`.
    pub v0: f64,
    /// The root lies closer to the band edge than the residual can resolve.
    pub edge_limited: bool,
    /// `|G|` at the root relative to the largest bracketed `|G|` sample.
    pub relative_residual: f64,
}

impl GuidedPoint {
    pub fn omega(&self, fp: &FiberParameters) -> f64 {
        self.v0 / (fp.a * fp.inverse_light_speed())
    }

    pub fn transverse(&self, fp: &FiberParameters) -> TransverseWavenumbers {
        TransverseWavenumbers { kappa: self.u / fp.a, q: self.w / fp.a, k0: self.v0 / fp.a }
    }
}

/// Normalized residual at `(x, U, W)`, with `V0² = (x² + U²)/(μ1ε1)`.
fn residual_normalized(fp: &FiberParameters, m: FunctionOrder, x: f64, u: f64, w: f64, scaling: ResidualScaling) -> Result<f64> {
    let mi = m.as_usize();
    let v0_sq = (x * x + u * u) / fp.core_index_sq();
    let j = bessel_j_sequence(mi + 1, u);
    let jm = j[mi];
    let jp = 0.5 * (if mi == 0 { -j[1] } else { j[mi - 1] } - j[mi + 1]);
    let k = bessel_k_scaled_sequence(mi + 1, w)?;
    let km = k[mi];
    let kp = -0.5 * (if mi == 0 { k[1] } else { k[mi - 1] } + k[mi + 1]);
    let mf = m.get() as f64;
    let inv = 1.0 / (w * w) + 1.0 / (u * u);
    // The bracket of G multiplied through by J_m² K_m² so no poles remain.
    let coupling = -mf * mf * x * x / v0_sq * inv * inv * jm * jm * km * km;
    let a_mu = fp.mu1 * jp * km / u + fp.mu2 * jm * kp / w;
    let a_eps = fp.eps1 * jp * km / u + fp.eps2 * jm * kp / w;
    let scaled = u * u * w * w / (v0_sq * fp.mu1 * fp.mu2) * (coupling + a_mu * a_eps);
    Ok(match scaling {
        ResidualScaling::ScaledK => scaled,
        ResidualScaling::Exact => scaled * (-2.0 * w).exp(),
    })
}

/// `G_m(ω, k)` of the fiber.
///
/// Errors with a domain error outside the guided band (`κ² ≤ 0` or `q² ≤ 0`).
pub fn dispersion_residual(fp: &FiberParameters, m: FunctionOrder, omega: f64, k: f64, scaling: ResidualScaling) -> Result<f64> {
    let x = k.abs() * fp.a;
    let v0 = omega * fp.inverse_light_speed() * fp.a;
    let u_sq = v0 * v0 * fp.core_index_sq() - x * x;
    let w_sq = x * x - v0 * v0 * fp.cladding_index_sq();
    if !(u_sq > 0.0) || !(w_sq > 0.0) {
        return Err(Error::domain(format!(
            "(omega={omega}, k={k}) is outside the guided band: (kappa a)^2={u_sq}, (q a)^2={w_sq}"
        )));
    }
    residual_normalized(fp, m, x, u_sq.sqrt(), w_sq.sqrt(), scaling)
}

/// Root finder for the lowest branch of one azimuthal order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberMode {
    pub fiber: FiberParameters,
    pub m: FunctionOrder,
}

/// Minimum number of band samples when scanning for the first sign change.
const MIN_SCAN_SAMPLES: usize = 128;
/// Smallest `W/U_max` probed in the edge refinement.
const EDGE_FLOOR: f64 = 1e-7;

impl FiberMode {
    pub fn new(fiber: FiberParameters, m: FunctionOrder) -> Result<Self> {
        Ok(Self { fiber: fiber.validated()?, m })
    }

    /// HE₁₁: order 1, lowest branch.
    pub fn he11(fiber: FiberParameters) -> Result<Self> {
        Self::new(fiber, FunctionOrder::new(1))
    }

    fn ratio(&self) -> f64 {
        self.fiber.cladding_index_sq() / self.fiber.core_index_sq()
    }

    fn u_max(&self, x: f64) -> f64 {
        x * ((1.0 - self.ratio()) / self.ratio()).sqrt()
    }

    /// `W` for a given `U` at fixed `x`, computed without cancellation.
    fn w_of_u(&self, x: f64, u: f64) -> f64 {
        let um = self.u_max(x);
        (self.ratio() * (um - u) * (um + u)).max(0.0).sqrt()
    }

    fn u_of_w(&self, x: f64, w: f64) -> f64 {
        let um = self.u_max(x);
        (um * um - w * w / self.ratio()).max(0.0).sqrt()
    }

    fn g_of_u(&self, x: f64, u: f64) -> f64 {
        residual_normalized(&self.fiber, self.m, x, u, self.w_of_u(x, u), ResidualScaling::ScaledK).unwrap_or(f64::NAN)
    }

    fn g_of_w(&self, x: f64, w: f64) -> f64 {
        residual_normalized(&self.fiber, self.m, x, self.u_of_w(x, w), w, ResidualScaling::ScaledK).unwrap_or(f64::NAN)
    }

    fn point_from_u(&self, x: f64, u: f64, scale: f64) -> GuidedPoint {
        let w = self.w_of_u(x, u);
        let g = self.g_of_u(x, u);
        GuidedPoint {
            x,
            u,
            w,
            v0: ((x * x + u * u) / self.fiber.core_index_sq()).sqrt(),
            edge_limited: false,
            relative_residual: g.abs() / scale.max(f64::MIN_POSITIVE),
        }
    }

    fn point_from_w(&self, x: f64, w: f64, scale: f64) -> GuidedPoint {
        let u = self.u_of_w(x, w);
        let g = self.g_of_w(x, w);
        GuidedPoint {
            x,
            u,
            w,
            v0: (x * x - w * w).max(0.0).sqrt() / self.fiber.cladding_index_sq().sqrt(),
            edge_limited: false,
            relative_residual: g.abs() / scale.max(f64::MIN_POSITIVE),
        }
    }

    /// Lowest-branch root at wavenumber `k` (only `|k|` matters).
    pub fn solve(&self, k: f64) -> Result<GuidedPoint> {
        let x = k.abs() * self.fiber.a;
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::domain(format!("solve_omega needs a finite k != 0 (got {k}); use regularization at k = 0")));
        }
        let um = self.u_max(x);
        let n = MIN_SCAN_SAMPLES.max((16.0 * um).ceil() as usize);
        let mut scale = 0.0_f64;
        let mut prev_u = um * 1e-6;
        let mut prev_g = self.g_of_u(x, prev_u);
        scale = scale.max(prev_g.abs());
        for i in 1..n {
            let u = um * i as f64 / n as f64;
            let g = self.g_of_u(x, u);
            if g.is_finite() {
                scale = scale.max(g.abs());
            }
            if g.is_finite() && prev_g.is_finite() && g.signum() != prev_g.signum() {
                let root = brent(|v| self.g_of_u(x, v), prev_u, u, 300).expect("bracket has a sign change");
                scale = scale.max(self.g_of_u(x, 0.5 * (prev_u + u)).abs());
                return Ok(self.point_from_u(x, root, scale));
            }
            prev_u = u;
            prev_g = g;
        }

        // Near the upper edge: probe W geometrically toward zero.
        let mut prev_w = self.w_of_u(x, prev_u);
        let floor = EDGE_FLOOR * um;
        while prev_w > floor {
            let w = 0.5 * prev_w;
            let g = self.g_of_w(x, w);
            if g.is_finite() {
                scale = scale.max(g.abs());
            }
            if g.is_finite() && prev_g.is_finite() && g.signum() != prev_g.signum() {
                let root = brent(|v| self.g_of_w(x, v), w, prev_w, 300).expect("bracket has a sign change");
                return Ok(self.point_from_w(x, root, scale));
            }
            prev_w = w;
            prev_g = g;
        }
        if self.m.get() == 1 {
            Ok(GuidedPoint {
                x,
                u: um,
                w: 0.0,
                v0: x / self.fiber.cladding_index_sq().sqrt(),
                edge_limited: true,
                relative_residual: 0.0,
            })
        } else {
            Err(Error::NoGuidedMode { m: self.m.get(), k })
        }
    }

    /// Root near a previously solved point; falls back to a full scan when
    /// the local bracket does not contain a sign change.
    pub fn solve_near(&self, k: f64, hint: &GuidedPoint) -> Result<GuidedPoint> {
        let x = k.abs() * self.fiber.a;
        if hint.edge_limited || !(x > 0.0) {
            return self.solve(k);
        }
        let um = self.u_max(x);
        let scale_u = hint.u * x / hint.x.max(f64::MIN_POSITIVE);
        let half = (0.02 * scale_u).max(1e-9 * um);
        let lo = (scale_u - half).max(um * 1e-6);
        let hi = (scale_u + half).min(um * (1.0 - 1e-12));
        if lo < hi {
            let (glo, ghi) = (self.g_of_u(x, lo), self.g_of_u(x, hi));
            if glo.is_finite() && ghi.is_finite() && glo.signum() != ghi.signum() && glo < 0.0 {
                let root = brent(|v| self.g_of_u(x, v), lo, hi, 300).expect("bracket has a sign change");
                return Ok(self.point_from_u(x, root, glo.abs().max(ghi.abs())));
            }
        }
        self.solve(k)
    }

    pub fn omega(&self, k: f64) -> Result<f64> {
        Ok(self.solve(k)?.omega(&self.fiber))
    }
}

/// A dispersion law `ω(k)`, even in `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DispersionModel {
    /// Lowest branch of a fiber mode.
    Fiber(FiberMode),
    /// `ω = v|k|`.
    Dispersionless { v: f64 },
    /// `ω = √(v²k² + Ω²)`.
    Massive { v: f64, cutoff: f64 },
}

/// `(ω, ω', ω'')` at one wavenumber.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionDerivatives {
    pub omega: f64,
    pub omega_prime: f64,
    pub omega_double_prime: f64,
}

/// Relative step of the centered differences used for fiber group velocity.
const GV_STEP: f64 = 1e-3;
/// Relative step for the fiber second derivative.
const GVD_STEP: f64 = 1e-2;

impl DispersionModel {
    pub fn dispersionless(v: f64) -> Result<Self> {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid("velocity v", format!("{v} must be > 0")));
        }
        Ok(Self::Dispersionless { v })
    }

    pub fn massive(v: f64, cutoff: f64) -> Result<Self> {
        if !(v > 0.0 && v.is_finite()) || !(cutoff > 0.0 && cutoff.is_finite()) {
            return Err(Error::invalid("massive law", format!("v={v} and Omega={cutoff} must be > 0")));
        }
        Ok(Self::Massive { v, cutoff })
    }

    pub fn fiber(mode: FiberMode) -> Self {
        Self::Fiber(mode)
    }

    /// `ω(k)`.
    pub fn omega(&self, k: f64) -> Result<f64> {
        match *self {
            Self::Dispersionless { v } => Ok(v * k.abs()),
            Self::Massive { v, cutoff } => Ok((v * k).hypot(cutoff)),
            Self::Fiber(mode) => {
                if k == 0.0 {
                    // Limit of the fundamental branch; higher branches have cutoffs.
                    return if mode.m.get() == 1 { Ok(0.0) } else { Err(Error::NoGuidedMode { m: mode.m.get(), k }) };
                }
                mode.omega(k)
            }
        }
    }

    /// `ω`, `ω'`, `ω''` at `k ≠ 0` (the toy laws also accept `k = 0`
    /// where they are smooth).
    pub fn derivatives(&self, k: f64) -> Result<DispersionDerivatives> {
        match *self {
            Self::Dispersionless { v } => {
                if k == 0.0 {
                    return Err(Error::domain("dispersionless law is not differentiable at k = 0"));
                }
                Ok(DispersionDerivatives { omega: v * k.abs(), omega_prime: v * k.signum(), omega_double_prime: 0.0 })
            }
            Self::Massive { v, cutoff } => {
                let w = (v * k).hypot(cutoff);
                Ok(DispersionDerivatives {
                    omega: w,
                    omega_prime: v * v * k / w,
                    omega_double_prime: v * v * cutoff * cutoff / (w * w * w),
                })
            }
            Self::Fiber(mode) => fiber_derivatives(&mode, k),
        }
    }

    pub fn group_velocity(&self, k: f64) -> Result<f64> {
        Ok(self.derivatives(k)?.omega_prime)
    }

    /// `F(k, k) = ω'(k) / (2k)`.
    pub fn f_diag(&self, k: f64) -> Result<f64> {
        f_diag(self, k, RegularizationParameter::ZERO)
    }

    /// Point data needed by the mode profile, plus `ω`.
    pub fn mode_point(&self, k: f64, hint: Option<&GuidedPoint>) -> Result<(f64, Option<GuidedPoint>)> {
        match self {
            Self::Fiber(mode) => {
                let p = match hint {
                    Some(h) => mode.solve_near(k, h)?,
                    None => mode.solve(k)?,
                };
                Ok((p.omega(&mode.fiber), Some(p)))
            }
            _ => Ok((self.omega(k)?, None)),
        }
    }

    /// Tabulates `ω, ω', ω''` on `n` log-spaced `|k|` values.
    pub fn tabulate(&self, k_min: f64, k_max: f64, n: usize) -> Result<DispersionTable> {
        if !(k_min > 0.0 && k_max > k_min) || n < 2 {
            return Err(Error::invalid("tabulation band", format!("need 0 < k_min < k_max and n >= 2 (got {k_min}, {k_max}, {n})")));
        }
        let ks = logspace(k_min, k_max, n);
        let mut rows = Vec::with_capacity(n);
        for &k in &ks {
            rows.push(self.derivatives(k)?);
        }
        Ok(DispersionTable {
            k: ks,
            omega: rows.iter().map(|r| r.omega).collect(),
            omega_prime: rows.iter().map(|r| r.omega_prime).collect(),
            omega_double_prime: rows.iter().map(|r| r.omega_double_prime).collect(),
        })
    }
}

fn fiber_derivatives(mode: &FiberMode, k: f64) -> Result<DispersionDerivatives> {
    let ka = k.abs();
    if ka == 0.0 {
        return Err(Error::domain("fiber derivatives need k != 0; use regularization"));
    }
    let center = mode.solve(ka)?;
    let w0 = center.omega(&mode.fiber);
    let at = |kk: f64| -> Result<f64> { Ok(mode.solve_near(kk, &center)?.omega(&mode.fiber)) };

    // Richardson-extrapolated centered differences.
    let h = GV_STEP * ka;
    let d1 = |wp: f64, wm: f64, step: f64| (wp - wm) / (2.0 * step);
    let (wph, wmh) = (at(ka + h)?, at(ka - h)?);
    let (wph2, wmh2) = (at(ka + 0.5 * h)?, at(ka - 0.5 * h)?);
    let omega_prime = (4.0 * d1(wph2, wmh2, 0.5 * h) - d1(wph, wmh, h)) / 3.0;

    let h2 = GVD_STEP * ka;
    let d2 = |wp: f64, wm: f64, step: f64| (wp - 2.0 * w0 + wm) / (step * step);
    let (wp2, wm2) = (at(ka + h2)?, at(ka - h2)?);
    let (wp22, wm22) = (at(ka + 0.5 * h2)?, at(ka - 0.5 * h2)?);
    let omega_double_prime = (4.0 * d2(wp22, wm22, 0.5 * h2) - d2(wp2, wm2, h2)) / 3.0;

    Ok(DispersionDerivatives { omega: w0, omega_prime: omega_prime * k.signum(), omega_double_prime })
}

/// `ω_ε(k) = ω(√(k² + ε²))`.
pub fn regularized_omega(model: &DispersionModel, k: f64, eps: RegularizationParameter) -> Result<f64> {
    model.omega(eps.effective_k(k))
}

/// `ω_ε'(k) = ω'(K) k / K` with `K = √(k² + ε²)`.
pub fn regularized_group_velocity(model: &DispersionModel, k: f64, eps: RegularizationParameter) -> Result<f64> {
    if eps.get() == 0.0 {
        return model.group_velocity(k);
    }
    if k == 0.0 {
        return Ok(0.0);
    }
    let big_k = eps.effective_k(k);
    Ok(model.derivatives(big_k)?.omega_prime * k / big_k)
}

/// `ω` of the solved branch; alias kept for the public operation name.
pub fn solve_omega(model: &DispersionModel, k: f64) -> Result<f64> {
    if k == 0.0 {
        return Err(Error::domain("solve_omega needs k != 0; use regularized_omega at k = 0"));
    }
    model.omega(k)
}

/// Diagonal `F_ε(k, k) = ω'(K) / (2K)`, `K = √(k² + ε²)`.
///
/// Defined at `k = 0` only when `ε > 0`.
pub fn f_diag(model: &DispersionModel, k: f64, eps: RegularizationParameter) -> Result<f64> {
    let big_k = eps.effective_k(k);
    if big_k == 0.0 {
        return Err(Error::domain("F(k,k) is singular at k = 0 without regularization"));
    }
    Ok(model.derivatives(big_k)?.omega_prime / (2.0 * big_k))
}

/// Off-diagonal `F(k', k) = (ω(k') − ω(k)) / ((k' − k)(k' + k))`.
///
/// The toy laws use the equivalent cancellation-free forms
/// `v²/(ω(k') + ω(k))` and `v/(|k'| + |k|)`; the plain quotient loses every
/// digit when `ω ≈ Ω` varies little over `[k, k']`.
pub fn f_offdiag(model: &DispersionModel, k_prime: f64, k: f64, eps: RegularizationParameter) -> Result<f64> {
    let den = (k_prime - k) * (k_prime + k);
    if den == 0.0 {
        return Err(Error::domain("F(k',k) quotient needs k' != ±k"));
    }
    let (kp, kk) = (eps.effective_k(k_prime), eps.effective_k(k));
    match *model {
        DispersionModel::Dispersionless { v } => Ok(v / (kp + kk)),
        DispersionModel::Massive { v, .. } => Ok(v * v / (model.omega(kp)? + model.omega(kk)?)),
        DispersionModel::Fiber(_) => Ok((regularized_omega(model, k_prime, eps)? - regularized_omega(model, k, eps)?) / den),
    }
}

/// Tabulated dispersion curve on positive `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionTable {
    pub k: Vec<f64>,
    pub omega: Vec<f64>,
    pub omega_prime: Vec<f64>,
    pub omega_double_prime: Vec<f64>,
}

impl DispersionTable {
    /// Cubic Hermite interpolation of `ω` using the tabulated `ω'`.
    pub fn interpolate_omega(&self, k: f64) -> Option<f64> {
        let ka = k.abs();
        let n = self.k.len();
        if ka < self.k[0] || ka > self.k[n - 1] {
            return None;
        }
        let i = match self.k.binary_search_by(|v| v.partial_cmp(&ka).expect("finite")) {
            Ok(i) => return Some(self.omega[i]),
            Err(i) => i - 1,
        };
        let h = self.k[i + 1] - self.k[i];
        let t = (ka - self.k[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        Some(
            (2.0 * t3 - 3.0 * t2 + 1.0) * self.omega[i]
                + (t3 - 2.0 * t2 + t) * h * self.omega_prime[i]
                + (-2.0 * t3 + 3.0 * t2) * self.omega[i + 1]
                + (t3 - t2) * h * self.omega_prime[i + 1],
        )
    }

    /// Strictly increasing `ω` along the table.
    pub fn is_monotone(&self) -> bool {
        self.omega.windows(2).all(|w| w[1] > w[0])
    }

    /// CSV `k,omega,omega_prime,omega_double_prime` (SI), header included.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "k,omega,omega_prime,omega_double_prime")?;
        for i in 0..self.k.len() {
            writeln!(
                out,
                "{:.17e},{:.17e},{:.17e},{:.17e}",
                self.k[i], self.omega[i], self.omega_prime[i], self.omega_double_prime[i]
            )?;
        }
        Ok(())
    }
}
