//! Scenario files: TOML with one table per concern, SI units throughout.
//!
//! Unknown keys are rejected by the parser (with its line and column).
//! Semantic checks run after parsing and report the line of the offending
//! key, or of its table when the key was left at a default.

use crate::dispersion::{FiberMode, FiberParameters, DispersionModel, RegularizationParameter};
use crate::error::{Error, Result};
use crate::kernels::FunctionOrder;
use crate::mode_fields::{Handedness, PolarizationVector, SpectralAmplitude, Waveguide};
use crate::propagation::PropagationSettings;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const PRESET_NAMES: [&str; 3] = ["dispersionless", "massive", "he11-fiber"];

pub fn preset_text(name: &str) -> Option<&'static str> {
    match name {
        "dispersionless" => Some(include_str!("../../presets/dispersionless.toml")),
        "massive" => Some(include_str!("../../presets/massive.toml")),
        "he11-fiber" => Some(include_str!("../../presets/he11-fiber.toml")),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Law {
    Fiber,
    Massive,
    Dispersionless,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionSection {
    pub law: Law,
    /// Phase velocity scale of the toy laws (m/s).
    pub v: Option<f64>,
    /// Ω of the massive law (rad/s).
    pub cutoff: Option<f64>,
    /// Azimuthal order of the fiber mode.
    #[serde(default = "one")]
    pub mode: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySection {
    /// Radius of the uniform profile used by the toy laws (m).
    #[serde(default = "default_toy_radius")]
    pub core_radius: f64,
}

impl Default for ToySection {
    fn default() -> Self {
        Self { core_radius: default_toy_radius() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub k_center: f64,
    pub k_width: f64,
    #[serde(default = "two")]
    pub power: u32,
    pub k_ref: Option<f64>,
    #[serde(default)]
    pub one_sided: bool,
    /// Nodes per panel of the spectral-weight grid.
    #[serde(default = "default_weight_nodes")]
    pub weight_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarizationSection {
    #[serde(default)]
    pub handedness: Handedness,
    #[serde(default = "unit")]
    pub p_nu: f64,
}

impl Default for PolarizationSection {
    fn default() -> Self {
        Self { handedness: Handedness::default(), p_nu: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Propagation distances (m), increasing.
    pub z: Vec<f64>,
    /// Dispersion tabulation band; defaults to the source support.
    pub k_min: Option<f64>,
    pub k_max: Option<f64>,
    #[serde(default = "default_k_points")]
    pub k_points: usize,
    #[serde(default = "default_t_points")]
    pub t_points: usize,
    #[serde(default = "default_n_sigma")]
    pub n_sigma: f64,
    #[serde(default = "default_base_nodes")]
    pub base_nodes: usize,
    pub radial_nodes: Option<usize>,
    #[serde(default = "default_taper")]
    pub taper_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSection {
    #[serde(default = "default_tail_bound")]
    pub tail_bound: f64,
    #[serde(default)]
    pub eps: f64,
}

impl Default for ToleranceSection {
    fn default() -> Self {
        Self { tail_bound: default_tail_bound(), eps: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    #[serde(default = "default_samples")]
    pub n: usize,
    #[serde(default = "one_u64")]
    pub seed: u64,
    /// Distance sampled; defaults to the largest ladder entry.
    pub z: Option<f64>,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self { n: default_samples(), seed: 1, z: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxSection {
    #[serde(default = "default_safety")]
    pub safety_factor: f64,
    /// Link length (m); defaults to the largest ladder entry.
    pub z: Option<f64>,
    /// Duration slope (s/m); computed from the scenario when absent.
    pub b: Option<f64>,
}

impl Default for FluxSection {
    fn default() -> Self {
        Self { safety_factor: default_safety(), z: None, b: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out")]
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_out() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub dispersion: DispersionSection,
    pub fiber: Option<FiberParameters>,
    #[serde(default)]
    pub toy: ToySection,
    pub source: SourceSection,
    #[serde(default)]
    pub polarization: PolarizationSection,
    pub grids: GridSection,
    #[serde(default)]
    pub tolerances: ToleranceSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub flux: FluxSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn one() -> u32 {
    1
}
fn two() -> u32 {
    2
}
fn one_u64() -> u64 {
    1
}
fn unit() -> f64 {
    1.0
}
fn default_toy_radius() -> f64 {
    4e-6
}
fn default_weight_nodes() -> usize {
    1025
}
fn default_k_points() -> usize {
    257
}
fn default_t_points() -> usize {
    1025
}
fn default_n_sigma() -> f64 {
    12.0
}
fn default_base_nodes() -> usize {
    257
}
fn default_taper() -> f64 {
    0.05
}
fn default_tail_bound() -> f64 {
    1e-6
}
fn default_samples() -> usize {
    100_000
}
fn default_safety() -> f64 {
    100.0
}
fn default_out() -> String {
    "out".into()
}

/// Line (1-based) of `key` inside `[table]`, falling back to the table header.
fn locate(text: &str, table: &str, key: Option<&str>) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == table {
                header = Some(i + 1);
            }
            continue;
        }
        if current != table {
            continue;
        }
        if let Some(k) = key {
            let name = line.split('=').next().unwrap_or("").trim();
            if name == k && line.contains('=') {
                return Some(i + 1);
            }
        }
    }
    header
}

fn at(text: &str, table: &str, key: &str, reason: impl std::fmt::Display) -> Error {
    match locate(text, table, Some(key)) {
        Some(line) => Error::Config(format!("line {line}: [{table}] {key}: {reason}")),
        None => Error::Config(format!("[{table}] {key}: {reason}")),
    }
}

impl ScenarioConfig {
    /// Parses and validates a scenario file.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            match line {
                Some(l) => Error::Config(format!("line {l}: {}", e.message())),
                None => Error::Config(e.message().to_string()),
            }
        })?;
        cfg.validate(text)?;
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = preset_text(name)
            .ok_or_else(|| Error::Config(format!("unknown preset '{name}' (known: {})", PRESET_NAMES.join(", "))))?;
        Self::parse(text)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    fn validate(&self, text: &str) -> Result<()> {
        let positive = |table: &str, key: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(at(text, table, key, format!("{v} must be finite and > 0")))
            }
        };
        match self.dispersion.law {
            Law::Fiber => {
                let fp = self.fiber.as_ref().ok_or_else(|| at(text, "dispersion", "law", "law = \"fiber\" needs a [fiber] table"))?;
                for (key, v) in [("a", fp.a), ("mu1", fp.mu1), ("eps1", fp.eps1), ("mu2", fp.mu2), ("eps2", fp.eps2)] {
                    positive("fiber", key, v)?;
                }
                fp.validated().map_err(|e| at(text, "fiber", "eps1", e))?;
                if self.dispersion.mode != 1 {
                    return Err(at(text, "dispersion", "mode", "only the fundamental HE11 branch (mode = 1) carries the circular projection used here"));
                }
            }
            Law::Massive => {
                positive("dispersion", "v", self.dispersion.v.unwrap_or(f64::NAN))?;
                positive("dispersion", "cutoff", self.dispersion.cutoff.unwrap_or(f64::NAN))?;
            }
            Law::Dispersionless => positive("dispersion", "v", self.dispersion.v.unwrap_or(f64::NAN))?,
        }
        if self.dispersion.law != Law::Fiber {
            positive("toy", "core_radius", self.toy.core_radius)?;
        }
        positive("source", "k_center", self.source.k_center)?;
        positive("source", "k_width", self.source.k_width)?;
        if self.source.power < 1 {
            return Err(at(text, "source", "power", "must be >= 1 so the source vanishes at k = 0"));
        }
        if let Some(r) = self.source.k_ref {
            positive("source", "k_ref", r)?;
        }
        if self.source.weight_nodes < 17 {
            return Err(at(text, "source", "weight_nodes", "must be >= 17"));
        }
        if !(self.polarization.p_nu > 0.0 && self.polarization.p_nu <= 1.0) {
            return Err(at(text, "polarization", "p_nu", format!("{} must lie in (0, 1]", self.polarization.p_nu)));
        }
        let z = &self.grids.z;
        if z.is_empty() || z.iter().any(|v| !(*v > 0.0 && v.is_finite())) || z.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(at(text, "grids", "z", "must be a non-empty, strictly increasing list of distances > 0"));
        }
        match (self.grids.k_min, self.grids.k_max) {
            (Some(lo), Some(hi)) if !(lo > 0.0 && hi > lo) => return Err(at(text, "grids", "k_max", "need 0 < k_min < k_max")),
            (Some(_), None) | (None, Some(_)) => return Err(at(text, "grids", "k_min", "give both k_min and k_max or neither")),
            _ => {}
        }
        if self.grids.k_points < 2 {
            return Err(at(text, "grids", "k_points", "must be >= 2"));
        }
        if self.grids.t_points < 17 || self.grids.t_points % 2 == 0 {
            return Err(at(text, "grids", "t_points", "must be odd and >= 17"));
        }
        if self.grids.base_nodes < 33 || (self.grids.base_nodes - 1).count_ones() != 1 {
            return Err(at(text, "grids", "base_nodes", "must be 2^j + 1 with j >= 5"));
        }
        positive("grids", "n_sigma", self.grids.n_sigma)?;
        if let Some(0) = self.grids.radial_nodes {
            return Err(at(text, "grids", "radial_nodes", "must be >= 1"));
        }
        if !(0.0..0.5).contains(&self.grids.taper_fraction) {
            return Err(at(text, "grids", "taper_fraction", "must lie in [0, 0.5)"));
        }
        positive("tolerances", "tail_bound", self.tolerances.tail_bound)?;
        if !(self.tolerances.eps >= 0.0 && self.tolerances.eps.is_finite()) {
            return Err(at(text, "tolerances", "eps", "must be finite and >= 0"));
        }
        if self.sampling.n < 2 {
            return Err(at(text, "sampling", "n", "must be >= 2"));
        }
        if let Some(zs) = self.sampling.z {
            positive("sampling", "z", zs)?;
        }
        if !(self.flux.safety_factor >= 1.0 && self.flux.safety_factor.is_finite()) {
            return Err(at(text, "flux", "safety_factor", "must be finite and >= 1"));
        }
        if let Some(v) = self.flux.z {
            positive("flux", "z", v)?;
        }
        if let Some(v) = self.flux.b {
            positive("flux", "b", v)?;
        }
        Ok(())
    }

    /// Hex SHA-256 of the resolved configuration. The output directory
    /// does not affect any result and is left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputSection::default();
        let canonical = toml::to_string(&c).expect("config serializes");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn model(&self) -> Result<DispersionModel> {
        match self.dispersion.law {
            Law::Fiber => {
                let fp = self.fiber.ok_or_else(|| Error::Config("fiber law needs [fiber]".into()))?.validated()?;
                Ok(DispersionModel::fiber(FiberMode::new(fp, FunctionOrder::new(self.dispersion.mode))?))
            }
            Law::Massive => DispersionModel::massive(self.dispersion.v.unwrap_or(f64::NAN), self.dispersion.cutoff.unwrap_or(f64::NAN)),
            Law::Dispersionless => DispersionModel::dispersionless(self.dispersion.v.unwrap_or(f64::NAN)),
        }
    }

    pub fn waveguide(&self) -> Result<Waveguide> {
        Waveguide::from_model(self.model()?, self.toy.core_radius)
    }

    pub fn amplitude(&self) -> Result<SpectralAmplitude> {
        let g = SpectralAmplitude::gaussian(self.source.k_center, self.source.k_width, self.source.power)?
            .with_one_sided(self.source.one_sided);
        match self.source.k_ref {
            Some(r) => g.with_reference(r),
            None => Ok(g),
        }
    }

    pub fn polarization(&self) -> Result<PolarizationVector> {
        PolarizationVector::new(self.polarization.handedness, self.polarization.p_nu)
    }

    pub fn eps(&self) -> Result<RegularizationParameter> {
        RegularizationParameter::new(self.tolerances.eps)
    }

    pub fn propagation_settings(&self) -> Result<PropagationSettings> {
        Ok(PropagationSettings {
            base_nodes: self.grids.base_nodes,
            radial_nodes: self.grids.radial_nodes,
            taper_fraction: self.grids.taper_fraction,
            t_points: self.grids.t_points,
            n_sigma: self.grids.n_sigma,
            tail_bound: self.tolerances.tail_bound,
            eps: self.eps()?,
        })
    }

    pub fn largest_z(&self) -> f64 {
        *self.grids.z.last().expect("validated non-empty")
    }
}
