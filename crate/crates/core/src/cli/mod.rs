//! Scenario orchestration and the command-line front end.

pub mod config;
pub mod output;

use crate::arrival_stats::{estimate_sigma, mean_and_sigma, moments, sample_arrival_times, ArrivalStatistics, MomentSet};
use crate::asymptotics::{calibrate_b, report_duration_growth, slopes, AsymptoticConstants, GrowthReport};
use crate::dispersion::DispersionModel;
use crate::error::{Error, Result};
use crate::mode_fields::{spectral_weight, PolarizationVector, SpectralAmplitude, SpectralWeight, Waveguide};
use crate::propagation::{ArrivalDistribution, Propagator};
use clap::{Parser, Subcommand};
use config::{Law, ScenarioConfig};
use output::{Metadata, OutputDir};
use serde::Serialize;
use std::io::Write;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "photon-duration", version, about = "Single-photon pulse propagation and arrival-time statistics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario file (TOML).
    #[arg(long, global = true, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in scenario: dispersionless, massive or he11-fiber.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Sampling seed; overrides `sampling.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Tabulate ω, ω', ω'' over the k band.
    Dispersion,
    /// Export the radially integrated spectral weight.
    Weight,
    /// Arrival-time densities over the z ladder.
    Propagate,
    /// Moments, mean and duration per z, with the fitted slope.
    Stats,
    /// Asymptotic constants and the slopes A and B.
    Asymptotics,
    /// Monte Carlo arrival times and the sample duration.
    Sample,
    /// Cross-checks between the pipelines; fails on any mismatch.
    Verify,
    /// Largest photon rate keeping emissions apart by the duration.
    Fluxplan,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Dispersion => "dispersion",
            Self::Weight => "weight",
            Self::Propagate => "propagate",
            Self::Stats => "stats",
            Self::Asymptotics => "asymptotics",
            Self::Sample => "sample",
            Self::Verify => "verify",
            Self::Fluxplan => "fluxplan",
        }
    }
}

/// Everything built from one config.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub model: DispersionModel,
    pub waveguide: Waveguide,
    pub amplitude: SpectralAmplitude,
    pub polarization: PolarizationVector,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        Ok(Self {
            model: config.model()?,
            waveguide: config.waveguide()?,
            amplitude: config.amplitude()?,
            polarization: config.polarization()?,
            config,
        })
    }

    pub fn weight(&self) -> Result<SpectralWeight> {
        let grid = self.amplitude.default_grid(self.config.source.weight_nodes);
        spectral_weight(&self.amplitude, &self.waveguide, &self.polarization, self.config.eps()?, &grid)
    }

    pub fn asymptotics(&self) -> Result<AsymptoticConstants> {
        slopes(&self.weight()?, &self.model, self.polarization.p_nu)
    }

    /// Propagator resolving every distance in `zs`.
    pub fn propagator(&self, zs: &[f64]) -> Result<Propagator> {
        Propagator::new(&self.waveguide, &self.amplitude, &self.polarization, self.config.propagation_settings()?, zs)
    }

    pub fn distributions(&self) -> Result<Vec<ArrivalDistribution>> {
        let p = self.propagator(&self.config.grids.z)?;
        self.config.grids.z.iter().map(|&z| p.arrival_distribution(z)).collect()
    }

    pub fn statistics(&self) -> Result<Vec<(MomentSet, ArrivalStatistics)>> {
        self.distributions()?
            .iter()
            .map(|d| {
                let ms = moments(d, 2)?;
                Ok((ms, mean_and_sigma(&ms, self.polarization.p_nu)?))
            })
            .collect()
    }

    pub fn sampling_z(&self) -> f64 {
        self.config.sampling.z.unwrap_or_else(|| self.config.largest_z())
    }
}

/// `max_flux = 1/(safety · B · z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FluxPlan {
    pub z: f64,
    pub b: f64,
    pub safety_factor: f64,
    /// Photons per second; `None` when `B z = 0` puts no bound on the rate.
    pub max_flux: Option<f64>,
}

impl FluxPlan {
    pub fn new(z: f64, b: f64, safety_factor: f64) -> Result<Self> {
        if !(z > 0.0) || !(b >= 0.0) || !(safety_factor >= 1.0) {
            return Err(Error::invalid("flux plan", format!("need z > 0, B >= 0, safety >= 1 (got {z}, {b}, {safety_factor})")));
        }
        let bz = b * z;
        Ok(Self { z, b, safety_factor, max_flux: (bz > 0.0).then(|| 1.0 / (safety_factor * bz)) })
    }
}

/// One `verify` check.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self { name: name.into(), pass, detail }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    pub asymptotics: AsymptoticConstants,
    pub growth: Option<GrowthReport>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Runs the cross-pipeline checks for a scenario.
pub fn verify(s: &Scenario) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    let c = s.asymptotics()?;
    checks.push(Check::new(
        "tau1 routes",
        c.tau1_routes.relative_difference <= 1e-3,
        format!("relative difference {:.3e} (limit 1e-3)", c.tau1_routes.relative_difference),
    ));

    let stats = s.statistics()?;
    let (ms_last, st_last) = *stats.last().expect("non-empty ladder");
    let z = st_last.z;
    let ratios = [ms_last.tau0 / c.tau0_t, ms_last.tau1 / (z * c.tau1_t), ms_last.tau2 / (z * z * c.tau2_t)];
    let worst = ratios.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
    checks.push(Check::new(
        "moments vs constants",
        worst <= 0.05,
        format!("largest |tau_n/(z^n tau_n~) - 1| = {worst:.3e} at z = {z} m (limit 5e-2)"),
    ));

    let growth = if stats.len() >= 3 {
        Some(report_duration_growth(&stats.iter().map(|x| x.1).collect::<Vec<_>>(), Some(c.b))?)
    } else {
        None
    };
    match s.config.dispersion.law {
        Law::Dispersionless => {
            let v = s.config.dispersion.v.unwrap_or(f64::NAN);
            checks.push(Check::new("B vanishes", c.b.abs() < 1e-6 / v, format!("|B| = {:.3e} s/m, limit 1e-6/v = {:.3e}", c.b, 1e-6 / v)));
            let sig: Vec<f64> = stats.iter().map(|x| x.1.sigma).collect();
            let (lo, hi) = sig.iter().fold((f64::INFINITY, 0.0_f64), |(a, b), &v| (a.min(v), b.max(v)));
            let spread = (hi - lo) / hi;
            checks.push(Check::new("sigma constant", spread < 1e-3, format!("relative spread {spread:.3e} over the ladder (limit 1e-3)")));
        }
        _ => {
            let pts: Vec<(f64, f64)> = stats.iter().map(|x| (x.1.z, x.1.sigma)).collect();
            let (pass, detail) = match calibrate_b(&pts) {
                Ok(fit) => {
                    let rel = (fit.slope - c.b).abs() / c.b;
                    (rel <= 0.05, format!("fitted {:.6e} s/m vs B {:.6e} s/m, relative {rel:.3e} (limit 5e-2)", fit.slope, c.b))
                }
                Err(e) => (false, e.to_string()),
            };
            checks.push(Check::new("sigma slope vs B", pass, detail));
        }
    }

    let zs = s.sampling_z();
    let dist = if (zs - z).abs() <= 1e-12 * z {
        s.propagator(&[z])?.arrival_distribution(z)?
    } else {
        s.propagator(&[zs])?.arrival_distribution(zs)?
    };
    let sigma = mean_and_sigma(&moments(&dist, 2)?, s.polarization.p_nu)?.sigma;
    let n = s.config.sampling.n;
    let est = estimate_sigma(&sample_arrival_times(&dist, n, s.config.sampling.seed)?)?;
    let bound = 4.0 * sigma / (2.0 * n as f64).sqrt();
    checks.push(Check::new(
        "monte carlo sigma",
        (est - sigma).abs() < bound,
        format!("estimate {est:.6e} s vs {sigma:.6e} s, |error| {:.3e} (limit {bound:.3e})", (est - sigma).abs()),
    ));

    if let DispersionModel::Fiber(mode) = s.model {
        let (lo, hi) = s.amplitude.forward_support();
        let mut worst: f64 = 0.0;
        for k in crate::numerics::linspace(lo, hi, 33) {
            worst = worst.max(mode.solve(k)?.relative_residual);
        }
        checks.push(Check::new("dispersion residual", worst < 1e-10, format!("largest relative residual {worst:.3e} (limit 1e-10)")));
    }
    Ok(VerifyReport { checks, asymptotics: c, growth })
}

#[derive(Serialize)]
struct ArrivalSummary {
    z: f64,
    file: String,
    mass: f64,
    tail_mass_estimate: f64,
    lower_truncated: bool,
    k_nodes_used: usize,
    skipped_panels: usize,
    radial_nodes: usize,
}

#[derive(Serialize)]
struct SampleSummary {
    z: f64,
    n: usize,
    seed: u64,
    sigma_distribution: f64,
    sigma_estimate: f64,
    four_sigma_bound: f64,
}

fn resolve_config(cli: &Cli) -> Result<ScenarioConfig> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(path), _) => ScenarioConfig::load(path).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?,
        (None, Some(name)) => ScenarioConfig::preset(name)?,
        (None, None) => return Err(Error::Config("give --config <path> or --preset <name>".into())),
    };
    if let Some(seed) = cli.seed {
        cfg.sampling.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.display().to_string();
    }
    Ok(cfg)
}

/// Runs one subcommand. `Ok(false)` means `verify` found a failing check.
pub fn run(cli: &Cli, log: &mut impl Write) -> Result<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::invalid("--threads", "must be >= 1"));
        }
        // Only the first call in a process can size the global pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = resolve_config(cli)?;
    let meta = Metadata {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name().into(),
        scenario: cfg.name.clone(),
        config_sha256: cfg.hash(),
        seed: cfg.sampling.seed,
    };
    let mut out = OutputDir::create(std::path::Path::new(&cfg.output.dir), meta)?;
    let s = Scenario::new(cfg)?;
    let mut ok = true;
    match cli.command {
        Command::Dispersion => {
            let (lo, hi) = match (s.config.grids.k_min, s.config.grids.k_max) {
                (Some(a), Some(b)) => (a, b),
                _ => s.amplitude.forward_support(),
            };
            let table = s.model.tabulate(lo, hi, s.config.grids.k_points)?;
            if !table.is_monotone() {
                writeln!(log, "warning: omega is not monotone over the band")?;
            }
            out.csv("dispersion.csv", |w| table.write_csv(w))?;
        }
        Command::Weight => {
            let w = s.weight()?;
            out.csv("weight.csv", |f| w.write_csv(f))?;
        }
        Command::Propagate => {
            let mut summary = Vec::new();
            for (i, d) in s.distributions()?.iter().enumerate() {
                let file = format!("arrival_{i:02}.csv");
                out.csv(&file, |w| {
                    writeln!(w, "# z: {:.17e}", d.z)?;
                    writeln!(w, "t,density")?;
                    for (t, p) in d.t.iter().zip(&d.density) {
                        writeln!(w, "{t:.17e},{p:.17e}")?;
                    }
                    Ok(())
                })?;
                summary.push(ArrivalSummary {
                    z: d.z,
                    file,
                    mass: d.mass(),
                    tail_mass_estimate: d.tail_mass_estimate,
                    lower_truncated: d.lower_truncated,
                    k_nodes_used: d.k_nodes_used,
                    skipped_panels: d.skipped_panels,
                    radial_nodes: d.radial_nodes,
                });
            }
            out.json("arrivals.json", &summary)?;
        }
        Command::Stats => {
            let stats = s.statistics()?;
            out.csv("stats.csv", |w| {
                writeln!(w, "z,t_mean,sigma,sigma_over_z,tau0,tau1,tau2")?;
                for (ms, st) in &stats {
                    writeln!(
                        w,
                        "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                        st.z,
                        st.t_mean,
                        st.sigma,
                        st.sigma / st.z,
                        ms.tau0,
                        ms.tau1,
                        ms.tau2
                    )?;
                }
                Ok(())
            })?;
            if stats.len() >= 3 {
                let b = s.asymptotics()?.b;
                let report = report_duration_growth(&stats.iter().map(|x| x.1).collect::<Vec<_>>(), Some(b))?;
                writeln!(log, "sigma slope {:.6e} s/m (95% +- {:.3e}), asymptotic B {:.6e} s/m", report.fit.slope, report.fit.ci95_half_width, b)?;
                out.json("growth.json", &report)?;
            }
        }
        Command::Asymptotics => {
            let c = s.asymptotics()?;
            writeln!(log, "A = {:.9e} s/m, B = {:.9e} s/m", c.a, c.b)?;
            out.json("asymptotics.json", &c)?;
        }
        Command::Sample => {
            let z = s.sampling_z();
            let dist = s.propagator(&[z])?.arrival_distribution(z)?;
            let sigma = mean_and_sigma(&moments(&dist, 2)?, s.polarization.p_nu)?.sigma;
            let set = sample_arrival_times(&dist, s.config.sampling.n, s.config.sampling.seed)?;
            let est = estimate_sigma(&set)?;
            out.csv("samples.csv", |w| set.write_csv(w))?;
            let n = s.config.sampling.n;
            out.json(
                "sample.json",
                &SampleSummary {
                    z,
                    n,
                    seed: s.config.sampling.seed,
                    sigma_distribution: sigma,
                    sigma_estimate: est,
                    four_sigma_bound: 4.0 * sigma / (2.0 * n as f64).sqrt(),
                },
            )?;
        }
        Command::Verify => {
            let report = verify(&s)?;
            for c in &report.checks {
                writeln!(log, "{}", c.line())?;
            }
            writeln!(log, "A = {:.9e} s/m, B = {:.9e} s/m", report.asymptotics.a, report.asymptotics.b)?;
            ok = report.passed();
            out.json("verify.json", &report)?;
        }
        Command::Fluxplan => {
            let z = s.config.flux.z.unwrap_or_else(|| s.config.largest_z());
            let b = match s.config.flux.b {
                Some(b) => b,
                None => s.asymptotics()?.b,
            };
            let plan = FluxPlan::new(z, b, s.config.flux.safety_factor)?;
            match plan.max_flux {
                Some(f) => writeln!(log, "max_flux = {f:.6e} photons/s (B z = {:.6e} s)", b * z)?,
                None => writeln!(log, "max_flux unbounded (B z = 0)")?,
            }
            out.json("fluxplan.json", &plan)?;
        }
    }
    for p in out.written() {
        writeln!(log, "wrote {}", p.display())?;
    }
    Ok(ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flux_plan_arithmetic() {
        let p = FluxPlan::new(100.0, 1e-11, 100.0).unwrap();
        assert!((p.max_flux.unwrap() - 1e7).abs() < 1e-6);
        assert_eq!(FluxPlan::new(1.0, 0.0, 100.0).unwrap().max_flux, None);
        assert!(FluxPlan::new(1.0, 1e-11, 0.5).is_err());
    }
}
