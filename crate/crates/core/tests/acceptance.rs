//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion;
//! criterion 10 is a report and never fails the run.

use photon_duration::arrival_stats::{estimate_sigma, mean_and_sigma, moments, sample_arrival_times};
use photon_duration::asymptotics::{calibrate_b, laplace_log_selfcheck, slopes, tau1_tilde_routes};
use photon_duration::cli::config::{ScenarioConfig, PRESET_NAMES};
use photon_duration::cli::Scenario;
use photon_duration::dispersion::{DispersionModel, FiberMode, FiberParameters, RegularizationParameter};
use photon_duration::kernels::{bessel_j, bessel_j_prime, bessel_j_sequence, bessel_k, bessel_k_prime, FunctionOrder};
use photon_duration::mode_fields::{spectral_weight, SpectralAmplitude};
use photon_duration::numerics::{linear_fit, logspace, CubicSpline};

type Outcome = (bool, String);

fn preset(name: &str) -> Scenario {
    Scenario::new(ScenarioConfig::preset(name).unwrap()).unwrap()
}

fn he11() -> FiberMode {
    FiberMode::he11(FiberParameters::new(4e-6, 1.0, 2.1025, 1.0, 2.085).unwrap()).unwrap()
}

fn criterion_1() -> Outcome {
    let s = preset("dispersionless");
    let v = s.config.dispersion.v.unwrap();
    let c = s.asymptotics().unwrap();
    let stats = s.statistics().unwrap();
    let zs: Vec<f64> = stats.iter().map(|x| x.1.z).collect();
    let sig: Vec<f64> = stats.iter().map(|x| x.1.sigma).collect();
    let hi = sig.iter().cloned().fold(0.0, f64::max);
    let lo = sig.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = (hi - lo) / hi;
    let range = zs[zs.len() - 1] / zs[0];
    (
        c.b.abs() < 1e-6 / v && spread < 1e-3 && range >= 16.0,
        format!("|B| v = {:.2e}, sigma spread {spread:.2e} over a {range}x z range", c.b.abs() * v),
    )
}

fn criterion_2() -> Outcome {
    let s = preset("massive");
    let c = s.asymptotics().unwrap();
    let stats = s.statistics().unwrap();
    let lz: Vec<f64> = stats.iter().map(|x| x.0.z.ln()).collect();
    let tilde = [c.tau0_t, c.tau1_t, c.tau2_t];
    let (ms, _) = stats[stats.len() - 1];
    let mut pass = true;
    let mut parts = Vec::new();
    for n in 0..3 {
        let lt: Vec<f64> = stats.iter().map(|x| [x.0.tau0, x.0.tau1, x.0.tau2][n].ln()).collect();
        let slope = linear_fit(&lz, &lt).0;
        let ratio = [ms.tau0, ms.tau1, ms.tau2][n] / ms.z.powi(n as i32) / tilde[n];
        pass &= (slope - n as f64).abs() <= 0.05 && (ratio - 1.0).abs() <= 0.05;
        parts.push(format!("n={n}: slope {slope:.4}, ratio {ratio:.6}"));
    }
    (pass, parts.join("; "))
}

fn criterion_3() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["massive", "he11-fiber"] {
        let s = preset(name);
        let b = s.asymptotics().unwrap().b;
        let pts: Vec<(f64, f64)> = s.statistics().unwrap().iter().map(|x| (x.1.z, x.1.sigma)).collect();
        let fit = calibrate_b(&pts).unwrap();
        let rel = (fit.slope - b).abs() / b;
        pass &= rel <= 0.05;
        parts.push(format!("{name}: fit {:.5e} vs B {:.5e} ({rel:.1e})", fit.slope, b));
    }
    (pass, parts.join("; "))
}

fn criterion_4() -> Outcome {
    let s = preset("massive");
    let kc = s.config.source.k_center;
    let dk = s.config.source.k_width;
    assert!((dk / kc - 0.02).abs() < 1e-12);
    let b = s.asymptotics().unwrap().b;

    // Oracle from a dispersion table and the spectral weight only.
    let (lo, hi) = s.amplitude.forward_support();
    let table = s.model.tabulate(lo, hi, 257).unwrap();
    let slowness = CubicSpline::new(table.k.clone(), table.omega_prime.iter().map(|v| 1.0 / v).collect());
    let gvd = slowness.derivative(kc).abs();
    let w = s.weight().unwrap();
    let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for (&k, &wk) in w.k.iter().zip(&w.weight).filter(|(k, _)| **k > 0.0) {
        let p = wk * slowness.eval(k);
        m0 += p;
        m1 += p * k;
        m2 += p * k * k;
    }
    let dk_eff = (m2 / m0 - (m1 / m0).powi(2)).sqrt();
    let oracle = gvd * dk_eff;
    let rel = (b - oracle).abs() / oracle;
    (rel <= 0.10, format!("B {b:.5e} vs |d(1/vg)/dk| dk_eff {oracle:.5e} ({rel:.2e})"))
}

fn criterion_5() -> Outcome {
    let s = preset("massive");
    let z = s.sampling_z();
    let dist = s.propagator(&[z]).unwrap().arrival_distribution(z).unwrap();
    let sigma = mean_and_sigma(&moments(&dist, 2).unwrap(), 1.0).unwrap().sigma;
    let seeds = 100u64;
    let mut rms = Vec::new();
    let mut within = 0;
    for &n in &[1_000usize, 10_000, 100_000] {
        let mut sq = 0.0;
        for seed in 0..seeds {
            let est = estimate_sigma(&sample_arrival_times(&dist, n, seed).unwrap()).unwrap();
            sq += (est - sigma).powi(2);
            if n == 100_000 && (est - sigma).abs() < 4.0 * sigma / (2.0 * n as f64).sqrt() {
                within += 1;
            }
        }
        rms.push((sq / seeds as f64).sqrt());
    }
    let ln_n: Vec<f64> = [1e3f64, 1e4, 1e5].iter().map(|v| v.ln()).collect();
    let ln_e: Vec<f64> = rms.iter().map(|v| v.ln()).collect();
    let slope = linear_fit(&ln_n, &ln_e).0;
    (within >= 99 && (slope + 0.5).abs() <= 0.1, format!("{within}/100 seeds within 4 sigma/sqrt(2N); convergence slope {slope:.3}"))
}

fn criterion_6() -> Outcome {
    let mode = he11();
    let a = mode.fiber.a;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for k in logspace(5.0 / a, 100.0 / a, 257) {
        let p = mode.solve(k).unwrap();
        assert!(!p.edge_limited, "edge-limited root at ka={}", k * a);
        worst = worst.max(p.relative_residual);
        count += 1;
    }
    let k = 0.01 / a;
    let fp = mode.fiber;
    let edge = fp.c0 / (fp.eps2 * fp.mu2).sqrt();
    let ratio = mode.omega(k).unwrap() / k / edge;
    (worst < 1e-10 && (ratio - 1.0).abs() < 0.01, format!("worst residual {worst:.2e} over {count} roots; omega/(k c_clad) at ka=0.01: {ratio:.8}"))
}

/// Power series for `I_m`, fine for the moderate arguments used here.
fn bessel_i(m: u32, x: f64) -> f64 {
    let mut term = (0.5 * x).powi(m as i32) / (1..=m).map(f64::from).product::<f64>();
    let mut sum = term;
    for j in 1..400 {
        term *= 0.25 * x * x / (j as f64 * (j + m) as f64);
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

fn criterion_7() -> Outcome {
    let o = FunctionOrder::new;
    let mut worst_id: f64 = 0.0;
    let mut worst_fd: f64 = 0.0;
    for m in 1..=5u32 {
        for i in 0..=100 {
            let x = 0.2 + 40.0 * i as f64 / 100.0;
            let (jm, j0, jp) = (bessel_j(o(m - 1), x), bessel_j(o(m), x), bessel_j(o(m + 1), x));
            let scale = jm.abs().max(jp.abs()).max(1e-3);
            worst_id = worst_id.max((jm + jp - 2.0 * m as f64 / x * j0).abs() / scale);
            let (km, k0, kp) = (bessel_k(o(m - 1), x).unwrap(), bessel_k(o(m), x).unwrap(), bessel_k(o(m + 1), x).unwrap());
            worst_id = worst_id.max((kp - km - 2.0 * m as f64 / x * k0).abs() / kp);
        }
    }
    for m in 0..=4u32 {
        for &x in &[0.1, 0.5, 1.0, 3.0, 7.5, 15.0] {
            let w = bessel_i(m, x) * bessel_k(o(m + 1), x).unwrap() + bessel_i(m + 1, x) * bessel_k(o(m), x).unwrap();
            worst_id = worst_id.max((w * x - 1.0).abs());
        }
    }
    for &x in &[0.3, 4.0, 17.0, 60.0] {
        let seq = bessel_j_sequence(200, x);
        let s: f64 = seq[0] * seq[0] + 2.0 * seq[1..].iter().map(|v| v * v).sum::<f64>();
        worst_id = worst_id.max((s - 1.0).abs());
    }
    // Fourth-order central differences with a step relative to x, so the
    // x^-m growth of K near the origin does not dominate the truncation.
    let fd = |f: &dyn Fn(f64) -> f64, x: f64| {
        let h = 1e-3 * x.min(1.0);
        (8.0 * (f(x + h) - f(x - h)) - (f(x + 2.0 * h) - f(x - 2.0 * h))) / (12.0 * h)
    };
    for m in 0..=5u32 {
        for i in 0..=40 {
            let x = 0.1 + 60.0 * i as f64 / 40.0;
            let d = bessel_j_prime(o(m), x);
            let approx = fd(&|t| bessel_j(o(m), t), x);
            worst_fd = worst_fd.max((approx - d).abs() / d.abs().max(bessel_j(o(m), x).abs()).max(1e-3));
            let d = bessel_k_prime(o(m), x).unwrap();
            let approx = fd(&|t| bessel_k(o(m), t).unwrap(), x);
            worst_fd = worst_fd.max(((approx - d) / d).abs());
        }
    }
    (worst_id < 1e-10 && worst_fd < 1e-7, format!("worst identity defect {worst_id:.2e}, worst derivative mismatch {worst_fd:.2e}"))
}

fn criterion_8() -> Outcome {
    let mut worst: f64 = 0.0;
    for s in [0.1, 1.0, 10.0] {
        let (num, exact) = laplace_log_selfcheck(s).unwrap();
        worst = worst.max(((num - exact) / exact).abs());
    }
    (worst < 1e-6, format!("worst relative error {worst:.2e}"))
}

fn criterion_9() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in PRESET_NAMES {
        let s = preset(name);
        let r = tau1_tilde_routes(&s.weight().unwrap(), &s.model).unwrap();
        pass &= r.relative_difference <= 1e-3;
        parts.push(format!("{name}: {:.2e}", r.relative_difference));
    }
    (pass, parts.join("; "))
}

/// Telecom-like pulse in the preset fiber: 4 ps at the source.
fn criterion_10() -> Outcome {
    let mode = he11();
    let model = DispersionModel::fiber(mode);
    let wg = photon_duration::mode_fields::Waveguide::fiber(model).unwrap();
    let kc = 5.8576e6;
    let dk = 854.0;
    let g = SpectralAmplitude::gaussian(kc, dk, 2).unwrap();
    let nu = Default::default();
    let w = spectral_weight(&g, &wg, &nu, RegularizationParameter::ZERO, &g.default_grid(513)).unwrap();
    let c = slopes(&w, &model, 1.0).unwrap();
    // Transform-limited duration of the source: 1/(√2 v_g Δk) for this envelope.
    let vg = model.group_velocity(kc).unwrap();
    let sigma0 = 1.0 / (2f64.sqrt() * vg * dk);
    let z = 100e3;
    let sigma = (sigma0 * sigma0 + (c.b * z).powi(2)).sqrt();
    (
        true,
        format!(
            "(report only) sigma(0) = {:.2} ps, B = {:.3e} s/m, sigma(100 km) = {:.1} ps, growth x{:.1}; cited external figure: 4 ps to 25 ps",
            sigma0 * 1e12,
            c.b,
            sigma * 1e12,
            sigma / sigma0
        ),
    )
}

#[test]
fn acceptance() {
    let criteria: [(u32, fn() -> Outcome, bool); 10] = [
        (1, criterion_1, true),
        (2, criterion_2, true),
        (3, criterion_3, true),
        (4, criterion_4, true),
        (5, criterion_5, true),
        (6, criterion_6, true),
        (7, criterion_7, true),
        (8, criterion_8, true),
        (9, criterion_9, true),
        (10, criterion_10, false),
    ];
    let mut failed = Vec::new();
    for (id, f, binding) in criteria {
        let (pass, detail) = f();
        println!("{} {id}: {detail}", if pass { "PASS" } else { "FAIL" });
        if binding && !pass {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
