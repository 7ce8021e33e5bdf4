use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_photon-duration")).args(args).output().expect("binary runs")
}

fn preset(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("presets").join(format!("{name}.toml"))).unwrap()
}

#[test]
fn fluxplan_one_nanosecond_gives_ten_million_per_second() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("flux.toml");
    let text = format!("{}\n[flux]\nsafety_factor = 100.0\nz = 100.0\nb = 1e-11\n", preset("massive"));
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    let o = run(&["fluxplan", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("fluxplan.json")).unwrap()).unwrap();
    let flux = json["data"]["max_flux"].as_f64().unwrap();
    assert!((flux - 1e7).abs() < 1e-6 * 1e7, "{flux}");
    assert_eq!(json["meta"]["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn non_positive_radius_is_rejected_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    let text = preset("he11-fiber").replace("a = 4e-6", "a = 0.0");
    let line = text.lines().position(|l| l.starts_with("a = 0.0")).unwrap() + 1;
    std::fs::write(&cfg, text).unwrap();
    let o = run(&["weight", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains(&format!("line {line}")) && err.contains("[fiber] a") && err.contains("> 0"), "{err}");
    assert!(err.contains("\"kind\":\"config\""), "{err}");
}

#[test]
fn verify_passes_on_the_dispersionless_preset() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--preset", "dispersionless", "--out", dir.path().to_str().unwrap()]);
    let log = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{log}{}", String::from_utf8_lossy(&o.stderr));
    assert!(log.contains("PASS B vanishes") && !log.contains("FAIL"), "{log}");
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let read_all = |sub: &str| -> Vec<(String, Vec<u8>)> {
        let mut files: Vec<_> = std::fs::read_dir(dir.path().join(sub))
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        files
    };
    for (sub, threads) in [("a", "1"), ("b", "3")] {
        let out = dir.path().join(sub);
        for cmd in ["sample", "stats"] {
            let o = run(&[cmd, "--preset", "dispersionless", "--seed", "7", "--threads", threads, "--out", out.to_str().unwrap()]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        }
    }
    let (a, b) = (read_all("a"), read_all("b"));
    assert_eq!(a.len(), 4);
    assert_eq!(a, b);
    let samples = String::from_utf8(a.iter().find(|f| f.0 == "samples.csv").unwrap().1.clone()).unwrap();
    assert!(samples.starts_with("# photon-duration "));
    assert!(samples.contains("# seed: 7"));
}

#[test]
fn missing_scenario_is_an_error() {
    let o = run(&["stats"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["stats", "--preset", "vacuum"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown preset"));
}
