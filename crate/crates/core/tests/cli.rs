//! End-to-end runs of the `sandwich` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_sandwich");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("SANDWICH_WORKERS").output().expect("spawn sandwich")
}

fn path(dir: &tempfile::TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_owned()
}

fn report(file: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(file).unwrap()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn shift_map_default_grid() {
    let dir = tempfile::tempdir().unwrap();
    let csv = path(&dir, "map.csv");
    let rep = path(&dir, "map.json");
    let out = run(&["shift-map", "--preset", "baseline", "-o", &csv, "--report", &rep]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "q1_m,q2_m,domega_over_fsr,g1_rad_s_per_m,g2_rad_s_per_m,flag");
    assert_eq!(lines.count(), 201 * 201);
    let r = report(&rep);
    assert_eq!(r["command"], "shift-map");
    assert!(r["config"].is_object());
}

#[test]
fn output_is_reproducible_across_runs_and_workers() {
    let a = run(&["shift-map", "--preset", "baseline", "--steps", "201"]);
    let b = run(&["shift-map", "--preset", "baseline", "--steps", "201"]);
    let c = Command::new(BIN)
        .args(["shift-map", "--preset", "baseline", "--steps", "201"])
        .env("SANDWICH_WORKERS", "1")
        .output()
        .unwrap();
    let d = run(&["--workers", "3", "shift-map", "--preset", "baseline", "--steps", "201"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    assert_eq!(a.stdout, d.stdout);
    assert_eq!(String::from_utf8_lossy(&a.stdout).lines().count(), 201 * 201 + 1);
}

#[test]
fn bad_worker_count_is_rejected() {
    let out = Command::new(BIN)
        .args(["shift-map", "--steps", "11"])
        .env("SANDWICH_WORKERS", "lots")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn scan_reports_gain_over_single_membrane() {
    let dir = tempfile::tempdir().unwrap();
    let rep = path(&dir, "scan.json");
    let out = run(&["scan", "--preset", "scan-q1", "-o", &path(&dir, "scan.csv"), "--report", &rep]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let ratio = report(&rep)["result"]["slope_ratio"].as_f64().unwrap();
    assert!(ratio > 2.5 && ratio < 3.0, "{ratio}");
}

#[test]
fn coupling_summary_writes_json() {
    let out = run(&["coupling-summary", "--preset", "baseline"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["command"], "coupling-summary");
}

#[test]
fn malformed_csv_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(&dir, "ring.csv");
    fs::write(&data, "time_s,intensity\n0,1\n1e-6,0.5\n2e-6,half\n").unwrap();
    let out = run(&["fit", "ringdown", &data, "--length", "90mm"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("line 4"), "{msg}");
}

#[test]
fn missing_data_file_is_an_input_error() {
    let out = run(&["fit", "ringdown", "/nonexistent/ring.csv"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = path(&dir, "cfg.json");
    fs::write(&cfg, r#"{"geometry": {"lenght": 0.09}}"#).unwrap();
    let out = run(&["shift-map", "--config", &cfg, "--steps", "11"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("lenght"), "{}", stderr(&out));
    let out = run(&["shift-map", "--set", "geometry.nope=1", "--steps", "11"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["shift-map", "--preset", "nonexistent"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unit_strings_are_accepted() {
    let a = run(&["shift-map", "--set", "geometry.length=90mm"]);
    let b = run(&["shift-map", "--set", "geometry.length=0.09"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let c = run(&["shift-map", "--steps", "11", "--set", "geometry.length=90 kHz"]);
    assert_eq!(c.status.code(), Some(2));
}

#[test]
fn unstable_cooling_is_refused_unless_allowed() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "cooling",
        "--preset",
        "cooling-low",
        "--set",
        "cooling.sweep.start=-1.2",
        "--set",
        "cooling.sweep.stop=1.2",
        "--set",
        "cooling.sweep.steps=7",
        "--set",
        "cooling.power=5mW",
        "--set",
        "cooling.frequency.steps=50",
    ];
    let out = run(&args);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stderr(&out).to_lowercase().contains("unstable"), "{}", stderr(&out));

    let csv = path(&dir, "heat.csv");
    let rep = path(&dir, "heat.json");
    let mut allowed = args.to_vec();
    allowed.extend(["--allow-unstable", "-o", &csv, "--report", &rep]);
    let out = run(&allowed);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 51);
    assert!(text.contains("NaN"));
    let header = text.lines().next().unwrap();
    assert_eq!(header.split(',').count(), 8);
}

#[test]
fn zero_power_column_is_thermal() {
    let dir = tempfile::tempdir().unwrap();
    let csv = path(&dir, "power.csv");
    let out = run(&["cooling", "--preset", "power-sweep", "--set", "cooling.sweep.steps=3", "-o", &csv]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = fs::read_to_string(&csv).unwrap();
    let cfg = membrane_sandwich::io::RunConfig::resolve(Some("power-sweep"), None, &[]).unwrap();
    let bare = cfg.optomechanics().with_power(0.0);
    let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    let omega: Vec<f64> = rows.iter().map(|r| 2.0 * std::f64::consts::PI * r[0]).collect();
    let mut thermal = vec![0.0; omega.len()];
    for j in 0..bare.modes.len() {
        let l = membrane_sandwich::cooling::effective_lorentzian(&bare, j, &omega).unwrap();
        for (t, v) in thermal.iter_mut().zip(l) {
            *t += v;
        }
    }
    for (row, t) in rows.iter().zip(&thermal) {
        assert!((row[1] - t).abs() <= 1e-9 * t, "{} vs {t}", row[1]);
    }
}

#[test]
fn ringdown_and_thickness_reports() {
    let dir = tempfile::tempdir().unwrap();
    let ring = path(&dir, "ring.csv");
    let length = 0.09;
    let tau = 1.5e-6;
    let mut text = String::from("# synthetic\ntime_s,intensity\n");
    for i in 0..400 {
        let t = i as f64 * 2e-8;
        text.push_str(&format!("{t:e},{:e}\n", 0.8 * (-t / tau).exp() + 0.01));
    }
    fs::write(&ring, text).unwrap();
    let rep = path(&dir, "ring.json");
    let out = run(&["fit", "ringdown", &ring, "--length", "90mm", "-o", &rep]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r = report(&rep);
    let finesse = r["result"]["finesse"].as_f64().unwrap();
    let expect = membrane_sandwich::characterization::finesse_from_decay_time(tau, length);
    assert!((finesse / expect - 1.0).abs() < 1e-6, "{finesse} vs {expect}");

    let refl = path(&dir, "refl.csv");
    let m = membrane_sandwich::scatter::Membrane::new(104e-9, 2.2);
    let mut text = String::from("wavelength_m,reflectivity\n");
    for lam in [633e-9, 780e-9, 1064e-9, 1550e-9] {
        text.push_str(&format!("{lam:e},{:e}\n", m.element(lam).unwrap().reflectivity()));
    }
    fs::write(&refl, text).unwrap();
    let out = run(&["fit", "thickness", &refl, "--index", "2.2"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    let d = r["result"]["thickness"].as_f64().unwrap();
    assert!((d - 104e-9).abs() < 1e-12, "{d}");
}

#[test]
fn membrane_mode_fit() {
    let dir = tempfile::tempdir().unwrap();
    let peaks = path(&dir, "peaks.csv");
    let spec = membrane_sandwich::mechanics::MembraneSpec {
        lx: 1.5e-3,
        ly: 1.55e-3,
        stress: 0.825e9,
        density: 3100.0,
        thickness: 100e-9,
    };
    let mut text = String::from("frequency_hz,membrane,m,n\n");
    for (m, n) in [(1, 1), (1, 2), (2, 1), (2, 2), (1, 3)] {
        text.push_str(&format!("{:e},0,{m},{n}\n", spec.frequency_hz(m, n)));
    }
    fs::write(&peaks, text).unwrap();
    let out = run(&["fit", "membrane-modes", &peaks]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    let fit = &r["result"][0]["fit"];
    assert!((fit["lx"].as_f64().unwrap() - spec.lx).abs() < 1e-12);

    fs::write(&peaks, "frequency_hz,membrane,m,n\n1e5,0,1,1\n2e5,0,2,2\n3e5,0,3,3\n").unwrap();
    let out = run(&["fit", "membrane-modes", &peaks]);
    assert_ne!(out.status.code(), Some(0));
    assert!(!Path::new(&peaks).with_extension("json").exists());
}
