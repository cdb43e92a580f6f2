use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kite_core::fitting::synthesize;
use kite_core::spectra::{ModelSpec, PlaquetteEdge};
use kite_core::EffectiveParams;
use serde_json::Value;
use tempfile::TempDir;

fn kite(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kite")).args(args).output().expect("run kite")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run_ok(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = kite(&args);
    assert!(o.status.success(), "{cmd} failed: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn harmonic_spectrum_is_flat_and_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "spec.json",
        r#"{"model": {"model": "ideal", "omega": 2.5, "cal_e_j": 0.0, "eta": 1.0, "dim": 20},
            "flux": {"edge": "theta-pi", "points": 7}, "transitions": 3}"#,
    );
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_ok("spectrum", &cfg, &a, &["--seed", "3"]);
    run_ok("spectrum", &cfg, &b, &["--seed", "3"]);
    let (header, rows) = csv_rows(&a.join("spectrum.csv"));
    assert_eq!(header, ["theta_ext", "phi_ext", "level", "omega_ghz", "delta_ghz"]);
    assert_eq!(rows.len(), 21);
    for r in &rows {
        assert!((r[3] - 2.5).abs() < 1e-12 && r[4].abs() < 1e-12);
    }
    for f in ["spectrum.csv", "spectrum.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let side = json(&a.join("spectrum.json"));
    assert_eq!(side["config"]["eigen"]["seed"], 3);
    assert_eq!(side["config"]["transitions"], 3);
    assert_eq!(side["result"]["dims"][0], 20);
    // no temporary files left behind
    assert!(fs::read_dir(&a).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".tmp")));
}

#[test]
fn malformed_config_exits_two_without_output() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    for body in [
        r#"{"model": {"model": "ideal"}, "flux": 3}"#,
        "not json",
        r#"{"model": {"model": "ideal", "omega": 2.0, "cal_e_j": 0.1, "eta": 1.0, "dim": 1}, "flux": {"edge": "theta-pi", "points": 3}}"#,
    ] {
        let cfg = write(tmp.path(), "bad.json", body);
        let o = kite(&["spectrum", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists());
    }
    let o = kite(&["spectrum", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn interlacing_sweep_crosses_columns() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "spec.json",
        r#"{"model": {"model": "circuit-one-mode", "params": {"omega": 2.86, "cal_e_j": 0.79, "d_e_j": 0.27, "eta": 3.4}, "dim": 200},
            "flux": {"edge": "theta-pi", "points": 41}}"#,
    );
    let out = tmp.path().join("o");
    run_ok("spectrum", &cfg, &out, &[]);
    let (_, rows) = csv_rows(&out.join("spectrum.csv"));
    let w0: Vec<f64> = rows.iter().filter(|r| r[2] == 0.0).map(|r| r[3]).collect();
    let w1: Vec<f64> = rows.iter().filter(|r| r[2] == 1.0).map(|r| r[3]).collect();
    let above: Vec<bool> = w0.iter().zip(&w1).map(|(a, b)| a > b).collect();
    assert!(above.windows(2).any(|p| p[0] != p[1]));
}

#[test]
fn ladder_closed_form_and_inversion() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "l.json", r#"{"cal_e_j": 0.79, "eta": 3.4}"#);
    let out = tmp.path().join("a");
    run_ok("ladder", &cfg, &out, &[]);
    let (header, j) = csv_rows(&out.join("j.csv"));
    assert_eq!(header, ["n", "J_ghz"]);
    let want = [-0.0815, 0.1047, -0.0756];
    for (row, w) in j[1..4].iter().zip(want) {
        assert!((row[1] - w).abs() < 1e-4, "{row:?}");
        assert!(row[1].abs() > 0.070);
    }
    let (header, _) = csv_rows(&out.join("delta.csv"));
    assert_eq!(header, ["n", "delta_ghz"]);

    let cfg = write(tmp.path(), "inv.json", r#"{"delta": [-0.163, 0.3021, -0.420]}"#);
    let out = tmp.path().join("b");
    run_ok("ladder", &cfg, &out, &[]);
    let (_, j) = csv_rows(&out.join("j.csv"));
    assert_eq!(j.iter().map(|r| r[0]).collect::<Vec<_>>(), [2.0, 3.0, 4.0]);
    for (row, w) in j.iter().zip(want) {
        assert!((row[1] - w).abs() < 1e-4, "{row:?}");
    }
}

#[test]
fn reduce_reports_effective_parameters_and_warnings() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "r.json",
        r#"{"params": {"e_j": 3.92, "e_c": 6.23, "e_l": 0.53, "eps_l": 6.73, "eps_c": 5.65, "eps": 0.032}}"#,
    );
    let out = tmp.path().join("a");
    run_ok("reduce", &cfg, &out, &[]);
    let r = json(&out.join("reduce.json"));
    let e = &r["result"]["report"]["effective"];
    for (key, want) in [("omega", 2.93), ("cal_e_j", 1.14), ("d_e_j", 0.25), ("eta", 3.31)] {
        let got = e[key].as_f64().unwrap();
        assert!(((got - want) / want).abs() < 0.01, "{key}: {got}");
    }
    assert_eq!(r["config"]["params"]["theta_ext"].as_f64().unwrap(), std::f64::consts::PI);

    let cfg = write(
        tmp.path(),
        "r0.json",
        r#"{"params": {"e_j": 5.0, "e_c": 6.23, "e_l": 0.53, "eps_l": 6.73, "eps_c": 5.65, "eps": 0.0}}"#,
    );
    let out = tmp.path().join("b");
    let o = run_ok("reduce", &cfg, &out, &[]);
    let r = json(&out.join("reduce.json"));
    assert_eq!(r["result"]["report"]["effective"]["d_e_j"].as_f64(), Some(0.0));
    assert!(!r["result"]["report"]["warnings"].as_array().unwrap().is_empty());
    assert!(String::from_utf8_lossy(&o.stderr).contains("exceeds"));
}

#[test]
fn vacuum_evolution_gives_unit_gaussian() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "e.json",
        r#"{"model": {"model": "ideal", "omega": 2.86, "cal_e_j": 0.0, "eta": 3.4, "dim": 30},
            "alpha": 0.0, "times": [0.0], "grid": {"x_min": -5, "x_max": 5, "nx": 101, "p_min": -5, "p_max": 5, "np": 101}}"#,
    );
    let out = tmp.path().join("a");
    run_ok("evolve", &cfg, &out, &[]);
    let (header, rows) = csv_rows(&out.join("wigner_000.csv"));
    assert_eq!(header, ["x", "p", "w"]);
    let (best, at) =
        rows.iter().fold((f64::MIN, (0.0, 0.0)), |acc, r| if r[2] > acc.0 { (r[2], (r[0], r[1])) } else { acc });
    assert!((best - 1.0 / std::f64::consts::PI).abs() < 1e-9);
    assert_eq!(at, (0.0, 0.0));
    let side = json(&out.join("evolve.json"));
    let integral = side["result"]["snapshots"][0]["integral"].as_f64().unwrap();
    assert!((integral - 1.0).abs() < 1e-3);
    let (header, overlap) = csv_rows(&out.join("overlap.csv"));
    assert_eq!(header, ["index", "t_ns", "norm", "energy_ghz", "overlap"]);
    assert!((overlap[0][2] - 1.0).abs() < 1e-12);
}

#[test]
fn coherent_evolution_defaults_span_one_period() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "e.json",
        r#"{"model": {"model": "ideal", "omega": 2.86, "cal_e_j": 0.79, "eta": 3.4, "dim": 100}, "phi_ext": 3.141592653589793,
            "snapshots": 3, "grid_points": 21}"#,
    );
    let out = tmp.path().join("a");
    run_ok("evolve", &cfg, &out, &[]);
    let side = json(&out.join("evolve.json"));
    assert!((side["config"]["alpha"].as_f64().unwrap() - 1.7).abs() < 1e-12);
    let times = side["config"]["times"].as_array().unwrap();
    assert!((times[2].as_f64().unwrap() - 1.0 / 2.86).abs() < 1e-12);
    for i in 0..3 {
        assert!(out.join(format!("wigner_{i:03}.csv")).exists());
    }
}

fn dataset_csv(dir: &Path, with_sigma: bool) -> PathBuf {
    let spec = ModelSpec::CircuitOneMode { params: EffectiveParams::device(), dim: 150 };
    let data = synthesize(&spec, &PlaquetteEdge::ThetaPi.path(9), &[0, 1, 2], 0.0, 1).unwrap();
    let mut body = String::from(if with_sigma {
        "theta_ext,phi_ext,level,freq_ghz,sigma_ghz\n"
    } else {
        "theta_ext,phi_ext,level,freq_ghz\n"
    });
    for r in &data.rows {
        body.push_str(&format!("{:.17e},{:.17e},{},{:.17e}", r.theta_ext, r.phi_ext, r.level, r.freq));
        body.push_str(if with_sigma { ",0.002\n" } else { "\n" });
    }
    write(dir, "data.csv", &body)
}

#[test]
fn fit_recovers_synthetic_parameters() {
    let tmp = TempDir::new().unwrap();
    dataset_csv(tmp.path(), true);
    let cfg = write(
        tmp.path(),
        "f.json",
        r#"{"model": {"model": "circuit-one-mode", "init": {"omega": 3.146, "cal_e_j": 0.711, "d_e_j": 0.297, "eta": 3.06}, "dim": 150},
            "data": "data.csv"}"#,
    );
    let out = tmp.path().join("a");
    run_ok("fit", &cfg, &out, &[]);
    let side = json(&out.join("fit.json"));
    let p = &side["result"]["fit"]["params"];
    for (key, want) in [("omega", 2.86), ("cal_e_j", 0.79), ("d_e_j", 0.27), ("eta", 3.40)] {
        let got = p[key].as_f64().unwrap();
        assert!(((got - want) / want).abs() < 1e-3, "{key}: {got}");
    }
    let (header, rows) = csv_rows(&out.join("residuals.csv"));
    assert_eq!(header[..4], ["theta_ext", "phi_ext", "level", "observed_ghz"]);
    assert_eq!(rows.len(), 27);
    assert!(rows.iter().all(|r| r[5].abs() < 1e-6 && (r[6] - 250_000.0).abs() < 1e-6));

    let out = tmp.path().join("b");
    run_ok("fit", &cfg, &out, &["--mask", "eta"]);
    let side = json(&out.join("fit.json"));
    assert_eq!(side["result"]["fit"]["params"]["eta"].as_f64(), Some(3.06));
    assert_eq!(side["config"]["freeze"][0], "eta");
}

#[test]
fn fit_input_errors_have_distinct_codes() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "nofreq.csv", "theta_ext,phi_ext,level\n3.14159,0.1,0\n");
    let cfg = write(
        tmp.path(),
        "f.json",
        r#"{"model": {"model": "circuit-one-mode", "init": {"omega": 2.86, "cal_e_j": 0.79, "d_e_j": 0.27, "eta": 3.4}, "dim": 100},
            "data": "nofreq.csv"}"#,
    );
    let o = kite(&["fit", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("freq_ghz"));

    let pi = std::f64::consts::PI;
    write(tmp.path(), "one.csv", &format!("theta_ext,phi_ext,level,freq_ghz\n{pi},0.3,0,2.9\n{pi},0.3,1,2.8\n"));
    let cfg = write(
        tmp.path(),
        "g.json",
        r#"{"model": {"model": "circuit-one-mode", "init": {"omega": 2.86, "cal_e_j": 0.79, "d_e_j": 0.27, "eta": 3.4}, "dim": 100},
            "data": "one.csv"}"#,
    );
    let o = kite(&["fit", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("y").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!tmp.path().join("y").exists());

    let o = kite(&["fit", "--config", cfg.to_str().unwrap(), "--mask", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn converge_reports_dims_and_cap_is_numerical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"model": {"model": "ideal", "omega": 2.0, "cal_e_j": 0.0, "eta": 0.5, "dim": 8}}"#,
    );
    let out = tmp.path().join("a");
    run_ok("converge", &cfg, &out, &[]);
    let side = json(&out.join("converge.json"));
    assert_eq!(side["result"]["dims"][0], 8);
    assert_eq!(side["config"]["tol"].as_f64(), Some(1e-5));

    let cfg = write(
        tmp.path(),
        "d.json",
        r#"{"model": {"model": "ideal", "omega": 2.86, "cal_e_j": 0.79, "eta": 3.4, "dim": 1024}}"#,
    );
    let o = kite(&["converge", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("b").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn threads_flag_is_validated_and_echoed() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "l.json", r#"{"cal_e_j": 0.79, "eta": 3.4, "n_max": 3}"#);
    let out = tmp.path().join("a");
    run_ok("ladder", &cfg, &out, &["--threads", "1"]);
    assert_eq!(json(&out.join("ladder.json"))["context"]["threads"], 1);
    let o = kite(&["ladder", "--config", cfg.to_str().unwrap(), "--threads", "0"]);
    assert_eq!(o.status.code(), Some(2));
}
