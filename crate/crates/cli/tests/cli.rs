use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use biphoton_cli::config::PAPER_DEVICE_CFG;
use biphoton_cli::ErrorReport;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biphoton"))
        .args(args)
        .env_remove("BIPHOTON_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn error_report(out: &Output) -> ErrorReport {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{e}: {text}"))
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn cavity_off_matches_plain_quadrature_bytes() {
    let args = ["--tau-min-ps", "-20", "--tau-max-ps", "20", "--step-ps", "0.5"];
    let hom = run(&[&["hom"], &args[..]].concat());
    let fp = run(&[&["hom-fp", "--reflectivity", "0"], &args[..]].concat());
    let fp_raw = run(&[&["hom-fp", "--reflectivity", "0", "--raw"], &args[..]].concat());
    assert!(hom.status.success());
    assert_eq!(hom.stdout, fp.stdout);
    assert_eq!(hom.stdout, fp_raw.stdout);
}

#[test]
fn output_is_deterministic() {
    let a = run(&["hom", "--step-ps", "1"]);
    let b = run(&["hom", "--step-ps", "1"]);
    assert_eq!(a.stdout, b.stdout);
    let single = Command::new(env!("CARGO_BIN_EXE_biphoton"))
        .args(["hom", "--step-ps", "1"])
        .env("BIPHOTON_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(a.stdout, single.stdout);
}

#[test]
fn hom_output_feeds_fit() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("hom.csv");
    let out = run(&["hom", "--step-ps", "0.05", "--output", csv.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let fit: serde_json::Value = serde_json::from_str(&stdout(&["fit", "--input", csv.to_str().unwrap()])).unwrap();
    assert_eq!(fit["converged"], true);
    let v = fit["params"]["visibility"].as_f64().unwrap();
    let dt = fit["params"]["delta_tau"].as_f64().unwrap();
    assert!((v - 1.0).abs() < 1e-3, "{v}");
    assert!((dt / 10.507e-12 - 1.0).abs() < 1e-3, "{dt}");
}

#[test]
fn fit_iteration_cap_exits_four_with_best_result() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("hom.csv");
    fs::write(&csv, stdout(&["hom", "--closed-form", "--step-ps", "0.1"])).unwrap();
    let out = run(&["fit", "--input", csv.to_str().unwrap(), "--max-iterations", "1"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_report(&out).error, "non_convergence");
    let best: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(best["converged"], false);
    assert_eq!(best["iterations"], 1);
}

#[test]
fn tomo_reports_metrics_and_uncertainties() {
    let v: serde_json::Value =
        serde_json::from_str(&stdout(&["tomo", "--p", "0.517", "--visibility", "0.701", "--dp", "0.005", "--dv", "0.011"]))
            .unwrap();
    assert!((v["purity"].as_f64().unwrap() - 0.746).abs() < 1e-3);
    assert!((v["fidelity"].as_f64().unwrap() - 0.851).abs() < 1e-3);
    assert_eq!(v["concurrence"].as_f64().unwrap(), 0.701);
    assert_eq!(v["matrix_real"].as_array().unwrap().len(), 4);
    assert!((v["uncertainty"]["concurrence"].as_f64().unwrap() - 0.011).abs() < 1e-12);
}

#[test]
fn errors_are_json_with_exit_codes() {
    let out = run(&["tomo", "--p", "0.1", "--visibility", "0.9"]);
    assert_eq!(out.status.code(), Some(2));
    let r = error_report(&out);
    assert_eq!((r.error.as_str(), r.subcommand.as_str()), ("physicality", "tomo"));

    let out = run(&["hom", "--tau-min-ps", "190", "--tau-max-ps", "200"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_report(&out).error, "resolution");

    let out = run(&["hom-fp", "--reflectivity", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_report(&out).message.contains("reflectivity_R"));

    let out = run(&["fit", "--input", "/nonexistent/data.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_report(&out).subcommand, "fit");
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &PAPER_DEVICE_CFG.replace("reflectivity_r = 0.10", "reflectivity_r = 1.0"));
    let out = run(&["--config", &cfg, "tunability"]);
    assert_eq!(out.status.code(), Some(2));
    let r = error_report(&out);
    assert_eq!(r.error, "config");
    assert!(r.message.contains("reflectivity_R") && r.message.contains("line 17"), "{}", r.message);

    let cfg = write_config(dir.path(), "");
    let r = error_report(&run(&["--config", &cfg, "tunability"]));
    assert!(r.message.contains("pump.lambda_p_nm") && r.message.contains("waveguide.modal_index_n"));

    let cfg = write_config(dir.path(), &format!("{PAPER_DEVICE_CFG}\n[pump]\ncolour = red\n"));
    let r = error_report(&run(&["--config", &cfg, "tunability"]));
    assert!(r.message.contains("unknown key `colour`"), "{}", r.message);
}

#[test]
fn config_controls_output() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("tun.json");
    let cfg = write_config(
        dir.path(),
        &format!("{PAPER_DEVICE_CFG}\n[output]\npath = {}\nformat = json\n", target.display()),
    );
    let out = run(&["--config", &cfg, "tunability", "--points", "5"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&target).unwrap()).unwrap();
    assert_eq!(v["columns"][0], "theta_deg");
    assert_eq!(v["rows"].as_array().unwrap().len(), 5);
    let csv = stdout(&["--config", &cfg, "--output", "-", "--format", "csv", "tunability", "--points", "5"]);
    assert!(csv.starts_with("theta_deg,lambda_s_HV_nm,lambda_i_HV_nm,lambda_s_VH_nm,lambda_i_VH_nm\n"));
}

#[test]
fn jsi_grid_round_trips_through_ingestion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &PAPER_DEVICE_CFG.replace("points = 512", "points = 256"));
    let grid = dir.path().join("jsi.csv");
    assert!(run(&["--config", &cfg, "jsi", "--output", grid.to_str().unwrap()]).status.success());
    let text = fs::read_to_string(&grid).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 257);
    assert_eq!(text.lines().count(), 257);

    let simulated: serde_json::Value = serde_json::from_str(&stdout(&["--config", &cfg, "jsi", "--population"])).unwrap();
    let ingested: serde_json::Value = serde_json::from_str(&stdout(&[
        "--config",
        &cfg,
        "jsi",
        "--population",
        "--ingest",
        grid.to_str().unwrap(),
    ]))
    .unwrap();
    let (a, b) = (simulated["p"].as_f64().unwrap(), ingested["p"].as_f64().unwrap());
    assert!((a - 0.5).abs() < 1e-9 && (a - b).abs() < 1e-9, "{a} {b}");

    let base = dir.path().join("m.csv");
    assert!(run(&["--config", &cfg, "jsi", "--marginals", "--output", base.to_str().unwrap()]).status.success());
    for (name, col) in [("m.signal.csv", "lambda_s_nm,signal_density"), ("m.idler.csv", "lambda_i_nm,idler_density")] {
        let t = fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(t.starts_with(col), "{t}");
        assert_eq!(t.lines().count(), 257);
    }
}

#[test]
fn reproduce_matches_golden_files() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let out = run(&["reproduce", "--dir", golden.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn reproduce_flags_tampered_golden() {
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let dir = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(&src).unwrap() {
        let p = entry.unwrap().path();
        fs::copy(&p, dir.path().join(p.file_name().unwrap())).unwrap();
    }
    let tomo = dir.path().join("tomo.json");
    let text = fs::read_to_string(&tomo).unwrap().replace("0.701", "0.702");
    fs::write(&tomo, text).unwrap();
    fs::remove_file(dir.path().join("tunability.csv")).unwrap();
    let out = run(&["reproduce", "--dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let mismatched = summary["mismatched"].as_array().unwrap();
    assert_eq!(mismatched.len(), 2, "{mismatched:?}");
    assert_eq!(error_report(&out).error, "golden_mismatch");
}
