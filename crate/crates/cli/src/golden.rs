//! Reference artifacts for the configured device and their comparison with a
//! versioned golden directory.

use std::fs;
use std::path::Path;

use biphoton::fitting::{fit_hom_interferogram, initial_guess, FitOptions};
use biphoton::hom::Interferogram;
use biphoton::spectrum::build_joint_spectrum;
use serde::Serialize;
use serde_json::Value;

use crate::commands::{hom_fp_table, hom_table, marginal_tables, tomo_report, tunability_table, DelayArgs};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::io::{to_json, Table};

pub const RELATIVE_TOL: f64 = 1e-9;
pub const ABSOLUTE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Summary {
    pub blessed: bool,
    pub files: Vec<String>,
    pub mismatched: Vec<String>,
}

fn delays(min: f64, max: f64, step: f64) -> DelayArgs {
    DelayArgs {
        tau_min_ps: min,
        tau_max_ps: max,
        step_ps: step,
    }
}

/// Artifacts regenerated by `reproduce`, in a fixed order.
pub fn artifacts(cfg: &RunConfig) -> Result<Vec<(&'static str, Vec<u8>)>, CliError> {
    let mut out = Vec::new();
    out.push(("tunability.csv", tunability_table(cfg, -2.0, 2.0, 81)?.to_csv()?));

    let js = build_joint_spectrum(&cfg.pump, &cfg.dispersion, &cfg.grid)?;
    let (signal, idler) = marginal_tables(&js.jsi_grid());
    out.push(("marginal_signal.csv", signal.to_csv()?));
    out.push(("marginal_idler.csv", idler.to_csv()?));

    let closed = hom_table(cfg, true, &delays(-30.0, 30.0, 0.25))?;
    out.push(("hom_closed_form.csv", closed.to_csv()?));
    out.push(("hom_quadrature.csv", hom_table(cfg, false, &delays(-30.0, 30.0, 0.25))?.to_csv()?));
    out.push((
        "hom_fp_averaged.csv",
        hom_fp_table(cfg, None, false, &delays(-30.0, 30.0, 1.0))?.to_csv()?,
    ));

    let data = interferogram_of(&closed)?;
    let fit = fit_hom_interferogram(&data, &initial_guess(&data)?, &FitOptions::default())?;
    out.push(("fit_closed_form.json", to_json(&fit)?));
    out.push(("tomo.json", to_json(&tomo_report(0.517, 0.701, 0.0, Some(0.005), Some(0.011))?)?));
    Ok(out)
}

fn interferogram_of(t: &Table) -> Result<Interferogram, CliError> {
    let taus = t.rows.iter().map(|r| r[0] * 1e-12).collect();
    let values = t.rows.iter().map(|r| r[1]).collect();
    Ok(Interferogram::probability(taus, values)?)
}

pub fn reproduce(cfg: &RunConfig, dir: &Path, bless: bool) -> Result<Summary, CliError> {
    let io_err = |p: &Path, e: std::io::Error| CliError::input(p.display().to_string(), e.to_string());
    if bless {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let mut summary = Summary {
        blessed: bless,
        files: Vec::new(),
        mismatched: Vec::new(),
    };
    for (name, bytes) in artifacts(cfg)? {
        let path = dir.join(name);
        summary.files.push(name.to_string());
        if bless {
            fs::write(&path, &bytes).map_err(|e| io_err(&path, e))?;
            continue;
        }
        let expected = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                summary.mismatched.push(format!("{name} (missing)"));
                continue;
            }
            Err(e) => return Err(io_err(&path, e)),
        };
        if let Err(why) = compare(name, &expected, &bytes) {
            log::warn!("{name}: {why}");
            summary.mismatched.push(format!("{name} ({why})"));
        }
    }
    Ok(summary)
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= ABSOLUTE_TOL + RELATIVE_TOL * a.abs().max(b.abs())
}

/// Compare two artifacts cell by cell (CSV) or leaf by leaf (JSON), numbers
/// within the golden tolerance and everything else exactly.
pub fn compare(name: &str, expected: &[u8], actual: &[u8]) -> Result<(), String> {
    if name.ends_with(".json") {
        let e: Value = serde_json::from_slice(expected).map_err(|e| format!("golden is not JSON: {e}"))?;
        let a: Value = serde_json::from_slice(actual).map_err(|e| format!("output is not JSON: {e}"))?;
        return compare_json("$", &e, &a);
    }
    let e = std::str::from_utf8(expected).map_err(|e| e.to_string())?;
    let a = std::str::from_utf8(actual).map_err(|e| e.to_string())?;
    let (el, al): (Vec<&str>, Vec<&str>) = (e.lines().collect(), a.lines().collect());
    if el.len() != al.len() {
        return Err(format!("{} lines, expected {}", al.len(), el.len()));
    }
    for (k, (x, y)) in el.iter().zip(&al).enumerate() {
        let (xs, ys): (Vec<&str>, Vec<&str>) = (x.split(',').collect(), y.split(',').collect());
        if xs.len() != ys.len() {
            return Err(format!("line {}: {} fields, expected {}", k + 1, ys.len(), xs.len()));
        }
        for (c, (u, v)) in xs.iter().zip(&ys).enumerate() {
            let same = match (u.parse::<f64>(), v.parse::<f64>()) {
                (Ok(p), Ok(q)) => close(p, q),
                _ => u == v,
            };
            if !same {
                return Err(format!("line {}, field {}: {v} vs golden {u}", k + 1, c + 1));
            }
        }
    }
    Ok(())
}

fn compare_json(at: &str, e: &Value, a: &Value) -> Result<(), String> {
    match (e, a) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap_or(f64::NAN), y.as_f64().unwrap_or(f64::NAN));
            if close(x, y) {
                Ok(())
            } else {
                Err(format!("{at}: {y} vs golden {x}"))
            }
        }
        (Value::Array(xs), Value::Array(ys)) => {
            if xs.len() != ys.len() {
                return Err(format!("{at}: {} elements, expected {}", ys.len(), xs.len()));
            }
            xs.iter()
                .zip(ys)
                .enumerate()
                .try_for_each(|(k, (x, y))| compare_json(&format!("{at}[{k}]"), x, y))
        }
        (Value::Object(xs), Value::Object(ys)) => {
            if xs.len() != ys.len() || xs.keys().any(|k| !ys.contains_key(k)) {
                return Err(format!("{at}: key sets differ"));
            }
            xs.iter().try_for_each(|(k, x)| compare_json(&format!("{at}.{k}"), x, &ys[k]))
        }
        _ if e == a => Ok(()),
        _ => Err(format!("{at}: {a} vs golden {e}")),
    }
}
