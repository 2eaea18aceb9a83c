//! Run configuration: a small INI dialect with `[section]` headers,
//! `key = value` lines and `#`/`;` comment lines.
//!
//! Keys carry their unit in the name (`lambda_p_nm`, `length_l_mm`, ...);
//! values are converted to SI on the way into the core types. Unknown
//! sections and keys are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use biphoton::cavity::WaveguideConfig;
use biphoton::dispersion::DispersionModel;
use biphoton::phasematch::PumpConfig;
use biphoton::spectrum::GridSpec;
use biphoton::wavelength_to_omega;

pub const PAPER_DEVICE_CFG: &str = include_str!("../configs/paper_device.cfg");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    /// `None` writes to stdout.
    pub path: Option<PathBuf>,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pump: PumpConfig,
    pub dispersion: DispersionModel,
    pub waveguide: WaveguideConfig,
    pub grid: GridSpec,
    /// Grid for cavity runs, which must also resolve the free spectral range.
    pub cavity_grid: GridSpec,
    pub output: OutputSpec,
}

impl RunConfig {
    pub fn paper_device() -> Self {
        parse_config(PAPER_DEVICE_CFG).expect("bundled config is valid")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    UnknownSection {
        line: usize,
        column: usize,
        name: String,
    },
    UnknownKey {
        line: usize,
        column: usize,
        section: String,
        key: String,
    },
    DuplicateKey {
        line: usize,
        column: usize,
        key: String,
    },
    BadValue {
        line: usize,
        column: usize,
        key: String,
        message: String,
    },
    Missing {
        keys: Vec<String>,
    },
    Invariant {
        key: String,
        line: usize,
        message: String,
    },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Syntax { line, column, message } => {
                write!(f, "line {line}, column {column}: {message}")
            }
            ConfigError::UnknownSection { line, column, name } => {
                write!(f, "line {line}, column {column}: unknown section [{name}]")
            }
            ConfigError::UnknownKey {
                line,
                column,
                section,
                key,
            } => write!(f, "line {line}, column {column}: unknown key `{key}` in [{section}]"),
            ConfigError::DuplicateKey { line, column, key } => {
                write!(f, "line {line}, column {column}: duplicate key `{key}`")
            }
            ConfigError::BadValue {
                line,
                column,
                key,
                message,
            } => write!(f, "line {line}, column {column}: `{key}`: {message}"),
            ConfigError::Missing { keys } => {
                write!(f, "missing required keys: {}", keys.join(", "))
            }
            ConfigError::Invariant { key, line, message } => {
                if *line > 0 {
                    write!(f, "line {line}: `{key}`: {message}")
                } else {
                    write!(f, "`{key}`: {message}")
                }
            }
        }
    }
}

impl std::error::Error for ConfigError {}

struct KeySpec {
    section: &'static str,
    key: &'static str,
    required: bool,
}

const KEYS: &[KeySpec] = &[
    KeySpec { section: "pump", key: "lambda_p_nm", required: true },
    KeySpec { section: "pump", key: "pulse_fwhm_ps", required: true },
    KeySpec { section: "pump", key: "waist_wz_mm", required: true },
    KeySpec { section: "pump", key: "theta_deg", required: false },
    KeySpec { section: "dispersion", key: "n0_h", required: true },
    KeySpec { section: "dispersion", key: "n0_v", required: true },
    KeySpec { section: "dispersion", key: "n_group", required: true },
    KeySpec { section: "dispersion", key: "lambda_ref_nm", required: false },
    KeySpec { section: "waveguide", key: "length_l_mm", required: true },
    KeySpec { section: "waveguide", key: "reflectivity_r", required: true },
    KeySpec { section: "waveguide", key: "modal_index_n", required: true },
    KeySpec { section: "grid", key: "points", required: false },
    KeySpec { section: "grid", key: "n_sigma", required: false },
    KeySpec { section: "grid", key: "cavity_points", required: false },
    KeySpec { section: "output", key: "path", required: false },
    KeySpec { section: "output", key: "format", required: false },
];

const SECTIONS: &[&str] = &["pump", "dispersion", "waveguide", "grid", "output"];

struct Entry {
    value: String,
    line: usize,
    column: usize,
}

struct Table {
    entries: BTreeMap<String, Entry>,
}

impl Table {
    fn raw(&self, name: &str) -> Option<&Entry> {
        self.entries.get(name)
    }

    fn number(&self, name: &str) -> Result<Option<(f64, usize)>, ConfigError> {
        let Some(e) = self.raw(name) else { return Ok(None) };
        match e.value.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Some((v, e.line))),
            _ => Err(ConfigError::BadValue {
                line: e.line,
                column: e.column,
                key: name.to_string(),
                message: format!("`{}` is not a finite number", e.value),
            }),
        }
    }

    fn required(&self, name: &str) -> Result<(f64, usize), ConfigError> {
        Ok(self.number(name)?.expect("presence checked before conversion"))
    }

    fn count(&self, name: &str, default: usize) -> Result<usize, ConfigError> {
        let Some(e) = self.raw(name) else { return Ok(default) };
        e.value.parse::<usize>().map_err(|_| ConfigError::BadValue {
            line: e.line,
            column: e.column,
            key: name.to_string(),
            message: format!("`{}` is not a non-negative integer", e.value),
        })
    }
}

/// `v × 10^exp` rounded once, as if the scaled decimal had been written out.
fn scale_decimal(v: f64, exp: i32) -> f64 {
    let text = format!("{v:e}");
    let (mantissa, e) = text.split_once('e').expect("`{:e}` always has an exponent");
    let e: i32 = e.parse().expect("exponent is an integer");
    format!("{mantissa}e{}", e + exp).parse().expect("mantissa is a valid float")
}

fn invariant(key: &str, line: usize, err: biphoton::Error) -> ConfigError {
    ConfigError::Invariant {
        key: key.to_string(),
        line,
        message: err.to_string(),
    }
}

/// Parse and validate a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
    let mut section: Option<String> = None;
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let indent = raw_line.len() - raw_line.trim_start().len();
        let body = raw_line.trim();
        if body.is_empty() || body.starts_with('#') || body.starts_with(';') {
            continue;
        }
        let column = indent + 1;
        if let Some(rest) = body.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return Err(ConfigError::Syntax {
                    line,
                    column: column + body.len(),
                    message: "section header is missing `]`".into(),
                });
            };
            let name = name.trim();
            if !SECTIONS.contains(&name) {
                return Err(ConfigError::UnknownSection {
                    line,
                    column: column + 1,
                    name: name.to_string(),
                });
            }
            section = Some(name.to_string());
            continue;
        }
        let Some(eq) = body.find('=') else {
            return Err(ConfigError::Syntax {
                line,
                column,
                message: format!("expected `key = value`, found `{body}`"),
            });
        };
        let key = body[..eq].trim();
        let value = body[eq + 1..].trim();
        let Some(sec) = &section else {
            return Err(ConfigError::Syntax {
                line,
                column,
                message: format!("key `{key}` appears before any [section]"),
            });
        };
        if !KEYS.iter().any(|k| k.section == sec && k.key == key) {
            return Err(ConfigError::UnknownKey {
                line,
                column,
                section: sec.clone(),
                key: key.to_string(),
            });
        }
        let value_column = column + eq + 1 + (body[eq + 1..].len() - body[eq + 1..].trim_start().len());
        if value.is_empty() {
            return Err(ConfigError::BadValue {
                line,
                column: value_column,
                key: key.to_string(),
                message: "empty value".into(),
            });
        }
        let full = format!("{sec}.{key}");
        if entries.contains_key(&full) {
            return Err(ConfigError::DuplicateKey { line, column, key: full });
        }
        entries.insert(
            full,
            Entry {
                value: value.to_string(),
                line,
                column: value_column,
            },
        );
    }

    let mut by_line: Vec<(&String, &Entry)> = entries.iter().collect();
    by_line.sort_by_key(|(_, e)| e.line);
    for (name, e) in by_line {
        let bad = |message: String| ConfigError::BadValue {
            line: e.line,
            column: e.column,
            key: name.clone(),
            message,
        };
        match name.as_str() {
            "output.path" | "output.format" => {}
            "grid.points" | "grid.cavity_points" => {
                if e.value.parse::<usize>().is_err() {
                    return Err(bad(format!("`{}` is not a non-negative integer", e.value)));
                }
            }
            _ => {
                if !e.value.parse::<f64>().is_ok_and(f64::is_finite) {
                    return Err(bad(format!("`{}` is not a finite number", e.value)));
                }
            }
        }
    }

    let missing: Vec<String> = KEYS
        .iter()
        .filter(|k| k.required && !entries.contains_key(&format!("{}.{}", k.section, k.key)))
        .map(|k| format!("{}.{}", k.section, k.key))
        .collect();
    if !missing.is_empty() {
        return Err(ConfigError::Missing { keys: missing });
    }
    let t = Table { entries };

    let (lambda_p_nm, l_line) = t.required("pump.lambda_p_nm")?;
    let (fwhm_ps, f_line) = t.required("pump.pulse_fwhm_ps")?;
    let (waist_mm, w_line) = t.required("pump.waist_wz_mm")?;
    let (theta_deg, th_line) = t.number("pump.theta_deg")?.unwrap_or((0.0, 0));
    let pump = PumpConfig::new(
        scale_decimal(lambda_p_nm, -9),
        scale_decimal(fwhm_ps, -12),
        scale_decimal(waist_mm, -3),
        theta_deg.to_radians(),
    )
        .map_err(|e| {
            let (key, line) = match &e {
                biphoton::Error::Invariant { field: "pulse_fwhm", .. } => ("pump.pulse_fwhm_ps", f_line),
                biphoton::Error::Invariant { field: "waist_wz", .. } => ("pump.waist_wz_mm", w_line),
                biphoton::Error::Invariant { field: "theta", .. } => ("pump.theta_deg", th_line),
                _ => ("pump.lambda_p_nm", l_line),
            };
            invariant(key, line, e)
        })?;

    let (n0_h, h_line) = t.required("dispersion.n0_h")?;
    let (n0_v, v_line) = t.required("dispersion.n0_v")?;
    let (n_group, g_line) = t.required("dispersion.n_group")?;
    let (lambda_ref_nm, r_line) = t.number("dispersion.lambda_ref_nm")?.unwrap_or((2.0 * lambda_p_nm, 0));
    let dispersion = DispersionModel::new(n0_h, n0_v, n_group, wavelength_to_omega(scale_decimal(lambda_ref_nm, -9)))
        .map_err(|e| {
            let (key, line) = match &e {
                biphoton::Error::Invariant { field: "n0_H", .. } => ("dispersion.n0_h", h_line),
                biphoton::Error::Invariant { field: "n0_V", .. } => ("dispersion.n0_v", v_line),
                biphoton::Error::Invariant { field: "birefringence", .. } => ("dispersion.n0_v", v_line),
                biphoton::Error::Invariant { field: "n_g", .. } => ("dispersion.n_group", g_line),
                biphoton::Error::Invariant { field: "omega_ref", .. } => ("dispersion.lambda_ref_nm", r_line),
                _ => ("dispersion.n0_h", h_line),
            };
            invariant(key, line, e)
        })?;

    let (length_mm, len_line) = t.required("waveguide.length_l_mm")?;
    let (reflectivity, refl_line) = t.required("waveguide.reflectivity_r")?;
    let (modal_index, n_line) = t.required("waveguide.modal_index_n")?;
    let waveguide = WaveguideConfig::new(scale_decimal(length_mm, -3), reflectivity, modal_index).map_err(|e| {
        let (key, line) = match &e {
            biphoton::Error::Invariant { field: "length_L", .. } => ("waveguide.length_l_mm", len_line),
            biphoton::Error::Invariant { field: "modal_index_n", .. } => ("waveguide.modal_index_n", n_line),
            _ => ("waveguide.reflectivity_r", refl_line),
        };
        invariant(key, line, e)
    })?;

    let points = t.count("grid.points", 512)?;
    let cavity_points = t.count("grid.cavity_points", 768)?;
    let n_sigma = t.number("grid.n_sigma")?.map(|(v, _)| v).unwrap_or(5.0);
    for (key, value) in [("grid.points", points), ("grid.cavity_points", cavity_points)] {
        if value < biphoton::spectrum::MIN_GRID_POINTS {
            return Err(ConfigError::Invariant {
                key: key.into(),
                line: t.raw(key).map(|e| e.line).unwrap_or(0),
                message: format!("at least {} points are required", biphoton::spectrum::MIN_GRID_POINTS),
            });
        }
    }
    if !(n_sigma >= biphoton::spectrum::MIN_GRID_SIGMAS) {
        return Err(ConfigError::Invariant {
            key: "grid.n_sigma".into(),
            line: t.raw("grid.n_sigma").map(|e| e.line).unwrap_or(0),
            message: format!("must be at least {}", biphoton::spectrum::MIN_GRID_SIGMAS),
        });
    }

    let path = match t.raw("output.path").map(|e| e.value.as_str()) {
        None | Some("-") => None,
        Some(p) => Some(PathBuf::from(p)),
    };
    let format = match t.raw("output.format") {
        None => OutputFormat::Csv,
        Some(e) => match e.value.as_str() {
            "csv" => OutputFormat::Csv,
            "json" => OutputFormat::Json,
            other => {
                return Err(ConfigError::BadValue {
                    line: e.line,
                    column: e.column,
                    key: "output.format".into(),
                    message: format!("`{other}` is not one of csv, json"),
                })
            }
        },
    };

    Ok(RunConfig {
        pump,
        dispersion,
        waveguide,
        grid: GridSpec { points, n_sigma },
        cavity_grid: GridSpec {
            points: cavity_points,
            n_sigma,
        },
        output: OutputSpec { path, format },
    })
}
