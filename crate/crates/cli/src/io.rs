//! Tabular output and CSV ingestion.

use std::fs;
use std::io::Write;
use std::path::Path;

use biphoton::hom::{Interferogram, ValueKind};
use biphoton::spectrum::JsiGrid;
use biphoton::{omega_to_wavelength, wavelength_to_omega};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::{OutputFormat, OutputSpec};
use crate::error::CliError;

/// Corner cell of a JSI grid CSV.
pub const JSI_CORNER: &str = "lambda_s_nm\\lambda_i_nm";

/// Named numeric columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        csv_write(&mut w, &self.columns)?;
        for row in &self.rows {
            csv_write(&mut w, row.iter().map(|v| format_number(*v)))?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.into_error()))
    }

    pub fn render(&self, format: OutputFormat) -> Result<Vec<u8>, CliError> {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => to_json(self),
        }
    }
}

fn csv_write<I, T>(w: &mut csv::Writer<Vec<u8>>, record: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    w.write_record(record).map_err(|e| CliError::Io(std::io::Error::other(e)))
}

/// Shortest representation that parses back to the same `f64`; scientific
/// notation outside `[1e-4, 1e15)`.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if (1e-4..1e15).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Delay grid in ps, snapped to 1e-9 ps so that printed values are clean.
pub fn delay_grid_ps(min: f64, max: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(min.is_finite() && max.is_finite() && step.is_finite()) || !(step > 0.0) || max < min {
        return Err(CliError::Usage(format!(
            "delay range [{min}, {max}] ps with step {step} ps is empty or invalid"
        )));
    }
    let n = ((max - min) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|k| snap(min + k as f64 * step)).collect())
}

fn snap(v: f64) -> f64 {
    let s = (v * 1e9).round() / 1e9;
    if s == 0.0 {
        0.0
    } else {
        s
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.into()))?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_output(spec: &OutputSpec, bytes: &[u8]) -> Result<(), CliError> {
    match &spec.path {
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
        }
        Some(path) => fs::write(path, bytes)
            .map_err(|e| CliError::input(path.display().to_string(), e.to_string()))?,
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::input(path.display().to_string(), e.to_string()))
}

fn parse_cell(path: &Path, line: u64, column: usize, cell: &str) -> Result<f64, CliError> {
    cell.trim().parse::<f64>().map_err(|_| {
        CliError::input(
            path.display().to_string(),
            format!("line {line}, field {}: `{cell}` is not a number", column + 1),
        )
    })
}

/// Read an interferogram CSV with a `tau_ps` column and either `counts` or
/// `p_coincidence`, plus an optional `sigma` column in the same unit as the
/// values.
pub fn read_interferogram(path: &Path) -> Result<Interferogram, CliError> {
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let bad = |m: String| CliError::input(path.display().to_string(), m);
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let tau_col = find("tau_ps").ok_or_else(|| bad("missing column `tau_ps`".into()))?;
    let (value_col, kind) = match (find("counts"), find("p_coincidence")) {
        (Some(c), None) => (c, ValueKind::Counts),
        (None, Some(c)) => (c, ValueKind::Probability),
        (Some(_), Some(_)) => return Err(bad("both `counts` and `p_coincidence` columns present".into())),
        (None, None) => return Err(bad("missing column `counts` or `p_coincidence`".into())),
    };
    let sigma_col = find("sigma");
    let (mut delays, mut values, mut sigmas) = (Vec::new(), Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let get = |c: usize| -> Result<f64, CliError> {
            let cell = record.get(c).ok_or_else(|| bad(format!("line {line}: missing field {}", c + 1)))?;
            parse_cell(path, line, c, cell)
        };
        delays.push(get(tau_col)? * 1e-12);
        values.push(get(value_col)?);
        if let Some(c) = sigma_col {
            sigmas.push(get(c)?);
        }
    }
    let errors = sigma_col.map(|_| sigmas);
    Interferogram::new(delays, values, errors, kind).map_err(|e| bad(e.to_string()))
}

/// JSI grid CSV: header of idler wavelengths (nm), first column signal
/// wavelengths (nm), body the intensity. Axes become angular frequencies.
pub fn jsi_to_table_csv(grid: &JsiGrid) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = std::iter::once(JSI_CORNER.to_string())
        .chain(grid.idler_axis.iter().map(|o| format_number(omega_to_wavelength(*o) * 1e9)));
    csv_write(&mut w, header)?;
    for (i, row) in grid.values.row_iter().enumerate() {
        let record = std::iter::once(format_number(omega_to_wavelength(grid.signal_axis[i]) * 1e9))
            .chain(row.iter().map(|v| format_number(*v)));
        csv_write(&mut w, record)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.into_error()))
}

pub fn read_jsi_grid(path: &Path) -> Result<JsiGrid, CliError> {
    let text = read_text(path)?;
    let bad = |m: String| CliError::input(path.display().to_string(), m);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = records.next().ok_or_else(|| bad("empty file".into()))?.map_err(|e| bad(e.to_string()))?;
    let idler_nm: Vec<f64> = header
        .iter()
        .enumerate()
        .skip(1)
        .map(|(c, cell)| parse_cell(path, 1, c, cell))
        .collect::<Result<_, _>>()?;
    let mut signal_nm = Vec::new();
    let mut body = Vec::new();
    for record in records {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != idler_nm.len() + 1 {
            return Err(bad(format!(
                "line {line}: {} fields, expected {}",
                record.len(),
                idler_nm.len() + 1
            )));
        }
        for (c, cell) in record.iter().enumerate() {
            let v = parse_cell(path, line, c, cell)?;
            if c == 0 {
                signal_nm.push(v);
            } else {
                body.push(v);
            }
        }
    }
    let to_omega = |nm: &f64| wavelength_to_omega(nm * 1e-9);
    let values = DMatrix::from_row_slice(signal_nm.len(), idler_nm.len(), &body);
    JsiGrid::new(
        signal_nm.iter().map(to_omega).collect(),
        idler_nm.iter().map(to_omega).collect(),
        values,
    )
    .map_err(|e| bad(e.to_string()))
}
