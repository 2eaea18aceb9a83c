//! Subcommand definitions and their implementations.

use std::path::{Path, PathBuf};

use biphoton::cavity::{averaged_interferogram, effective_visibility_fit, raw_interferogram};
use biphoton::fitting::{fit_hom_interferogram, initial_guess_with, FitOptions, FitParam, FitResult};
use biphoton::hom::{closed_form_interferogram, HomQuadrature};
use biphoton::phasematch::{envelope_width, spectral_separation_mu, tunability_curve};
use biphoton::spectrum::{build_joint_spectrum, extract_population_p, JsiGrid};
use biphoton::tomography::{build_density_matrix, Metrics};
use biphoton::{omega_to_wavelength, wavelength_to_omega};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{parse_config, OutputFormat, RunConfig};
use crate::error::CliError;
use crate::golden;
use crate::io::{delay_grid_ps, jsi_to_table_csv, read_interferogram, read_jsi_grid, to_json, Table};

#[derive(Debug, Parser)]
#[command(name = "biphoton", version, about = "Counterpropagating SPDC source: spectra, HOM interferograms, fits and tomography")]
pub struct Cli {
    /// Configuration file; the bundled device preset when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output file (`-` for stdout); overrides `[output] path`.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,

    /// Output format for tabular data; overrides `[output] format`.
    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatArg>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ParamArg {
    Visibility,
    DeltaTau,
    Mu,
    A,
    B,
}

impl From<ParamArg> for FitParam {
    fn from(p: ParamArg) -> Self {
        match p {
            ParamArg::Visibility => FitParam::Visibility,
            ParamArg::DeltaTau => FitParam::DeltaTau,
            ParamArg::Mu => FitParam::Mu,
            ParamArg::A => FitParam::A,
            ParamArg::B => FitParam::B,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DelayArgs {
    #[arg(long, default_value_t = -30.0, allow_negative_numbers = true)]
    pub tau_min_ps: f64,
    #[arg(long, default_value_t = 30.0, allow_negative_numbers = true)]
    pub tau_max_ps: f64,
    #[arg(long, default_value_t = 0.1)]
    pub step_ps: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Central wavelengths of both interactions vs. pump incidence angle.
    Tunability {
        #[arg(long, default_value_t = -2.0, allow_negative_numbers = true)]
        theta_min_deg: f64,
        #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
        theta_max_deg: f64,
        #[arg(long, default_value_t = 81)]
        points: usize,
    },
    /// Joint spectral intensity grid, its marginals, or the population balance.
    Jsi {
        /// Emit signal and idler marginals instead of the grid.
        #[arg(long)]
        marginals: bool,
        /// Read a measured JSI grid instead of simulating one.
        #[arg(long)]
        ingest: Option<PathBuf>,
        /// Emit the population balance p as JSON.
        #[arg(long)]
        population: bool,
        /// Signal wavelength separating the two frequency bins (nm); 2λ_p by default.
        #[arg(long)]
        split_nm: Option<f64>,
    },
    /// Hong-Ou-Mandel coincidence probability vs. delay.
    Hom {
        /// Use the analytic Gaussian result instead of quadrature.
        #[arg(long)]
        closed_form: bool,
        #[command(flatten)]
        delays: DelayArgs,
    },
    /// Interferogram including Fabry-Pérot facet reflections.
    HomFp {
        /// Facet reflectivity; `[waveguide] reflectivity_r` when omitted.
        #[arg(long)]
        reflectivity: Option<f64>,
        /// Average over one pump period (default).
        #[arg(long, conflicts_with = "raw")]
        averaged: bool,
        /// Unaveraged scan, resolving the fast modulation.
        #[arg(long)]
        raw: bool,
        /// Emit the fitted effective visibility as JSON instead of the scan.
        #[arg(long)]
        fit_visibility: bool,
        #[command(flatten)]
        delays: DelayArgs,
    },
    /// Fit the drift-corrected interferogram model to measured data.
    Fit {
        /// CSV with `tau_ps` and `counts` or `p_coincidence`, optional `sigma`.
        #[arg(long)]
        input: PathBuf,
        /// Counts per unit probability; estimated from the tails when omitted.
        #[arg(long)]
        counts_scale: Option<f64>,
        #[arg(long, default_value_t = biphoton::fitting::DEFAULT_MAX_ITERATIONS)]
        max_iterations: usize,
        /// Parameters held at their initial values.
        #[arg(long, value_enum, value_delimiter = ',')]
        fix: Vec<ParamArg>,
    },
    /// Restricted density matrix and its purity, fidelity and concurrence.
    Tomo {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        visibility: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        phi: f64,
        /// One-sigma uncertainty on p.
        #[arg(long)]
        dp: Option<f64>,
        /// One-sigma uncertainty on V.
        #[arg(long)]
        dv: Option<f64>,
    },
    /// Regenerate the reference artifacts and compare them with a golden directory.
    Reproduce {
        #[arg(long)]
        dir: PathBuf,
        /// Overwrite the golden files instead of comparing.
        #[arg(long)]
        bless: bool,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Tunability { .. } => "tunability",
            Command::Jsi { .. } => "jsi",
            Command::Hom { .. } => "hom",
            Command::HomFp { .. } => "hom-fp",
            Command::Fit { .. } => "fit",
            Command::Tomo { .. } => "tomo",
            Command::Reproduce { .. } => "reproduce",
        }
    }
}

/// Result of a subcommand: the main artifact, extra artifacts keyed by a
/// file-name suffix, and an error to report after the artifacts are written.
#[derive(Debug, Default)]
pub struct Outcome {
    pub primary: Vec<u8>,
    pub companions: Vec<(String, Vec<u8>)>,
    pub deferred_error: Option<CliError>,
}

impl Outcome {
    fn bytes(primary: Vec<u8>) -> Self {
        Self {
            primary,
            ..Self::default()
        }
    }
}

pub fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        None => RunConfig::paper_device(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::input(path.display().to_string(), e.to_string()))?;
            parse_config(&text)?
        }
    };
    if let Some(out) = &cli.output {
        cfg.output.path = (out.as_os_str() != "-").then(|| out.clone());
    }
    match cli.format {
        Some(FormatArg::Csv) => cfg.output.format = OutputFormat::Csv,
        Some(FormatArg::Json) => cfg.output.format = OutputFormat::Json,
        None => {}
    }
    Ok(cfg)
}

pub fn run_subcommand(command: &Command, cfg: &RunConfig) -> Result<Outcome, CliError> {
    let format = cfg.output.format;
    match command {
        Command::Tunability {
            theta_min_deg,
            theta_max_deg,
            points,
        } => Ok(Outcome::bytes(
            tunability_table(cfg, *theta_min_deg, *theta_max_deg, *points)?.render(format)?,
        )),
        Command::Jsi {
            marginals,
            ingest,
            population,
            split_nm,
        } => jsi(cfg, *marginals, ingest.as_deref(), *population, *split_nm),
        Command::Hom { closed_form, delays } => Ok(Outcome::bytes(hom_table(cfg, *closed_form, delays)?.render(format)?)),
        Command::HomFp {
            reflectivity,
            raw,
            fit_visibility,
            delays,
            ..
        } => hom_fp(cfg, *reflectivity, *raw, *fit_visibility, delays),
        Command::Fit {
            input,
            counts_scale,
            max_iterations,
            fix,
        } => {
            let opts = FitOptions {
                max_iterations: *max_iterations,
                counts_scale: *counts_scale,
                fixed: fix.iter().map(|p| FitParam::from(*p)).collect(),
                ..FitOptions::default()
            };
            fit(input, &opts)
        }
        Command::Tomo { p, visibility, phi, dp, dv } => {
            Ok(Outcome::bytes(to_json(&tomo_report(*p, *visibility, *phi, *dp, *dv)?)?))
        }
        Command::Reproduce { dir, bless } => {
            let summary = golden::reproduce(cfg, dir, *bless)?;
            let mut outcome = Outcome::bytes(to_json(&summary)?);
            if !summary.mismatched.is_empty() {
                outcome.deferred_error = Some(CliError::GoldenMismatch(summary.mismatched.join(", ")));
            }
            Ok(outcome)
        }
    }
}

pub fn tunability_table(cfg: &RunConfig, min_deg: f64, max_deg: f64, points: usize) -> Result<Table, CliError> {
    if points < 2 || !(max_deg > min_deg) {
        return Err(CliError::Usage(format!(
            "need at least 2 angles over a non-empty range, got {points} over [{min_deg}, {max_deg}]"
        )));
    }
    let degs: Vec<f64> = (0..points)
        .map(|k| min_deg + (max_deg - min_deg) * k as f64 / (points - 1) as f64)
        .collect();
    let thetas: Vec<f64> = degs.iter().map(|d| d.to_radians()).collect();
    let curve = tunability_curve(&cfg.pump, &cfg.dispersion, &thetas)?;
    let mut t = Table::new(&["theta_deg", "lambda_s_HV_nm", "lambda_i_HV_nm", "lambda_s_VH_nm", "lambda_i_VH_nm"]);
    let nm = |o: f64| omega_to_wavelength(o) * 1e9;
    for (deg, pt) in degs.iter().zip(&curve) {
        t.push(vec![
            *deg,
            nm(pt.omega_s_hv),
            nm(pt.omega_i_hv),
            nm(pt.omega_s_vh),
            nm(pt.omega_i_vh),
        ]);
    }
    Ok(t)
}

fn jsi(
    cfg: &RunConfig,
    marginals: bool,
    ingest: Option<&Path>,
    population: bool,
    split_nm: Option<f64>,
) -> Result<Outcome, CliError> {
    let grid: JsiGrid = match ingest {
        Some(path) => read_jsi_grid(path)?,
        None => build_joint_spectrum(&cfg.pump, &cfg.dispersion, &cfg.grid)?.jsi_grid(),
    };
    if population {
        let split = match split_nm {
            Some(nm) => wavelength_to_omega(nm * 1e-9),
            None => 0.5 * cfg.pump.omega_p(),
        };
        #[derive(Serialize)]
        struct Population {
            p: f64,
            split_nm: f64,
        }
        let p = extract_population_p(&grid, split)?;
        return Ok(Outcome::bytes(to_json(&Population {
            p,
            split_nm: omega_to_wavelength(split) * 1e9,
        })?));
    }
    if marginals {
        let (signal, idler) = marginal_tables(&grid);
        let format = cfg.output.format;
        return Ok(Outcome {
            primary: Vec::new(),
            companions: vec![
                ("signal".into(), signal.render(format)?),
                ("idler".into(), idler.render(format)?),
            ],
            deferred_error: None,
        });
    }
    Ok(Outcome::bytes(jsi_to_table_csv(&grid)?))
}

/// Marginals normalized to unit area over angular frequency, tabulated
/// against wavelength.
pub fn marginal_tables(grid: &JsiGrid) -> (Table, Table) {
    let m = grid.marginals();
    let total = grid.total();
    let table = |axis: &[f64], density: &[f64], cols: [&str; 2]| {
        let mut t = Table::new(&cols);
        for (o, d) in axis.iter().zip(density) {
            t.push(vec![omega_to_wavelength(*o) * 1e9, d / total]);
        }
        t
    };
    (
        table(&m.omega_s, &m.signal, ["lambda_s_nm", "signal_density"]),
        table(&m.omega_i, &m.idler, ["lambda_i_nm", "idler_density"]),
    )
}

fn probability_table(delays_ps: &[f64], values: &[f64]) -> Table {
    let mut t = Table::new(&["tau_ps", "p_coincidence"]);
    for (tau, p) in delays_ps.iter().zip(values) {
        t.push(vec![*tau, *p]);
    }
    t
}

pub fn hom_table(cfg: &RunConfig, closed_form: bool, delays: &DelayArgs) -> Result<Table, CliError> {
    let taus_ps = delay_grid_ps(delays.tau_min_ps, delays.tau_max_ps, delays.step_ps)?;
    let taus: Vec<f64> = taus_ps.iter().map(|t| t * 1e-12).collect();
    let values = if closed_form {
        let mu = spectral_separation_mu(&cfg.pump, &cfg.dispersion);
        let dt = envelope_width(&cfg.pump, &cfg.dispersion);
        closed_form_interferogram(&taus, mu, dt)?
    } else {
        let js = build_joint_spectrum(&cfg.pump, &cfg.dispersion, &cfg.grid)?;
        HomQuadrature::new(&js).interferogram(&taus)?
    };
    Ok(probability_table(&taus_ps, &values))
}

#[derive(Debug, Serialize)]
struct VisibilityReport {
    reflectivity: f64,
    visibility: f64,
    std_error: Option<f64>,
    fit: FitResult,
}

pub fn hom_fp_table(cfg: &RunConfig, reflectivity: Option<f64>, raw: bool, delays: &DelayArgs) -> Result<Table, CliError> {
    let wg = match reflectivity {
        Some(r) => cfg.waveguide.with_reflectivity(r)?,
        None => cfg.waveguide,
    };
    if wg.reflectivity_r == 0.0 {
        return hom_table(cfg, false, delays);
    }
    let taus_ps = delay_grid_ps(delays.tau_min_ps, delays.tau_max_ps, delays.step_ps)?;
    let taus: Vec<f64> = taus_ps.iter().map(|t| t * 1e-12).collect();
    let js = build_joint_spectrum(&cfg.pump, &cfg.dispersion, &cfg.cavity_grid)?;
    let scan = if raw {
        raw_interferogram(&js, &wg, &taus)?
    } else {
        averaged_interferogram(&js, &wg, &cfg.pump, &taus)?
    };
    Ok(probability_table(&taus_ps, &scan.values))
}

fn hom_fp(
    cfg: &RunConfig,
    reflectivity: Option<f64>,
    raw: bool,
    fit_visibility: bool,
    delays: &DelayArgs,
) -> Result<Outcome, CliError> {
    let table = hom_fp_table(cfg, reflectivity, raw, delays)?;
    if !fit_visibility {
        return Ok(Outcome::bytes(table.render(cfg.output.format)?));
    }
    let taus: Vec<f64> = table.rows.iter().map(|r| r[0] * 1e-12).collect();
    let values: Vec<f64> = table.rows.iter().map(|r| r[1]).collect();
    let data = biphoton::hom::Interferogram::probability(taus, values)?;
    let fit = effective_visibility_fit(&data)?;
    let report = VisibilityReport {
        reflectivity: reflectivity.unwrap_or(cfg.waveguide.reflectivity_r),
        visibility: fit.params.visibility,
        std_error: fit.std_error(FitParam::Visibility),
        fit,
    };
    Ok(Outcome::bytes(to_json(&report)?))
}

fn fit(input: &Path, opts: &FitOptions) -> Result<Outcome, CliError> {
    let data = read_interferogram(input)?;
    let init = initial_guess_with(&data, opts)?;
    match fit_hom_interferogram(&data, &init, opts) {
        Ok(result) => Ok(Outcome::bytes(to_json(&result)?)),
        Err(biphoton::Error::NonConvergence { best }) => {
            let primary = to_json(best.as_ref())?;
            Ok(Outcome {
                primary,
                companions: Vec::new(),
                deferred_error: Some(CliError::Core(biphoton::Error::NonConvergence { best })),
            })
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct TomoReport {
    pub p: f64,
    #[serde(rename = "V")]
    pub visibility: f64,
    pub phi: f64,
    pub purity: f64,
    pub fidelity: f64,
    pub concurrence: f64,
    pub matrix_real: [[f64; 4]; 4],
    pub matrix_imag: [[f64; 4]; 4],
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub uncertainty: Option<Metrics>,
}

pub fn tomo_report(p: f64, visibility: f64, phi: f64, dp: Option<f64>, dv: Option<f64>) -> Result<TomoReport, CliError> {
    for (name, v) in [("dp", dp), ("dv", dv)] {
        if let Some(v) = v {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CliError::Usage(format!("--{name} must be a non-negative number, got {v}")));
            }
        }
    }
    let rho = build_density_matrix(p, visibility, phi)?;
    let m = rho.metrics();
    let mat = rho.matrix();
    let matrix_real = std::array::from_fn(|i| std::array::from_fn(|j| mat[(i, j)].re));
    let matrix_imag = std::array::from_fn(|i| std::array::from_fn(|j| mat[(i, j)].im));
    let uncertainty = (dp.is_some() || dv.is_some())
        .then(|| rho.propagate_uncertainty(dp.unwrap_or(0.0), dv.unwrap_or(0.0)));
    Ok(TomoReport {
        p,
        visibility,
        phi,
        purity: m.purity,
        fidelity: m.fidelity,
        concurrence: m.concurrence,
        matrix_real,
        matrix_imag,
        uncertainty,
    })
}
