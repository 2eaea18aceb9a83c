//! Command-line front end: configuration files, CSV/JSON artifacts and the
//! golden-file regression set.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod golden;
pub mod io;

use std::path::{Path, PathBuf};

pub use commands::{run_subcommand, Cli, Command, Outcome};
pub use config::{parse_config, ConfigError, RunConfig};
pub use error::{exit, CliError, ErrorReport};

use config::OutputSpec;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "BIPHOTON_THREADS";

pub fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV}={value} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))
}

/// `out.csv` + `signal` → `out.signal.csv`.
fn companion_path(base: &Path, suffix: &str) -> PathBuf {
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match base.extension() {
        Some(ext) => format!("{stem}.{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{suffix}"),
    };
    base.with_file_name(name)
}

fn write_outcome(spec: &OutputSpec, outcome: &Outcome) -> Result<(), CliError> {
    if !outcome.primary.is_empty() {
        io::write_output(spec, &outcome.primary)?;
    }
    for (k, (suffix, bytes)) in outcome.companions.iter().enumerate() {
        match &spec.path {
            Some(base) => io::write_output(
                &OutputSpec {
                    path: Some(companion_path(base, suffix)),
                    format: spec.format,
                },
                bytes,
            )?,
            None => {
                if k > 0 {
                    io::write_output(spec, b"\n")?;
                }
                io::write_output(spec, bytes)?;
            }
        }
    }
    Ok(())
}

/// Run a parsed command line and return the process exit status. Errors are
/// reported on stderr as one JSON object.
pub fn run(cli: &Cli) -> i32 {
    let name = cli.command.name();
    let result = configure_threads().and_then(|_| {
        let cfg = commands::load_config(cli)?;
        let outcome = run_subcommand(&cli.command, &cfg)?;
        write_outcome(&cfg.output, &outcome)?;
        outcome.deferred_error.map_or(Ok(()), Err)
    });
    match result {
        Ok(()) => exit::SUCCESS,
        Err(e) => {
            let report = e.report(name);
            match serde_json::to_string(&report) {
                Ok(line) => eprintln!("{line}"),
                Err(_) => eprintln!("{e}"),
            }
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn companion_names() {
        assert_eq!(companion_path(Path::new("/tmp/m.csv"), "idler"), PathBuf::from("/tmp/m.idler.csv"));
        assert_eq!(companion_path(Path::new("m"), "signal"), PathBuf::from("m.signal"));
    }
}
