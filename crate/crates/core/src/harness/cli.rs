//! Command-line driver.
//!
//! ```text
//! memwave simulate      [--config FILE] [--out FILE.csv]
//! memwave sweep         [--config FILE] [--experiment NAME] [--out DIR] [--workers N] [--seed S]
//! memwave check-kernel  [KERNEL] [--config FILE]
//! memwave bootstrap     p=P rho=RHO
//! memwave fit           FILE.csv [--x COLUMN] [--y COLUMN]
//! memwave report        DIR
//! ```
//!
//! Exit status: 0 when the run passes (or the experiment does not apply),
//! 1 when a check fails, 2 on configuration, input or file errors.
//!
//! # Config grammar
//!
//! One `section.key = value` per line, `#` starts a comment, blank lines are
//! ignored. Run `memwave simulate --print-config` for every key with its
//! default and description. The kernel block:
//!
//! ```text
//! kernel.form = prony              # or power_law_exp
//! kernel.terms = 0.25:1, 0.5:2     # amplitude:rate pairs, mu(s) = sum c e^{-d s}
//! kernel.C = 0.3                   # power_law_exp: mu(s) = C s^{-alpha} e^{-delta s}
//! kernel.alpha = 0.5
//! kernel.delta = 1
//! ```
//!
//! Forcing profiles are lists of modal coefficients (`force.g0.profile = 1, 0, 0.5`)
//! and waveforms are sums of `c*atom` with atoms `sin(w*t+phi)`, `cos(w*t+phi)`,
//! `sin(t)` or a bare number, for example `1 + 0.5*cos(2*t+0.3)`.
//!
//! # Kernel argument of `check-kernel`
//!
//! `prony:C:D` for one term, `prony:C1:D1,C2:D2` for several, and
//! `power:C:ALPHA:DELTA` for the power law with exponential cutoff.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use super::{persist, replay, run_experiment, simulate, store::stored_report, Config, ExperimentSpec, Verdict};
use crate::analysis::{bootstrap, fit_rate};
use crate::error::{Error, Result};
use crate::kernels::MemoryKernel;

#[derive(Debug, Parser)]
#[command(name = "memwave", version, about = "Wave equation with fading memory: simulation and checks")]
struct Cli {
    /// Configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (simulate) or directory (sweep).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Ensemble seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one trajectory and write its diagnostics as CSV.
    Simulate {
        /// Print the full configuration instead of running.
        #[arg(long)]
        print_config: bool,
    },
    /// Run a named experiment.
    Sweep {
        /// absorbing | attractor_size | aux_linear | averaging
        #[arg(long)]
        experiment: Option<String>,
    },
    /// Validate a memory kernel.
    CheckKernel { kernel: Option<String> },
    /// Exponent bootstrap for `p=P rho=RHO`.
    Bootstrap { args: Vec<String> },
    /// Log-log rate fit on two CSV columns.
    Fit {
        file: PathBuf,
        #[arg(long)]
        x: Option<String>,
        #[arg(long)]
        y: Option<String>,
    },
    /// Recompute a stored run's verdict from its records.
    Report { dir: PathBuf },
}

/// Runs the command line `args` (including the program name), writing
/// human-readable output to `out`, and returns the exit status.
pub fn cli<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let parsed = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(out, "{e}");
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(parsed, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(out, "error: {e}");
            2
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<output>", e)
}

fn load_config(path: &Option<PathBuf>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn verdict_code(v: Verdict) -> i32 {
    match v {
        Verdict::Pass | Verdict::NotApplicable => 0,
        Verdict::Fail => 1,
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::Simulate { print_config } => {
            let config = load_config(&cli.config)?;
            if print_config {
                write!(out, "{}", config.emit()).map_err(io_err)?;
                return Ok(0);
            }
            let rec = simulate(&config)?;
            let path = cli.out.unwrap_or_else(|| PathBuf::from("trajectory.csv"));
            rec.write_csv(&path)?;
            let ok = rec.check().is_ok();
            writeln!(out, "wrote {} samples to {}", rec.samples.len(), path.display()).map_err(io_err)?;
            Ok(if ok { 0 } else { 1 })
        }
        Command::Sweep { experiment } => {
            let mut config = load_config(&cli.config)?;
            if let Some(name) = experiment {
                config.set("experiment.name", name)?;
            }
            let spec = ExperimentSpec::from_config(config, cli.seed)?;
            let outcome = run_experiment(&spec, cli.workers)?;
            if let Some(dir) = &cli.out {
                persist(dir, &spec, &outcome)?;
            }
            writeln!(out, "{}", serde_json::to_string_pretty(&outcome.report)?).map_err(io_err)?;
            Ok(verdict_code(outcome.report.verdict))
        }
        Command::CheckKernel { kernel } => {
            let kernel = match kernel {
                Some(text) => parse_kernel(&text)?,
                None => load_config(&cli.config)?.kernel()?,
            };
            let report = kernel.validate();
            if report.ok {
                writeln!(out, "kernel admissible (kappa0 = {})", kernel.total_mass()?).map_err(io_err)?;
                Ok(0)
            } else {
                for v in &report.violations {
                    writeln!(out, "{v}").map_err(io_err)?;
                }
                Ok(1)
            }
        }
        Command::Bootstrap { args } => {
            let mut values = BTreeMap::new();
            for a in &args {
                let (k, v) = a
                    .split_once('=')
                    .ok_or_else(|| Error::config("bootstrap", format!("expected key=value, got `{a}`")))?;
                let v: f64 = v.parse().map_err(|_| Error::config("bootstrap", format!("not a number: `{v}`")))?;
                values.insert(k.to_string(), v);
            }
            let get = |k: &str| values.get(k).copied().ok_or_else(|| Error::config("bootstrap", format!("missing `{k}=`")));
            let report = bootstrap(get("p")?, get("rho")?)?;
            writeln!(out, "rho_star = {}", report.rho_star).map_err(io_err)?;
            if let Some(k) = report.kappa {
                writeln!(out, "kappa = {k}").map_err(io_err)?;
            }
            match report.n_stop {
                Some(n) => writeln!(out, "n_stop = {n}"),
                None => writeln!(out, "n_stop = none"),
            }
            .map_err(io_err)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&report)?).map_err(io_err)?;
            Ok(0)
        }
        Command::Fit { file, x, y } => {
            let rec = read_columns(&file)?;
            let pick = |name: &Option<String>, default: usize| -> Result<Vec<f64>> {
                match name {
                    Some(n) => rec
                        .iter()
                        .find(|(h, _)| h == n)
                        .map(|(_, c)| c.clone())
                        .ok_or_else(|| Error::config(file.display().to_string(), format!("no column `{n}`"))),
                    None => rec
                        .get(default)
                        .map(|(_, c)| c.clone())
                        .ok_or_else(|| Error::config(file.display().to_string(), "need two columns")),
                }
            };
            let (xs, ys) = (pick(&x, 0)?, pick(&y, 1)?);
            let pairs: Vec<(f64, f64)> = xs.into_iter().zip(ys).collect();
            let fit = fit_rate(&pairs)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&fit)?).map_err(io_err)?;
            Ok(0)
        }
        Command::Report { dir } => {
            let (_, report) = replay(&dir)?;
            if let Ok(stored) = stored_report(&dir) {
                if stored.verdict != report.verdict {
                    writeln!(out, "warning: stored verdict {:?} differs from replayed", stored.verdict).map_err(io_err)?;
                }
            }
            writeln!(out, "{}", serde_json::to_string_pretty(&report)?).map_err(io_err)?;
            Ok(verdict_code(report.verdict))
        }
    }
}

/// Kernel from the `check-kernel` argument grammar.
pub fn parse_kernel(text: &str) -> Result<MemoryKernel> {
    let bad = |m: &str| Error::config("kernel argument", format!("{m} in `{text}`"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(&format!("not a number `{s}`")));
    let (form, rest) = text.split_once(':').ok_or_else(|| bad("missing form"))?;
    match form {
        "prony" => {
            let mut terms = Vec::new();
            for item in rest.split(',') {
                let (c, d) = item.split_once(':').ok_or_else(|| bad("expected C:D"))?;
                terms.push((num(c)?, num(d)?));
            }
            Ok(MemoryKernel::prony(&terms))
        }
        "power" => {
            let parts: Vec<&str> = rest.split(':').collect();
            if parts.len() != 3 {
                return Err(bad("expected power:C:ALPHA:DELTA"));
            }
            Ok(MemoryKernel::power_law_exp(num(parts[0])?, num(parts[1])?, num(parts[2])?))
        }
        _ => Err(bad("unknown form")),
    }
}

/// Header and numeric columns of a CSV file.
fn read_columns(path: &std::path::Path) -> Result<Vec<(String, Vec<f64>)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers: Vec<String> = reader.headers().map_err(|e| csv_error(path, e))?.iter().map(String::from).collect();
    let mut cols: Vec<(String, Vec<f64>)> = headers.into_iter().map(|h| (h, Vec::new())).collect();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        for (j, field) in row.iter().enumerate().take(cols.len()) {
            let v = field
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::config(format!("{}:{}", path.display(), i + 2), format!("not a number `{field}`")))?;
            cols[j].1.push(v);
        }
    }
    Ok(cols)
}

fn csv_error(path: &std::path::Path, e: csv::Error) -> Error {
    let kind = match e.kind() {
        csv::ErrorKind::Io(err) => err.kind(),
        _ => std::io::ErrorKind::InvalidData,
    };
    Error::io(path, std::io::Error::new(kind, e.to_string()))
}
