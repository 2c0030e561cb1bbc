//! Command-line sweep driver.
//!
//! Exit codes: 0 on success, 1 for invalid configuration or I/O problems,
//! 2 when more than 1% of the sweep rows failed numerically.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use ramsey::sweep::{
    compare_methods, find_peaks, format_compare, format_peak_report, run_sweep, to_csv, Method,
    SweepAxis, SweepConfig, MAX_REFINE_DEPTH,
};
use ramsey::PhysicalParams;

/// Excited-state transmission of a two-level atom crossing two separated
/// laser barriers: exact two-channel solve plus regime approximations.
#[derive(Parser, Debug, Default)]
#[command(name = "ramsey", version)]
struct Cli {
    /// Incident wavenumber k (dimensionless units, hbar = m = 1).
    #[arg(long)]
    k: Option<f64>,

    /// Rabi frequency inside the laser barriers.
    #[arg(long)]
    omega: Option<f64>,

    /// Fixed detuning, used when sweeping k.
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,

    /// Barrier width l.
    #[arg(long)]
    l: Option<f64>,

    /// Gap length L between the barriers.
    #[arg(long)]
    gap: Option<f64>,

    /// Sweep axis: delta or k.
    #[arg(long)]
    axis: Option<String>,

    /// Lower end of the sweep range.
    #[arg(long, allow_hyphen_values = true)]
    min: Option<f64>,

    /// Upper end of the sweep range.
    #[arg(long, allow_hyphen_values = true)]
    max: Option<f64>,

    /// Number of grid points.
    #[arg(long)]
    points: Option<usize>,

    /// Comma-separated methods: exact,scl,direct,ultracold,series.
    #[arg(long)]
    methods: Option<String>,

    /// Insert midpoints where the probability jumps by more than a tenth of
    /// the table maximum (resolves the narrow peaks near the cutoff).
    #[arg(long)]
    adaptive: bool,

    /// Maximum adaptive refinement depth (capped at 12).
    #[arg(long, value_name = "DEPTH")]
    adaptive_depth: Option<u32>,

    /// Re-derive every row with the independent slicing integrator and emit
    /// the disagreement in the oracle_residual column.
    #[arg(long)]
    verify: bool,

    /// Print a peak report for METHOD (default exact) to stdout.
    #[arg(long, value_name = "METHOD", num_args = 0..=1, default_missing_value = "exact")]
    peaks: Option<String>,

    /// Print RMS / max / correlation statistics for two methods, e.g.
    /// `--compare exact,direct`.
    #[arg(long, value_name = "A,B")]
    compare: Option<String>,

    /// Flat key=value configuration file ('#' starts a comment); explicit
    /// command-line flags take precedence over file keys.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Write the CSV table to FILE instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(mut cli: Cli) -> Result<ExitCode, String> {
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        merge_file_settings(&mut cli, &text)?;
    }

    // Defaults reproduce the fast-atom interference demo.
    let params = PhysicalParams::new(
        cli.k.unwrap_or(1.0),
        cli.omega.unwrap_or(PI / 20.0),
        cli.delta.unwrap_or(0.0),
        cli.l.unwrap_or(1.0),
        cli.gap.unwrap_or(25.0),
    )
    .map_err(|e| e.to_string())?;

    let axis = SweepAxis::parse(cli.axis.as_deref().unwrap_or("delta")).map_err(|e| e.to_string())?;
    let methods = cli
        .methods
        .as_deref()
        .unwrap_or("exact")
        .split(',')
        .map(|s| Method::parse(s.trim()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;

    let config = SweepConfig {
        params,
        axis,
        min: cli.min.unwrap_or(-0.45),
        max: cli.max.unwrap_or(3.0),
        n_points: cli.points.unwrap_or(500),
        methods,
        adaptive: cli.adaptive,
        refine_depth: cli.adaptive_depth.unwrap_or(MAX_REFINE_DEPTH).min(MAX_REFINE_DEPTH),
        verify: cli.verify,
    };

    let result = run_sweep(&config).map_err(|e| e.to_string())?;

    let csv = to_csv(&result);
    match &cli.out {
        Some(path) => std::fs::write(path, csv)
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?,
        None => print!("{csv}"),
    }

    if let Some(method) = &cli.peaks {
        let method = Method::parse(method).map_err(|e| e.to_string())?;
        let report = find_peaks(&result, method).map_err(|e| e.to_string())?;
        print!("{}", format_peak_report(&report));
    }

    if let Some(pair) = &cli.compare {
        let (a, b) = pair
            .split_once(',')
            .ok_or_else(|| format!("--compare wants two methods, got '{pair}'"))?;
        let a = Method::parse(a.trim()).map_err(|e| e.to_string())?;
        let b = Method::parse(b.trim()).map_err(|e| e.to_string())?;
        let stats = compare_methods(&result, a, b).map_err(|e| e.to_string())?;
        print!("{}", format_compare(&stats, a, b));
    }

    if result.failure_rate() > 0.01 {
        eprintln!(
            "warning: {} of {} rows failed numerically",
            result.failures(),
            result.rows.len()
        );
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

/// Apply `key=value` file settings underneath whatever the command line
/// already set.
fn merge_file_settings(cli: &mut Cli, text: &str) -> Result<(), String> {
    fn set<T: std::str::FromStr>(slot: &mut Option<T>, key: &str, value: &str) -> Result<(), String>
    where
        T::Err: std::fmt::Display,
    {
        match value.parse::<T>() {
            Ok(v) => {
                if slot.is_none() {
                    *slot = Some(v);
                }
                Ok(())
            }
            Err(e) => Err(format!("config key '{key}': bad value '{value}': {e}")),
        }
    }

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key=value", lineno + 1))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "k" => set(&mut cli.k, key, value)?,
            "omega" => set(&mut cli.omega, key, value)?,
            "delta" => set(&mut cli.delta, key, value)?,
            "l" => set(&mut cli.l, key, value)?,
            "gap" => set(&mut cli.gap, key, value)?,
            "axis" => set(&mut cli.axis, key, value)?,
            "min" => set(&mut cli.min, key, value)?,
            "max" => set(&mut cli.max, key, value)?,
            "points" => set(&mut cli.points, key, value)?,
            "methods" => set(&mut cli.methods, key, value)?,
            "adaptive" => cli.adaptive = cli.adaptive || value == "true",
            "adaptive_depth" => set(&mut cli.adaptive_depth, key, value)?,
            "verify" => cli.verify = cli.verify || value == "true",
            "peaks" => set(&mut cli.peaks, key, value)?,
            "compare" => set(&mut cli.compare, key, value)?,
            "out" => {
                if cli.out.is_none() {
                    cli.out = Some(PathBuf::from(value));
                }
            }
            other => return Err(format!("config line {}: unknown key '{other}'", lineno + 1)),
        }
    }
    Ok(())
}
