//! Batch entry points behind the `kinon` binary.
//!
//! Exit codes: 0 on success, 1 for invalid input or any other failure, 2
//! when a run breaches the conservation audit.

mod sweep;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use kinon_core::analysis::{classify, detect_stasis, Regime};
use kinon_core::io::{
    parse_config, read_series, render_frame, run_batch, ConfigError, RunConfig, RunError, RunOptions, StateSnapshot,
};
use kinon_core::network::Execution;
use kinon_core::KinonError;
use serde::Serialize;
use thiserror::Error;

pub use sweep::{run_sweep, Axis, SweepError, SweepPlan, SweepReport, MAX_SWEEP_RUNS};

#[derive(Debug, Parser)]
#[command(name = "kinon", version, about = "Kinon network simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one config and write its artifact tree.
    Run(RunArgs),
    /// Run the cartesian product of parameter axes over a base config.
    Sweep(SweepArgs),
    /// Re-render a stored snapshot as a greyscale frame.
    Render(RenderArgs),
    /// Classify a stored index series.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run config (JSON).
    pub config: PathBuf,
    /// Output directory.
    #[arg(short, long)]
    pub out: PathBuf,
    /// Stop once a stasis is confirmed.
    #[arg(long)]
    pub until_stasis: bool,
    /// Frame stride; 0 keeps only the initial and final frames.
    #[arg(long, value_name = "N")]
    pub frames: Option<u64>,
    /// Contour stride; 0 disables contour snapshots.
    #[arg(long, value_name = "N")]
    pub contours: Option<u64>,
    /// Collide nodes on the calling thread only.
    #[arg(long)]
    pub serial: bool,
    /// Conservation audit tolerance (relative drift).
    #[arg(long, value_name = "X")]
    pub drift_limit: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Sweep plan (JSON): `{"base": <config>, "axes": [{"path", "values"}]}`.
    pub plan: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    /// Runs executed concurrently.
    #[arg(long, default_value_t = 1, value_name = "K")]
    pub parallel: usize,
    #[arg(long)]
    pub until_stasis: bool,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Snapshot written by `run` (`final.snap`).
    pub snapshot: PathBuf,
    /// Output PGM path; defaults to the snapshot path with a `.pgm` extension.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Take the render options from this run config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Intensity scale; overrides the config.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Render storages only.
    #[arg(long)]
    pub storage_only: bool,
    /// Also write a PNG next to the PGM.
    #[arg(long)]
    pub png: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Series CSV written by `run`.
    pub series: PathBuf,
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 20)]
    pub window: usize,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Audit(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) | CliError::Failed(_) => 1,
            CliError::Audit(_) => 2,
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Audit { .. } => CliError::Audit(e.to_string()),
            RunError::Kinon(KinonError::Validation(_)) => CliError::Invalid(e.to_string()),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        let lines: Vec<String> = e.field_errors().iter().map(ToString::to_string).collect();
        CliError::Invalid(format!("invalid config:\n  {}", lines.join("\n  ")))
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    kinon_core::io::write_bytes(path, bytes).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    Ok(parse_config(&read_text(path)?)?)
}

fn to_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializing plain data")
}

/// Runs the parsed command; the returned text goes to stdout.
pub fn execute(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Render(args) => cmd_render(&args),
        Command::Analyze(args) => cmd_analyze(&args),
    }
}

fn cmd_run(args: &RunArgs) -> Result<String, CliError> {
    let config = load_config(&args.config)?;
    let options = RunOptions {
        execution: if args.serial { Execution::Sequential } else { Execution::Parallel },
        until_stasis: args.until_stasis,
        frame_stride: args.frames,
        contour_stride: args.contours,
        drift_limit: args.drift_limit,
    };
    let outcome = run_batch(&config, &options, &args.out)?;
    Ok(to_pretty(&outcome.summary))
}

fn cmd_sweep(args: &SweepArgs) -> Result<String, CliError> {
    let plan = SweepPlan::parse(&read_text(&args.plan)?).map_err(|e| CliError::Invalid(e.to_string()))?;
    if args.parallel == 0 {
        return Err(CliError::Invalid("--parallel must be at least 1".into()));
    }
    let report = run_sweep(&plan, &args.out, args.parallel, args.until_stasis)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    let text = format!(
        "{} runs, {} failed, index at {}",
        report.runs,
        report.failed,
        args.out.join("index.csv").display()
    );
    if report.audit_failures > 0 {
        Err(CliError::Audit(format!("{text}; {} conservation audit failures", report.audit_failures)))
    } else if report.failed > 0 {
        Err(CliError::Failed(text))
    } else {
        Ok(text)
    }
}

fn cmd_render(args: &RenderArgs) -> Result<String, CliError> {
    let snapshot = StateSnapshot::decode(&read_bytes(&args.snapshot)?)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", args.snapshot.display())))?;
    let render = match &args.config {
        Some(path) => load_config(path)?.render,
        None => Default::default(),
    };
    let scale = args.scale.unwrap_or(render.intensity_scale);
    if !(scale.is_finite() && scale > 0.0) {
        return Err(CliError::Invalid(format!("scale: must be positive and finite, got {scale}")));
    }
    let storage_only = args.storage_only || render.storage_only;
    let sim = snapshot
        .into_simulation()
        .map_err(|e| CliError::Invalid(format!("{}: {e}", args.snapshot.display())))?;
    let field = if storage_only { sim.storage_field() } else { sim.field() };
    let image = render_frame(&field, scale);
    let out = args.out.clone().unwrap_or_else(|| args.snapshot.with_extension("pgm"));
    write(&out, &image.to_pgm())?;
    let mut written = vec![out.display().to_string()];
    if args.png || (args.config.is_some() && render.png) {
        let png_path = out.with_extension("png");
        let bytes = image.to_png().map_err(|e| CliError::Failed(e.to_string()))?;
        write(&png_path, &bytes)?;
        written.push(png_path.display().to_string());
    }
    Ok(written.join("\n"))
}

#[derive(Debug, Serialize)]
pub struct SeriesReport {
    pub records: usize,
    pub first_cycle: Option<u64>,
    pub last_cycle: Option<u64>,
    pub regime: String,
    pub stasis_cycle: Option<u64>,
    /// Onset of a coherent equilibrium, when that is the regime.
    pub coherent_onset: Option<u64>,
    pub final_exchange_rate: Option<f64>,
    pub final_turnover_rate: Option<f64>,
    pub max_drift: f64,
}

pub fn analyze_series(bytes: &[u8], tolerance: f64, window: usize) -> Result<SeriesReport, CliError> {
    let records = read_series(bytes).map_err(|e| CliError::Invalid(format!("malformed series: {e}")))?;
    let regime = classify(&records, tolerance, window);
    let last = records.last();
    Ok(SeriesReport {
        records: records.len(),
        first_cycle: records.first().map(|r| r.cycle),
        last_cycle: last.map(|r| r.cycle),
        regime: match regime {
            Regime::Stasis { .. } => "stasis",
            Regime::CoherentEquilibrium { .. } => "coherent-equilibrium",
            Regime::Active => "active",
        }
        .to_string(),
        stasis_cycle: detect_stasis(&records, tolerance, window),
        coherent_onset: match regime {
            Regime::CoherentEquilibrium { onset, .. } => Some(onset),
            _ => None,
        },
        final_exchange_rate: last.map(|r| r.exchange_rate),
        final_turnover_rate: last.map(|r| r.turnover_rate),
        max_drift: records.iter().map(|r| r.drift).fold(0.0, f64::max),
    })
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<String, CliError> {
    if !(args.tolerance >= 0.0) || args.window == 0 {
        return Err(CliError::Invalid("tolerance must be non-negative and window at least 1".into()));
    }
    let bytes = read_bytes(&args.series)?;
    Ok(to_pretty(&analyze_series(&bytes, args.tolerance, args.window)?))
}
