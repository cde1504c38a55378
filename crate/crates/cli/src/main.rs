//! `omr`: run seeded pricing simulations, verify the analytic bounds the
//! sellers rest on, build sketches, and enumerate expert families.
//!
//! Exit codes: 0 success, 1 failed verification or runtime error, 2 bad
//! configuration or usage, 3 runtime cap exceeded (enumeration or search
//! budgets).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use omr_core::analysis;
use omr_core::config::{ExperimentConfig, ExpertMode};
use omr_core::domain::{ContextVector, WeightVector};
use omr_core::experiment::{run_experiment, ExperimentError};
use omr_core::sketch::{
    construct_sketch, count_sketch_set, enumerate_sketch_set, SetSize, Sketch, SketchError,
    SketchSpace,
};

#[derive(Parser)]
#[command(name = "omr", version, about = "Online contextual pricing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured experiment and write trace and summary files.
    Simulate(SimulateArgs),
    /// Run one of the bound verifiers and print its JSON report.
    Verify(VerifyArgs),
    /// Build sketches for target weights against a context sequence.
    Sketch(SketchArgs),
    /// Count or list an expert family of sketches.
    EnumerateExperts(EnumerateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment config file (flat key = value lines).
    #[arg(long)]
    config: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Replication count override.
    #[arg(long)]
    replications: Option<u32>,
    /// Expert-set mode override.
    #[arg(long, value_parser = ["exact", "sampled"])]
    mode: Option<String>,
    /// Output directory; defaults to $OMR_OUT_DIR, then the working dir.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Which bound to verify: sketch | lazy-ogd | random-pricing |
    /// rev-stability | sparse-regret | truthfulness.
    check: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    updates: Option<usize>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    bid: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    experts: Option<usize>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    gamma_bar: Option<f64>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SketchArgs {
    /// Target weights, one per line, semicolon-joined decimals.
    #[arg(long)]
    weights: PathBuf,
    /// Unit contexts, one per line, semicolon-joined decimals.
    #[arg(long)]
    contexts: PathBuf,
    #[arg(long)]
    epsilon: f64,
    /// Write the JSON sketches here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EnumerateArgs {
    #[arg(long)]
    horizon: usize,
    #[arg(long)]
    epsilon: f64,
    /// Coarse-grid override: coefficient spacing.
    #[arg(long)]
    grid_step: Option<f64>,
    /// Coarse-grid override: support-size budget.
    #[arg(long)]
    max_support: Option<usize>,
    /// Restrict supports to the first rounds.
    #[arg(long)]
    support_window: Option<usize>,
    #[arg(long, default_value_t = 200_000)]
    cap: u128,
    /// Print the exact count only; never materialize the family.
    #[arg(long)]
    count_only: bool,
    /// Write the JSON family here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(error) => {
            eprintln!("error: {error:#}");
            ExitCode::from(classify(&error))
        }
    }
}

/// Maps error chains onto the documented exit codes.
fn classify(error: &anyhow::Error) -> u8 {
    if let Some(experiment) = error.downcast_ref::<ExperimentError>() {
        if experiment.is_cap() {
            return 3;
        }
        return match experiment {
            ExperimentError::Config(_) | ExperimentError::UnknownEnvironment(_) => 2,
            ExperimentError::FixedSequenceIo { .. } => 2,
            _ => 1,
        };
    }
    if let Some(sketch) = error.downcast_ref::<SketchError>() {
        return match sketch {
            SketchError::CapExceeded { .. } => 3,
            _ => 2,
        };
    }
    if error.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    1
}

/// Usage-level failures (bad flags, unreadable inputs) that map to exit 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Verify(args) => verify(args),
        Command::Sketch(args) => sketch(args),
        Command::EnumerateExperts(args) => enumerate(args),
    }
}

fn out_directory(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("OMR_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn simulate(args: SimulateArgs) -> anyhow::Result<ExitCode> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", args.config.display())))?;
    let mut config = ExperimentConfig::parse(&text).map_err(ExperimentError::Config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(replications) = args.replications {
        config.replications = replications;
    }
    if let Some(mode) = args.mode.as_deref() {
        config.expert_mode = match mode {
            "sampled" => ExpertMode::Sampled,
            _ => ExpertMode::Exact,
        };
    }
    config.validate().map_err(ExperimentError::Config)?;

    let output = run_experiment(&config)?;
    let dir = out_directory(args.out_dir);
    std::fs::create_dir_all(&dir)?;
    let trace_path = dir.join(&config.trace_out);
    let summary_path = dir.join(&config.summary_out);
    std::fs::write(&trace_path, &output.trace_text)?;
    let mut summary_json = serde_json::to_string_pretty(&output.summary)?;
    summary_json.push('\n');
    std::fs::write(&summary_path, summary_json)?;
    println!(
        "wrote {} and {} (revenue {:.6} +- {:.6}, {} regret {:.6} +- {:.6})",
        trace_path.display(),
        summary_path.display(),
        output.summary.revenue.mean,
        output.summary.revenue.std_error,
        output.summary.regret.kind,
        output.summary.regret.mean,
        output.summary.regret.std_error,
    );
    Ok(ExitCode::SUCCESS)
}

fn verify(args: VerifyArgs) -> anyhow::Result<ExitCode> {
    let report = match args.check.as_str() {
        "sketch" => analysis::verify_online_sketch(
            args.trials.unwrap_or(100),
            args.horizon.unwrap_or(500),
            args.dim.unwrap_or(20),
            args.epsilon.unwrap_or(0.3),
            args.seed,
        ),
        "lazy-ogd" => analysis::verify_lazy_ogd(
            args.trials.unwrap_or(3),
            args.updates.unwrap_or(1000),
            args.beta.unwrap_or(0.02),
            args.seed,
        ),
        "random-pricing" => analysis::verify_random_pricing(
            args.theta.unwrap_or(0.8),
            args.bid.unwrap_or(0.5),
            args.samples.unwrap_or(1_000_000),
            args.seed,
        ),
        "rev-stability" => analysis::verify_revenue_stability(
            args.trials.unwrap_or(50),
            args.horizon.unwrap_or(50),
            args.delta.unwrap_or(0.04),
            args.seed,
        ),
        "sparse-regret" => analysis::verify_sparse_regret(
            args.rho.unwrap_or(0.3),
            args.experts.unwrap_or(8),
            args.horizon.unwrap_or(512),
            args.replications.unwrap_or(200),
            args.seed,
        ),
        "truthfulness" => analysis::verify_truthfulness_incentive(
            args.epsilon.unwrap_or(0.25),
            args.gamma_bar.unwrap_or(0.5),
            args.horizon.unwrap_or(3),
            args.seed,
        ),
        other => {
            return Err(UsageError(format!(
                "unknown check '{other}'; expected sketch | lazy-ogd | random-pricing | \
rev-stability | sparse-regret | truthfulness"
            ))
            .into())
        }
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    match &args.out {
        Some(path) => std::fs::write(path, &text)?,
        None => print!("{text}"),
    }
    if report.passed {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("verification failed: {} (worst margin {})", report.verifier, report.worst_margin());
        Ok(ExitCode::from(1))
    }
}

fn parse_vector_file(path: &Path) -> anyhow::Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (index, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let coords = trimmed
            .split(';')
            .map(|c| {
                c.trim().parse::<f64>().map_err(|_| {
                    UsageError(format!(
                        "{}:{}: bad decimal '{c}'",
                        path.display(),
                        index + 1
                    ))
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(coords);
    }
    if rows.is_empty() {
        return Err(UsageError(format!("{}: no vectors", path.display())).into());
    }
    Ok(rows)
}

#[derive(Serialize)]
struct SketchOutput {
    target_index: usize,
    updates: usize,
    sketch: Sketch,
}

fn sketch(args: SketchArgs) -> anyhow::Result<ExitCode> {
    let weights = parse_vector_file(&args.weights)?;
    let contexts_raw = parse_vector_file(&args.contexts)?;
    let dim = contexts_raw[0].len();
    if weights.iter().any(|w| w.len() != dim) {
        return Err(UsageError(format!(
            "weight dimension does not match context dimension {dim}"
        ))
        .into());
    }
    let contexts = contexts_raw
        .into_iter()
        .map(ContextVector::new)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| UsageError(format!("bad context: {e}")))?;

    let mut outputs = Vec::new();
    for (target_index, coords) in weights.into_iter().enumerate() {
        let target = WeightVector::new(coords)
            .map_err(|e| UsageError(format!("bad weight {target_index}: {e}")))?;
        let build = construct_sketch(&target, &contexts, args.epsilon)?;
        outputs.push(SketchOutput { target_index, updates: build.updates, sketch: build.sketch });
    }
    let mut text = serde_json::to_string_pretty(&outputs)?;
    text.push('\n');
    match &args.out {
        Some(path) => std::fs::write(path, &text)?,
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn enumerate(args: EnumerateArgs) -> anyhow::Result<ExitCode> {
    let mut space = SketchSpace::standard(args.horizon, args.epsilon)?;
    if let Some(step) = args.grid_step {
        space =
            SketchSpace::coarse(args.horizon, step, (2.0 / step).floor() as i64, space.max_support, space.support_window)?;
    }
    if let Some(max_support) = args.max_support {
        space.max_support = max_support;
    }
    if let Some(window) = args.support_window {
        space.support_window = window.min(args.horizon);
    }

    let count = count_sketch_set(&space);
    match count {
        SetSize::Exact(n) => println!("family size: {n}"),
        SetSize::Overflow => println!("family size: overflow (beyond u128)"),
    }
    if args.count_only {
        return Ok(ExitCode::SUCCESS);
    }
    let sketches = enumerate_sketch_set(&space, args.cap)?;
    let mut text = serde_json::to_string_pretty(&sketches)?;
    text.push('\n');
    match &args.out {
        Some(path) => std::fs::write(path, &text)?,
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}
