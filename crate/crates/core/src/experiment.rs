//! Experiment orchestration: builds sellers, buyers and environments from
//! a parsed config, runs seeded replications of the protocol, and
//! aggregates the summary document.

use rand::Rng;
use thiserror::Error;

use crate::agents::{
    make_buyer, AgentError, Buyer, ExpertPool, OmrSeller, Seller, SumOverrides, SumSeller,
    SumStreams,
};
use crate::config::{
    ConfigError, ExperimentConfig, ExpertMode, OptOracleMode, SellerId, StreamLabel,
};
use crate::domain::{DomainError, WeightVector};
use crate::environment::{
    ContextDist, Environment, EnvironmentError, FixedEnvironment, IidEnvironment, PriceTracker,
    RotationEnvironment, ValueDist,
};
use crate::protocol::{
    opt_hindsight, run_protocol, OptEstimate, OptOracleConfig, OptValues, ProtocolError,
    ReplicationStats, RunResult, RunSpec,
};
use crate::sketch::enumerate_sketch_set;
use crate::trace::{
    emit_trace, parse_trace, EstimateWithError, ModeFlags, OptSummary, RegretSummary,
    SummaryFile, TraceError,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown environment id '{0}'")]
    UnknownEnvironment(String),
    #[error("cannot read fixed sequence '{path}': {reason}")]
    FixedSequenceIo { path: String, reason: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Environment(#[from] EnvironmentError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

impl ExperimentError {
    /// True when the failure is a runtime cap (enumeration or search
    /// budget), which the command line maps to its own exit code.
    pub fn is_cap(&self) -> bool {
        matches!(
            self,
            ExperimentError::Protocol(ProtocolError::Sketch(
                crate::sketch::SketchError::CapExceeded { .. }
            )) | ExperimentError::Agent(AgentError::Sketch(
                crate::sketch::SketchError::CapExceeded { .. }
            )) | ExperimentError::Agent(AgentError::SearchSpaceExceeded { .. })
        )
    }
}

pub fn build_environment(
    config: &ExperimentConfig,
    replication: u32,
) -> Result<Box<dyn Environment>, ExperimentError> {
    let rng = config.seed_plan().stream(StreamLabel::Environment, replication);
    match config.environment.as_str() {
        "iid_uniform" => Ok(Box::new(IidEnvironment::new(
            ContextDist::UniformSphere { dim: config.dimension },
            ValueDist::Uniform { lo: 0.0, hi: 1.0 },
            rng,
        ))),
        "tracker" => {
            let mut rng = rng;
            let direction = crate::environment::sample_unit_sphere(&mut rng, config.dimension);
            let initial = rng.gen::<f64>();
            Ok(Box::new(PriceTracker::new(direction, initial)))
        }
        "rotation" => Ok(Box::new(RotationEnvironment::new(config.dimension, rng))),
        other => {
            if let Some(path) = other.strip_prefix("fixed:") {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    ExperimentError::FixedSequenceIo {
                        path: path.to_string(),
                        reason: e.to_string(),
                    }
                })?;
                Ok(Box::new(load_fixed_environment(&text)?))
            } else {
                Err(ExperimentError::UnknownEnvironment(other.to_string()))
            }
        }
    }
}

/// Builds a replayable environment from a trace file's context and value
/// columns.
pub fn load_fixed_environment(trace_text: &str) -> Result<FixedEnvironment, ExperimentError> {
    let rows = parse_trace(trace_text)?;
    let rounds = rows
        .into_iter()
        .map(|row| (row.context, row.true_value))
        .collect::<Vec<_>>();
    Ok(FixedEnvironment::from_raw(rounds)?)
}

pub fn build_expert_pool(
    config: &ExperimentConfig,
    replication: u32,
) -> Result<ExpertPool, ExperimentError> {
    match config.expert_mode {
        ExpertMode::Exact => {
            let space = config.sketch_space()?;
            let sketches = enumerate_sketch_set(&space, config.expert_cap)
                .map_err(AgentError::Sketch)?;
            Ok(ExpertPool::exact(sketches, config.dimension)?)
        }
        ExpertMode::Sampled => {
            let mut rng = config.seed_plan().stream(StreamLabel::Dictionary, replication);
            let mut targets = Vec::with_capacity(config.dictionary_size);
            for _ in 0..config.dictionary_size {
                let direction =
                    crate::environment::sample_unit_sphere(&mut rng, config.dimension);
                let radius = rng.gen::<f64>();
                targets.push(WeightVector::new(
                    direction.coords().iter().map(|c| c * radius).collect(),
                )?);
            }
            Ok(ExpertPool::sampled(targets, config.epsilon)?)
        }
    }
}

pub fn build_seller(
    config: &ExperimentConfig,
    replication: u32,
) -> Result<Box<dyn Seller>, ExperimentError> {
    let pool = build_expert_pool(config, replication)?;
    let plan = config.seed_plan();
    match config.seller {
        SellerId::Omr => Ok(Box::new(OmrSeller::new(
            pool,
            config.horizon,
            plan.stream(StreamLabel::ExpertSampling, replication),
        )?)),
        SellerId::Sum => {
            let streams = SumStreams {
                omega: plan.stream(StreamLabel::SellerOmega, replication),
                lambda: plan.stream(StreamLabel::SellerLambda, replication),
                xi: plan.stream(StreamLabel::SellerXi, replication),
                expert: plan.stream(StreamLabel::ExpertSampling, replication),
            };
            let overrides = SumOverrides {
                rho: config.rho_override,
                disable_random_pricing: config.disable_random_pricing,
                ..Default::default()
            };
            Ok(Box::new(SumSeller::new(
                pool,
                config.epsilon,
                config.gamma_bar,
                config.horizon,
                streams,
                overrides,
            )?))
        }
    }
}

pub fn build_buyers(config: &ExperimentConfig) -> Result<Vec<Box<dyn Buyer>>, ExperimentError> {
    config
        .buyers
        .iter()
        .map(|id| make_buyer(id).map_err(ExperimentError::from))
        .collect()
}

pub fn opt_oracle(config: &ExperimentConfig) -> Result<OptOracleConfig, ExperimentError> {
    Ok(match config.opt_mode {
        OptOracleMode::Grid => OptOracleConfig::grid(config.opt_resolution),
        OptOracleMode::SketchSet => OptOracleConfig::sketch_set(
            config.sketch_space()?,
            config.expert_cap,
            config.epsilon,
        ),
    })
}

/// One replication's protocol run, with all parties built from the seed
/// plan.
pub fn run_replication(
    config: &ExperimentConfig,
    replication: u32,
) -> Result<RunResult, ExperimentError> {
    let spec = RunSpec {
        partition: config.build_partition()?,
        discount: config.build_discount()?,
    };
    let mut seller = build_seller(config, replication)?;
    let mut buyers = build_buyers(config)?;
    let mut buyer_rngs: Vec<_> = (0..config.buyers.len() as u32)
        .map(|i| config.seed_plan().stream(StreamLabel::Buyer(i), replication))
        .collect();
    let mut environment = build_environment(config, replication)?;
    Ok(run_protocol(
        &spec,
        seller.as_mut(),
        &mut buyers,
        &mut buyer_rngs,
        environment.as_mut(),
    )?)
}

/// Full experiment output: the first replication's trace plus the
/// aggregated summary.
#[derive(Debug)]
pub struct ExperimentOutput {
    pub trace_text: String,
    pub summary: SummaryFile,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    config.validate()?;
    let oracle = opt_oracle(config)?;
    let replications = config.replications;
    let mut revenues = Vec::with_capacity(replications as usize);
    let mut opt_truths: Vec<OptEstimate> = Vec::with_capacity(replications as usize);
    let mut opt_bids: Vec<OptEstimate> = Vec::with_capacity(replications as usize);
    let mut utilities: Vec<Vec<f64>> = vec![Vec::new(); config.buyers.len()];
    let mut value_reads = 0usize;
    let mut trace_text = String::new();

    for replication in 0..replications {
        let result = run_replication(config, replication)?;
        if replication == 0 {
            trace_text = emit_trace(&result.traces);
        }
        revenues.push(result.realized_revenue);
        opt_truths.push(opt_hindsight(&result.rounds(OptValues::Truth), &oracle)?);
        opt_bids.push(opt_hindsight(&result.rounds(OptValues::Bids), &oracle)?);
        for (i, utility) in result.buyer_utilities.iter().enumerate() {
            utilities[i].push(*utility);
        }
        value_reads += result.seller_value_reads;
    }

    let all_truthful = config.buyers.iter().all(|b| b == "truthful");
    let regret_samples: Vec<f64> = opt_truths
        .iter()
        .zip(&revenues)
        .map(|(opt, revenue)| opt.value - revenue)
        .collect();
    let regret_stats = ReplicationStats::from_samples(regret_samples);
    let regret = RegretSummary {
        kind: if all_truthful { "standard" } else { "profile-gap" }.to_string(),
        mean: regret_stats.mean,
        std_error: regret_stats.std_error,
        caveat: if all_truthful {
            None
        } else {
            Some(
                "buyers are strategic: this is the configured profile's gap, \
not a supremum over equilibria"
                    .to_string(),
            )
        },
    };

    let revenue_stats = ReplicationStats::from_samples(revenues);
    let summary = SummaryFile {
        config: config.emit(),
        config_hash: config.hash(),
        master_seed: config.seed,
        replications,
        mode: ModeFlags {
            seller: config.seller.as_str().to_string(),
            environment: config.environment.clone(),
            expert_mode: config.expert_mode.as_str().to_string(),
            grid_override: config.has_grid_override(),
            heuristic: config.expert_mode == ExpertMode::Sampled,
            support_window: config.support_window,
            rho_override: config.rho_override,
            disable_random_pricing: config.disable_random_pricing,
        },
        revenue: EstimateWithError::from(&revenue_stats),
        opt_truth: OptSummary::from_estimates(&opt_truths),
        opt_bids: OptSummary::from_estimates(&opt_bids),
        regret,
        buyer_utilities: utilities
            .iter()
            .map(|samples| EstimateWithError::from(&ReplicationStats::from_samples(samples.clone())))
            .collect(),
        seller_value_reads: value_reads,
        verifier_reports: Vec::new(),
    };
    Ok(ExperimentOutput { trace_text, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(text: &str) -> ExperimentConfig {
        ExperimentConfig::parse(text).unwrap()
    }

    const SMALL: &str = "\
horizon = 8
dimension = 2
epsilon = 0.25
gamma_bar = 0.5
seller = omr
environment = iid_uniform
buyers = truthful
seed = 11
replications = 3
grid_step = 0.5
max_support = 1
support_window = 2
opt_resolution = 0.01
";

    #[test]
    fn experiment_runs_and_summarizes() {
        let config = config(SMALL);
        let output = run_experiment(&config).unwrap();
        assert!(output.trace_text.starts_with(crate::trace::TRACE_HEADER));
        assert_eq!(output.trace_text.lines().count(), 9);
        assert_eq!(output.summary.replications, 3);
        assert_eq!(output.summary.regret.kind, "standard");
        assert!(output.summary.mode.grid_override);
        assert_eq!(output.summary.seller_value_reads, 0);
        // revenue never exceeds the hindsight optimum's upper envelope
        assert!(
            output.summary.revenue.mean
                <= output.summary.opt_truth.mean
                    + output.summary.opt_truth.surrogate_error_bound
                    + 1e-9
        );
    }

    #[test]
    fn identical_seeds_give_identical_outputs() {
        let config = config(SMALL);
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(a.trace_text, b.trace_text);
        assert_eq!(
            serde_json::to_string(&a.summary).unwrap(),
            serde_json::to_string(&b.summary).unwrap()
        );
    }

    #[test]
    fn strategic_profiles_are_labeled() {
        let text = SMALL.replace("buyers = truthful", "buyers = shade:0.1");
        let output = run_experiment(&config(text.as_str())).unwrap();
        assert_eq!(output.summary.regret.kind, "profile-gap");
        assert!(output.summary.regret.caveat.is_some());
    }

    #[test]
    fn sampled_mode_is_marked_heuristic() {
        let text = SMALL.replace("seller = omr", "seller = sum")
            + "expert_mode = sampled\ndictionary_size = 4\n";
        let output = run_experiment(&config(text.as_str())).unwrap();
        assert!(output.summary.mode.heuristic);
        assert_eq!(output.summary.mode.expert_mode, "sampled");
    }

    #[test]
    fn robust_seller_reduces_to_plain_seller_under_overrides() {
        // rho pinned to 1 and random pricing disabled: identical traces
        // under shared seeds
        let omr = config(SMALL);
        let sum_text = SMALL.replace("seller = omr", "seller = sum")
            + "rho_override = 1\ndisable_random_pricing = true\n";
        let sum = config(sum_text.as_str());
        let a = run_experiment(&omr).unwrap();
        let b = run_experiment(&sum).unwrap();
        assert_eq!(a.trace_text, b.trace_text);
    }

    #[test]
    fn fixed_environment_replays_from_trace_files() {
        let config_a = config(SMALL);
        let output = run_experiment(&config_a).unwrap();
        let dir = std::env::temp_dir().join(format!("omr-fixed-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("replay.csv");
        std::fs::write(&path, &output.trace_text).unwrap();

        let replay_text = SMALL.replace(
            "environment = iid_uniform",
            &format!("environment = fixed:{}", path.display()),
        );
        let replay = run_experiment(&config(replay_text.as_str())).unwrap();
        // same contexts and values, hence the same trace under the same
        // seller streams
        assert_eq!(replay.trace_text, output.trace_text);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn unknown_environment_errors() {
        let text = SMALL.replace("environment = iid_uniform", "environment = alien");
        let err = run_experiment(&config(text.as_str())).unwrap_err();
        assert!(matches!(err, ExperimentError::UnknownEnvironment(_)));
    }

    #[test]
    fn enumeration_cap_is_a_runtime_cap() {
        let text = SMALL
            .replace("grid_step = 0.5\nmax_support = 1\nsupport_window = 2\n", "")
            .replace("horizon = 8", "horizon = 64");
        let config = config(text.as_str());
        let err = run_experiment(&config).unwrap_err();
        assert!(err.is_cap(), "{err:?}");
    }
}
