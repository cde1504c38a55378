//! The repeated posted-price protocol runner and all revenue accounting:
//! realized revenue, hindsight-optimal revenue surrogates, truthful-regret
//! statistics, and the lower-bound estimator for strategic regret.

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::agents::exact::{
    deviation_gains, evaluate_profile, ExactInstance, ExactStrategy,
};
use crate::agents::{
    AgentError, Buyer, BuyerView, OwnHistory, Seller, SellerRoundView, TruthfulBuyer,
    ValueTripwire,
};
use crate::domain::{
    discounted_utility, inner_product, revenue, sale_occurs, ContextVector, DiscountProfile,
    DomainError, RoundPartition, RoundTrace, WeightVector,
};
use crate::environment::{Environment, EnvironmentError, EnvironmentView};
use crate::experts::ExpertsError;
use crate::sketch::{enumerate_sketch_set, SketchError, SketchSpace};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("buyer count {buyers} does not match partition slots {slots}")]
    BuyerCountMismatch { buyers: usize, slots: usize },
    #[error("no rounds to optimize over")]
    EmptyRounds,
    #[error("grid oracle supports span dimension <= 3, instance has {dim}; use the sketch-set oracle or restrict the span")]
    SpanTooLarge { dim: usize },
    #[error("oracle resolution must be positive, got {0}")]
    BadResolution(f64),
    #[error("sketch-set oracle requires a sketch space")]
    MissingSketchSpace,
    #[error("strategy pool is empty")]
    EmptyStrategyPool,
    #[error("context dimension changed mid-run: {got} after {want}")]
    ContextDimensionChanged { got: usize, want: usize },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Environment(#[from] EnvironmentError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Experts(#[from] ExpertsError),
}

/// Immutable run parameters shared by every replication.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub partition: RoundPartition,
    pub discount: DiscountProfile,
}

/// The outcome of one protocol execution.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub traces: Vec<RoundTrace>,
    pub realized_revenue: f64,
    pub buyer_utilities: Vec<f64>,
    /// Accesses to the poisoned true-value accessor from the seller side;
    /// stays zero for every shipped seller.
    pub seller_value_reads: usize,
}

impl RunResult {
    /// Recomputes total revenue from the raw traces; must equal the
    /// accumulated figure exactly.
    pub fn recompute_revenue(&self) -> f64 {
        self.traces
            .iter()
            .map(|t| revenue(&t.weight, &t.context, t.bid))
            .sum()
    }

    /// `(context, value)` pairs for the hindsight oracle.
    pub fn rounds(&self, values: OptValues) -> Vec<(ContextVector, f64)> {
        self.traces
            .iter()
            .map(|t| {
                let v = match values {
                    OptValues::Truth => t.true_value.value(),
                    OptValues::Bids => t.bid.value(),
                };
                (t.context.clone(), v)
            })
            .collect()
    }
}

/// Executes the full round loop. Within a round: the environment moves
/// from the completed-round view (it never sees today's weight), the
/// seller prices from the public context history (today's value sits
/// behind a poisoned accessor), the buyer bids from its own view (prices
/// and weights only through yesterday), and only then is the sale
/// resolved and everything revealed.
pub fn run_protocol(
    spec: &RunSpec,
    seller: &mut dyn Seller,
    buyers: &mut [Box<dyn Buyer>],
    buyer_rngs: &mut [ChaCha8Rng],
    environment: &mut dyn Environment,
) -> Result<RunResult, ProtocolError> {
    let horizon = spec.partition.horizon();
    let n = spec.partition.buyer_count();
    if buyers.len() != n || buyer_rngs.len() != n {
        return Err(ProtocolError::BuyerCountMismatch { buyers: buyers.len(), slots: n });
    }

    let tripwire = ValueTripwire::default();
    let mut contexts: Vec<ContextVector> = Vec::with_capacity(horizon);
    let mut prices: Vec<f64> = Vec::with_capacity(horizon);
    let mut weights: Vec<WeightVector> = Vec::with_capacity(horizon);
    let mut values: Vec<f64> = Vec::with_capacity(horizon);
    let mut own: Vec<OwnHistory> = vec![OwnHistory::default(); n];
    let mut traces = Vec::with_capacity(horizon);
    let mut total_revenue = 0.0;

    for t in 1..=horizon {
        let buyer_index = spec.partition.buyer_of(t)?;

        // environment and seller both move before any round-t variable of
        // the other is shared
        let env_view = EnvironmentView {
            contexts: &contexts,
            prices: &prices,
            weights: &weights,
            values: &values,
        };
        let (context, true_value) = environment.emit(&env_view)?;
        if let Some(first) = contexts.first() {
            if context.dim() != first.dim() {
                return Err(ProtocolError::ContextDimensionChanged {
                    got: context.dim(),
                    want: first.dim(),
                });
            }
        }
        contexts.push(context);
        values.push(true_value.value());

        let seller_view = SellerRoundView::new(t, &contexts, true_value.value(), &tripwire);
        let decision = seller.step(&seller_view)?;
        let price = decision.weight.price(&contexts[t - 1]);

        let buyer_view = BuyerView {
            round: t,
            contexts: &contexts,
            prices: &prices,
            weights: &weights,
            values: &values,
            own: &own[buyer_index - 1],
        };
        let bid = buyers[buyer_index - 1].bid(
            &buyer_view,
            true_value,
            &mut buyer_rngs[buyer_index - 1],
        );

        let sold = sale_occurs(price, bid.value());
        seller.feedback(bid)?;
        total_revenue += revenue(&decision.weight, &contexts[t - 1], bid);

        traces.push(RoundTrace {
            round: t,
            buyer_index,
            context: contexts[t - 1].clone(),
            weight: decision.weight.clone(),
            price,
            bid,
            true_value,
            sold,
            coin_omega: decision.omega,
            coin_xi: decision.xi,
            expert_chosen: decision.expert,
        });

        prices.push(price);
        weights.push(decision.weight);
        let record = &mut own[buyer_index - 1];
        record.rounds.push(t);
        record.bids.push(bid.value());
        record.outcomes.push(sold);
    }

    let buyer_utilities = (1..=n)
        .map(|i| discounted_utility(&traces, i, &spec.partition, &spec.discount))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(RunResult {
        traces,
        realized_revenue: total_revenue,
        buyer_utilities,
        seller_value_reads: tripwire.reads(),
    })
}

/// Which per-round values the hindsight optimum is evaluated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptValues {
    Truth,
    Bids,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptMode {
    /// Grid over an orthonormal basis of the context span intersected with
    /// the ball; requires span dimension at most 3.
    GridOverSpan,
    /// Maximum over an explicitly enumerated sketch family.
    SketchSetSup,
}

#[derive(Debug, Clone)]
pub struct OptOracleConfig {
    pub mode: OptMode,
    /// Coefficient grid spacing for the grid oracle.
    pub resolution: f64,
    /// Sketch family for the sketch-set oracle.
    pub sketch_space: Option<SketchSpace>,
    /// Enumeration cap for the sketch-set oracle.
    pub enumeration_cap: u128,
    /// Accuracy parameter whose additive `4 eps T` bound the sketch-set
    /// oracle reports.
    pub epsilon: f64,
}

impl OptOracleConfig {
    pub fn grid(resolution: f64) -> Self {
        Self {
            mode: OptMode::GridOverSpan,
            resolution,
            sketch_space: None,
            enumeration_cap: 0,
            epsilon: 0.0,
        }
    }

    pub fn sketch_set(space: SketchSpace, cap: u128, epsilon: f64) -> Self {
        Self {
            mode: OptMode::SketchSetSup,
            resolution: 0.0,
            sketch_space: Some(space),
            enumeration_cap: cap,
            epsilon,
        }
    }
}

/// A hindsight-optimum surrogate value together with its provenance and a
/// one-sided error bound: the true supremum is at most
/// `value + error_bound`.
#[derive(Debug, Clone)]
pub struct OptEstimate {
    pub value: f64,
    pub error_bound: f64,
    pub mode: &'static str,
    pub resolution: f64,
}

/// Hindsight-optimal revenue of a fixed pricing weight over the rounds,
/// maximized by the configured surrogate.
pub fn opt_hindsight(
    rounds: &[(ContextVector, f64)],
    oracle: &OptOracleConfig,
) -> Result<OptEstimate, ProtocolError> {
    if rounds.is_empty() {
        return Err(ProtocolError::EmptyRounds);
    }
    match oracle.mode {
        OptMode::GridOverSpan => grid_over_span(rounds, oracle.resolution),
        OptMode::SketchSetSup => {
            let space = oracle
                .sketch_space
                .as_ref()
                .ok_or(ProtocolError::MissingSketchSpace)?;
            sketch_set_sup(rounds, space, oracle.enumeration_cap, oracle.epsilon)
        }
    }
}

/// Orthonormal basis of the context span, built by modified Gram-Schmidt.
fn span_basis(
    rounds: &[(ContextVector, f64)],
    max_dim: Option<usize>,
) -> Result<Vec<Vec<f64>>, ProtocolError> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for (context, _) in rounds {
        let mut residual = context.coords().to_vec();
        for b in &basis {
            let coefficient = inner_product(&residual, b);
            for (r, bc) in residual.iter_mut().zip(b) {
                *r -= coefficient * bc;
            }
        }
        let norm = crate::domain::euclidean_norm(&residual);
        if norm > 1e-9 {
            if let Some(cap) = max_dim {
                if basis.len() == cap {
                    return Err(ProtocolError::SpanTooLarge { dim: cap + 1 });
                }
            }
            for r in &mut residual {
                *r /= norm;
            }
            basis.push(residual);
        }
    }
    Ok(basis)
}

fn grid_over_span(
    rounds: &[(ContextVector, f64)],
    resolution: f64,
) -> Result<OptEstimate, ProtocolError> {
    if resolution <= 0.0 || !resolution.is_finite() {
        return Err(ProtocolError::BadResolution(resolution));
    }
    let basis = span_basis(rounds, Some(3))?;
    let s = basis.len();
    let t_count = rounds.len() as f64;
    if s == 0 {
        return Ok(OptEstimate {
            value: 0.0,
            error_bound: 0.0,
            mode: "grid-over-span",
            resolution,
        });
    }

    // per-round projections onto the basis
    let projections: Vec<Vec<f64>> = rounds
        .iter()
        .map(|(x, _)| basis.iter().map(|b| inner_product(x.coords(), b)).collect())
        .collect();

    let steps = (1.0 / resolution).floor() as i64;
    let axis: Vec<f64> = (-steps..=steps).map(|k| k as f64 * resolution).collect();
    let mut best = 0.0f64;
    let mut point = vec![0usize; s];
    loop {
        let coefficients: Vec<f64> = point.iter().map(|&i| axis[i]).collect();
        let norm_sq: f64 = coefficients.iter().map(|c| c * c).sum();
        if norm_sq <= 1.0 + 1e-12 {
            let mut total = 0.0;
            for (proj, (_, value)) in projections.iter().zip(rounds) {
                let price = inner_product(&coefficients, proj);
                if price > 0.0 && sale_occurs(price, *value) {
                    total += price;
                }
            }
            if total > best {
                best = total;
            }
        }
        // odometer over the axis grid
        let mut pos = s;
        loop {
            if pos == 0 {
                // covering radius of the coefficient grid
                let h = resolution * (s as f64).sqrt() / 2.0;
                return Ok(OptEstimate {
                    value: best,
                    error_bound: t_count * (2.0 * h.sqrt() + h),
                    mode: "grid-over-span",
                    resolution,
                });
            }
            pos -= 1;
            if point[pos] + 1 < axis.len() {
                point[pos] += 1;
                for p in point.iter_mut().skip(pos + 1) {
                    *p = 0;
                }
                break;
            }
        }
    }
}

fn sketch_set_sup(
    rounds: &[(ContextVector, f64)],
    space: &SketchSpace,
    cap: u128,
    epsilon: f64,
) -> Result<OptEstimate, ProtocolError> {
    let sketches = enumerate_sketch_set(space, cap)?;
    let dim = rounds[0].0.dim();
    let t_count = rounds.len() as f64;
    let mut best = 0.0f64;
    for sketch in &sketches {
        // running raw partial sum; the projection is memoryless
        let mut sum = vec![0.0; dim];
        let mut coefficients = sketch.coefficients().peekable();
        let mut total = 0.0;
        for (t, (context, value)) in rounds.iter().enumerate() {
            while let Some(&(round, coefficient)) = coefficients.peek() {
                if round == t + 1 {
                    for (s, c) in sum.iter_mut().zip(context.coords()) {
                        *s += coefficient * c;
                    }
                    coefficients.next();
                } else {
                    break;
                }
            }
            let weight = WeightVector::project(&sum);
            let price = weight.price(context);
            if price > 0.0 && sale_occurs(price, *value) {
                total += price;
            }
        }
        if total > best {
            best = total;
        }
    }
    Ok(OptEstimate {
        value: best,
        error_bound: 4.0 * epsilon * t_count,
        mode: "sketch-set-sup",
        resolution: space.grid_step,
    })
}

/// Mean and standard error over replications.
#[derive(Debug, Clone)]
pub struct ReplicationStats {
    pub mean: f64,
    pub std_error: f64,
    pub samples: Vec<f64>,
}

impl ReplicationStats {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let std_error = if samples.len() > 1 {
            let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Self { mean, std_error, samples }
    }
}

/// Everything one replication needs; built fresh per replication so runs
/// stay independent.
pub struct RunParties {
    pub seller: Box<dyn Seller>,
    pub environment: Box<dyn Environment>,
    pub buyer_rngs: Vec<ChaCha8Rng>,
}

/// Truthful-buyer regret statistics over seeded replications:
/// `opt_hindsight(truth) - realized revenue`, with buyers forced truthful
/// regardless of what the experiment would otherwise run.
pub fn regret(
    spec: &RunSpec,
    replications: u32,
    oracle: &OptOracleConfig,
    mut make_parties: impl FnMut(u32) -> Result<RunParties, ProtocolError>,
) -> Result<ReplicationStats, ProtocolError> {
    let n = spec.partition.buyer_count();
    let mut samples = Vec::with_capacity(replications as usize);
    for replication in 0..replications {
        let mut parties = make_parties(replication)?;
        let mut buyers: Vec<Box<dyn Buyer>> =
            (0..n).map(|_| Box::new(TruthfulBuyer) as Box<dyn Buyer>).collect();
        let result = run_protocol(
            spec,
            parties.seller.as_mut(),
            &mut buyers,
            &mut parties.buyer_rngs,
            parties.environment.as_mut(),
        )?;
        let opt = opt_hindsight(&result.rounds(OptValues::Truth), oracle)?;
        samples.push(opt.value - result.realized_revenue);
    }
    Ok(ReplicationStats::from_samples(samples))
}

pub const SREG_LABEL: &str = "lower-bound estimate of SReg";
pub const SREG_CAVEAT: &str = "equilibrium check searches a finite strategy family; \
any unexplored deviation can only raise the true supremum";

/// Default equilibrium tolerance for exact-expectation tiny instances.
pub const EPS_NASH_EXACT: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct SregMember {
    pub name: String,
    pub profile: Vec<ExactStrategy>,
}

#[derive(Debug, Clone)]
pub struct SregMemberOutcome {
    pub name: String,
    pub max_deviation_gain: f64,
    pub passes_equilibrium_check: bool,
    pub revenue: f64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct SregReport {
    pub label: &'static str,
    pub caveat: &'static str,
    pub eps_nash: f64,
    pub opt_truth: OptEstimate,
    pub members: Vec<SregMemberOutcome>,
    pub passing: usize,
    /// Max `opt(truth) - revenue` over profiles passing the deviation
    /// check; `None` when nothing passes (reported, not fatal).
    pub estimate: Option<f64>,
}

/// Strategic-regret estimator on an exact tiny instance: each candidate
/// profile is screened by the brute-force deviation check, and the gap
/// `opt(truth) - revenue` is maximized over the survivors.
pub fn sreg_estimate(
    instance: &ExactInstance,
    pool: &[SregMember],
    grid_points: usize,
    eps_nash: f64,
    oracle: &OptOracleConfig,
    max_trees: u128,
) -> Result<SregReport, ProtocolError> {
    if pool.is_empty() {
        return Err(ProtocolError::EmptyStrategyPool);
    }
    let truth_rounds: Vec<(ContextVector, f64)> = instance
        .contexts
        .iter()
        .cloned()
        .zip(instance.values.iter().copied())
        .collect();
    let opt_truth = opt_hindsight(&truth_rounds, oracle)?;

    let mut members = Vec::with_capacity(pool.len());
    let mut estimate: Option<f64> = None;
    let mut passing = 0;
    for member in pool {
        let outcome = evaluate_profile(instance, &member.profile)?;
        let gains = deviation_gains(instance, &member.profile, grid_points, max_trees)?;
        let max_gain = gains.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let passes = max_gain <= eps_nash;
        let gap = opt_truth.value - outcome.revenue;
        if passes {
            passing += 1;
            estimate = Some(estimate.map_or(gap, |e: f64| e.max(gap)));
        }
        members.push(SregMemberOutcome {
            name: member.name.clone(),
            max_deviation_gain: max_gain,
            passes_equilibrium_check: passes,
            revenue: outcome.revenue,
            gap,
        });
    }
    Ok(SregReport {
        label: SREG_LABEL,
        caveat: SREG_CAVEAT,
        eps_nash,
        opt_truth,
        members,
        passing,
        estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::exact::ExactSellerSpec;
    use crate::agents::{FixedWeightSeller, ScriptedBuyer};
    use crate::domain::TrueValue;
    use crate::environment::{FixedEnvironment, PriceTracker};
    use crate::sketch::Sketch;
    use rand::SeedableRng;

    fn unit_ctx() -> ContextVector {
        ContextVector::new(vec![1.0]).unwrap()
    }

    fn one_round_spec() -> RunSpec {
        RunSpec {
            partition: RoundPartition::single(1),
            discount: DiscountProfile::uniform(1, 0.5).unwrap(),
        }
    }

    fn fixed_env(values: &[f64]) -> FixedEnvironment {
        FixedEnvironment::new(
            values
                .iter()
                .map(|&v| (unit_ctx(), TrueValue::new(v).unwrap()))
                .collect(),
        )
        .unwrap()
    }

    fn run_fixed_weight(weight: f64, theta: f64) -> RunResult {
        let spec = one_round_spec();
        let mut seller = FixedWeightSeller {
            weight: WeightVector::new(vec![weight]).unwrap(),
        };
        let mut buyers: Vec<Box<dyn Buyer>> = vec![Box::new(TruthfulBuyer)];
        let mut rngs = vec![ChaCha8Rng::seed_from_u64(0)];
        let mut env = fixed_env(&[theta]);
        run_protocol(&spec, &mut seller, &mut buyers, &mut rngs, &mut env).unwrap()
    }

    #[test]
    fn single_round_sale_and_no_sale() {
        let sale = run_fixed_weight(0.4, 0.5);
        assert!((sale.realized_revenue - 0.4).abs() < 1e-15);
        assert!((sale.buyer_utilities[0] - 0.1).abs() < 1e-15);
        assert!(sale.traces[0].sold);

        let no_sale = run_fixed_weight(0.6, 0.5);
        assert_eq!(no_sale.realized_revenue, 0.0);
        assert_eq!(no_sale.buyer_utilities[0], 0.0);
        assert!(!no_sale.traces[0].sold);
    }

    #[test]
    fn accounting_identity_holds() {
        let result = run_fixed_weight(0.4, 0.5);
        assert_eq!(result.realized_revenue, result.recompute_revenue());
        for trace in &result.traces {
            trace.validate().unwrap();
        }
    }

    #[test]
    fn reruns_are_identical() {
        let run = || {
            let spec = RunSpec {
                partition: RoundPartition::round_robin(2, 6),
                discount: DiscountProfile::uniform(2, 0.5).unwrap(),
            };
            let pool = crate::agents::ExpertPool::exact(
                vec![
                    Sketch::empty(0.03125),
                    Sketch::new(vec![1], vec![16], 0.03125).unwrap(),
                ],
                1,
            )
            .unwrap();
            let mut seller =
                crate::agents::OmrSeller::new(pool, 6, ChaCha8Rng::seed_from_u64(5)).unwrap();
            let mut buyers: Vec<Box<dyn Buyer>> =
                vec![Box::new(TruthfulBuyer), Box::new(TruthfulBuyer)];
            let mut rngs = vec![
                ChaCha8Rng::seed_from_u64(100),
                ChaCha8Rng::seed_from_u64(101),
            ];
            let mut env = fixed_env(&[0.3, 0.5, 0.7, 0.2, 0.9, 0.4]);
            run_protocol(&spec, &mut seller, &mut buyers, &mut rngs, &mut env).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.traces, b.traces);
        assert_eq!(a.realized_revenue, b.realized_revenue);
        assert_eq!(a.seller_value_reads, 0);
    }

    /// Bid-perturbation replay: with a bid-insensitive seller, two runs
    /// differing only in bids must show the environment identical inputs,
    /// hence identical emissions.
    #[test]
    fn environment_cannot_see_bids() {
        let run = |bids: Vec<f64>| {
            let spec = RunSpec {
                partition: RoundPartition::single(5),
                discount: DiscountProfile::uniform(1, 0.5).unwrap(),
            };
            let mut seller = FixedWeightSeller {
                weight: WeightVector::new(vec![0.5]).unwrap(),
            };
            let mut buyers: Vec<Box<dyn Buyer>> = vec![Box::new(ScriptedBuyer { bids })];
            let mut rngs = vec![ChaCha8Rng::seed_from_u64(0)];
            let mut env = PriceTracker::new(unit_ctx(), 0.9);
            let result =
                run_protocol(&spec, &mut seller, &mut buyers, &mut rngs, &mut env).unwrap();
            result
                .traces
                .iter()
                .map(|t| (t.context.clone(), t.true_value))
                .collect::<Vec<_>>()
        };
        let low = run(vec![0.1, 0.2, 0.1, 0.0, 0.3]);
        let high = run(vec![0.9, 0.8, 1.0, 0.7, 0.6]);
        assert_eq!(low, high);
    }

    #[test]
    fn opt_grid_examples() {
        let oracle = OptOracleConfig::grid(1e-3);
        // two rounds, values 0.4 and 0.8: either price sells 0.8 total
        let rounds = vec![(unit_ctx(), 0.4), (unit_ctx(), 0.8)];
        let opt = opt_hindsight(&rounds, &oracle).unwrap();
        assert!((opt.value - 0.8).abs() < 1e-12);

        // all zero values: only the zero price sells, revenue 0
        let rounds = vec![(unit_ctx(), 0.0); 3];
        assert_eq!(opt_hindsight(&rounds, &oracle).unwrap().value, 0.0);

        // single round: post exactly the value
        let rounds = vec![(unit_ctx(), 0.7)];
        let opt = opt_hindsight(&rounds, &oracle).unwrap();
        assert!((opt.value - 0.7).abs() < 1e-12);

        assert!(matches!(
            opt_hindsight(&[], &oracle),
            Err(ProtocolError::EmptyRounds)
        ));
    }

    #[test]
    fn opt_grid_rejects_large_spans() {
        let rounds: Vec<(ContextVector, f64)> = (0..4)
            .map(|axis| (ContextVector::basis(4, axis), 0.5))
            .collect();
        assert!(matches!(
            opt_hindsight(&rounds, &OptOracleConfig::grid(0.1)),
            Err(ProtocolError::SpanTooLarge { dim: 4 })
        ));
    }

    #[test]
    fn opt_sketch_mode_covers_fine_grid_within_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rounds: Vec<(ContextVector, f64)> = (0..4)
            .map(|_| {
                (
                    crate::environment::sample_unit_sphere(&mut rng, 2),
                    rand::Rng::gen::<f64>(&mut rng),
                )
            })
            .collect();
        let epsilon = 0.1;
        let space = SketchSpace::coarse(4, 0.25, 4, 3, 4).unwrap();
        let sketch_oracle = OptOracleConfig::sketch_set(space, 1_000_000, epsilon);
        let grid_oracle = OptOracleConfig::grid(0.01);
        let fine = opt_hindsight(&rounds, &grid_oracle).unwrap();
        let sketched = opt_hindsight(&rounds, &sketch_oracle).unwrap();
        assert!((sketched.error_bound - 4.0 * epsilon * 4.0).abs() < 1e-12);
        assert!(fine.value <= sketched.value + sketched.error_bound);
    }

    #[test]
    fn oracle_seller_has_near_zero_regret() {
        // seller playing the grid-optimal fixed weight: regret bounded by
        // the oracle's own resolution error
        let values = [0.3, 0.52, 0.71, 0.52, 0.3, 0.9];
        let oracle = OptOracleConfig::grid(1e-3);
        let rounds: Vec<(ContextVector, f64)> =
            values.iter().map(|&v| (unit_ctx(), v)).collect();
        let opt = opt_hindsight(&rounds, &oracle).unwrap();
        // recover the best grid weight by scanning the same axis
        let mut best = (0.0, 0.0);
        let steps = (1.0f64 / 1e-3).floor() as i64;
        for k in -steps..=steps {
            let w = k as f64 * 1e-3;
            let total: f64 = values
                .iter()
                .map(|&v| if w > 0.0 && sale_occurs(w, v) { w } else { 0.0 })
                .sum();
            if total > best.1 {
                best = (w, total);
            }
        }
        let spec = RunSpec {
            partition: RoundPartition::single(6),
            discount: DiscountProfile::uniform(1, 0.5).unwrap(),
        };
        let stats = regret(&spec, 3, &oracle, |_rep| {
            Ok(RunParties {
                seller: Box::new(FixedWeightSeller {
                    weight: WeightVector::new(vec![best.0]).unwrap(),
                }),
                environment: Box::new(fixed_env(&values)),
                buyer_rngs: vec![ChaCha8Rng::seed_from_u64(0)],
            })
        })
        .unwrap();
        assert!(
            stats.mean.abs() <= opt.error_bound + 1e-9,
            "regret {} vs bound {}",
            stats.mean,
            opt.error_bound
        );
    }

    #[test]
    fn empty_expert_seller_forfeits_all_revenue() {
        // an expert set holding only the empty sketch prices at zero, so
        // regret equals the hindsight optimum
        let values = [0.4, 0.6, 0.8];
        let oracle = OptOracleConfig::grid(1e-3);
        let spec = RunSpec {
            partition: RoundPartition::single(3),
            discount: DiscountProfile::uniform(1, 0.5).unwrap(),
        };
        let stats = regret(&spec, 2, &oracle, |_rep| {
            let pool =
                crate::agents::ExpertPool::exact(vec![Sketch::empty(0.03125)], 1).unwrap();
            Ok(RunParties {
                seller: Box::new(
                    crate::agents::OmrSeller::new(pool, 3, ChaCha8Rng::seed_from_u64(1))
                        .unwrap(),
                ),
                environment: Box::new(fixed_env(&values)),
                buyer_rngs: vec![ChaCha8Rng::seed_from_u64(0)],
            })
        })
        .unwrap();
        let rounds: Vec<(ContextVector, f64)> =
            values.iter().map(|&v| (unit_ctx(), v)).collect();
        let opt = opt_hindsight(&rounds, &oracle).unwrap();
        assert!((stats.mean - opt.value).abs() < 1e-12);
    }

    #[test]
    fn sreg_estimator_on_the_bakery_instance() {
        // two-round single-buyer instance against the naive copy seller:
        // truthful fails the equilibrium check (deception gains 0.72), the
        // deceiver passes and exhibits a full-horizon revenue gap
        let instance = ExactInstance {
            contexts: vec![unit_ctx(), unit_ctx()],
            values: vec![0.8, 0.8],
            partition: RoundPartition::single(2),
            gammas: vec![0.9],
            seller: ExactSellerSpec::CopyLastBid { initial_price: 0.8 },
        };
        let pool = vec![
            SregMember {
                name: "truthful".to_string(),
                profile: vec![ExactStrategy::Truthful],
            },
            SregMember {
                name: "deceiver".to_string(),
                profile: vec![ExactStrategy::Deceiver { rounds: 1, lowball: 0.0 }],
            },
        ];
        let oracle = OptOracleConfig::grid(1e-3);
        let report =
            sreg_estimate(&instance, &pool, 3, EPS_NASH_EXACT, &oracle, 100_000).unwrap();
        assert_eq!(report.label, SREG_LABEL);
        assert!(!report.members[0].passes_equilibrium_check);
        assert!(report.members[1].passes_equilibrium_check);
        // opt(truth) = 1.6, deceiver revenue = 0: gap is the whole horizon
        let estimate = report.estimate.unwrap();
        assert!((estimate - 1.6).abs() < 1e-9);
        assert_eq!(report.passing, 1);

        assert!(matches!(
            sreg_estimate(&instance, &[], 3, EPS_NASH_EXACT, &oracle, 100_000),
            Err(ProtocolError::EmptyStrategyPool)
        ));
    }

    #[test]
    fn truthful_profile_passes_against_the_robust_seller() {
        // with the calibrated update probability, every grid deviation
        // from truthful loses, so the truthful profile survives the
        // equilibrium screen and the estimate is its plain revenue gap
        let epsilon = 0.25;
        let gamma_bar = 0.5;
        let rho = crate::agents::compute_rho(epsilon, gamma_bar);
        let step = epsilon * epsilon / 8.0;
        let experts = vec![
            Sketch::empty(step),
            Sketch::new(vec![1], vec![(0.5 / step).round() as i64], step).unwrap(),
        ];
        let instance = ExactInstance {
            contexts: vec![unit_ctx(), unit_ctx(), unit_ctx()],
            values: vec![0.8, 0.8, 0.8],
            partition: RoundPartition::single(3),
            gammas: vec![gamma_bar],
            seller: ExactSellerSpec::SparseFtl { epsilon, rho, experts },
        };
        let pool = vec![SregMember {
            name: "truthful".to_string(),
            profile: vec![ExactStrategy::Truthful],
        }];
        let oracle = OptOracleConfig::grid(1e-3);
        let report =
            sreg_estimate(&instance, &pool, 3, EPS_NASH_EXACT, &oracle, 1_000_000).unwrap();
        assert!(report.members[0].passes_equilibrium_check, "{report:?}");
        assert!(report.members[0].max_deviation_gain.abs() <= EPS_NASH_EXACT);
        let truthful_outcome =
            evaluate_profile(&instance, &[ExactStrategy::Truthful]).unwrap();
        let expected_gap = report.opt_truth.value - truthful_outcome.revenue;
        assert!((report.estimate.unwrap() - expected_gap).abs() < 1e-12);
    }

    #[test]
    fn buyer_count_must_match_partition() {
        let spec = one_round_spec();
        let mut seller = FixedWeightSeller {
            weight: WeightVector::new(vec![0.5]).unwrap(),
        };
        let mut buyers: Vec<Box<dyn Buyer>> = vec![];
        let mut rngs = vec![];
        let mut env = fixed_env(&[0.5]);
        assert!(matches!(
            run_protocol(&spec, &mut seller, &mut buyers, &mut rngs, &mut env),
            Err(ProtocolError::BuyerCountMismatch { .. })
        ));
    }
}
