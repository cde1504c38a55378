//! The two expert-driven sellers, the buyer-strategy framework, and the
//! calibration formulas tying the update probability and the truthfulness
//! radius to the approximation parameter and the discount bound.

pub mod exact;

use std::cell::Cell;
use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::domain::{Bid, ContextVector, TrueValue, WeightVector};
use crate::experts::{
    sparse_wrap, ExpertAlgorithm, ExpertsError, HedgeState, RewardFunction, SparseGate,
    SparseWrapped,
};
use crate::sketch::{OnlineSketcher, Sketch, SketchError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("feedback arrived before any step")]
    FeedbackBeforeStep,
    #[error("step called while the previous round still awaits feedback")]
    DuplicateStep,
    #[error("duplicate feedback for the current round")]
    DuplicateFeedback,
    #[error("unknown buyer strategy id '{0}'")]
    UnknownBuyer(String),
    #[error("invalid strategy parameter in '{0}'")]
    BadStrategyParameter(String),
    #[error("expert pool is empty")]
    EmptyExpertPool,
    #[error("best-response search space of {trees} trees exceeds the cap {cap}")]
    SearchSpaceExceeded { trees: u128, cap: u128 },
    #[error("best-response preconditions violated: {0}")]
    BestResponseOutOfScope(String),
    #[error(transparent)]
    Experts(#[from] ExpertsError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Domain(#[from] crate::domain::DomainError),
}

/// Update probability `rho = min(1, (1-gamma_bar) * eps^5 / (3 gamma_bar))`,
/// with the myopic limit `gamma_bar = 0` mapping to 1 (no gating needed).
pub fn compute_rho(epsilon: f64, gamma_bar: f64) -> f64 {
    assert!(epsilon > 0.0 && epsilon <= 1.0, "epsilon out of (0,1]");
    assert!((0.0..1.0).contains(&gamma_bar), "gamma_bar out of [0,1)");
    if gamma_bar == 0.0 {
        return 1.0;
    }
    ((1.0 - gamma_bar) * epsilon.powi(5) / (3.0 * gamma_bar)).min(1.0)
}

/// Truthfulness radius `delta = sqrt(3 rho gamma_bar / (eps (1-gamma_bar)))`;
/// equals `eps^2` exactly whenever the clamp inside `compute_rho` is
/// inactive. Myopic buyers (`gamma_bar = 0`) give radius 0.
pub fn compute_delta(epsilon: f64, gamma_bar: f64, rho: f64) -> f64 {
    assert!(epsilon > 0.0, "epsilon must be positive");
    assert!((0.0..1.0).contains(&gamma_bar), "gamma_bar out of [0,1)");
    assert!((0.0..=1.0).contains(&rho), "rho out of [0,1]");
    if gamma_bar == 0.0 {
        return 0.0;
    }
    (3.0 * rho * gamma_bar / (epsilon * (1.0 - gamma_bar))).sqrt()
}

/// Counts accesses to the buyer's private value from the seller's side.
/// The shipped sellers never touch it; tests assert the count stays zero.
#[derive(Debug, Default)]
pub struct ValueTripwire {
    reads: Cell<usize>,
}

impl ValueTripwire {
    pub fn reads(&self) -> usize {
        self.reads.get()
    }
}

/// What the seller may look at when choosing a weight: the public context
/// history. The current buyer's value is physically present but poisoned:
/// reading it is recorded and fails the information-barrier tests.
pub struct SellerRoundView<'a> {
    pub round: usize,
    pub contexts: &'a [ContextVector],
    current_value: f64,
    tripwire: &'a ValueTripwire,
}

impl<'a> SellerRoundView<'a> {
    pub fn new(
        round: usize,
        contexts: &'a [ContextVector],
        current_value: f64,
        tripwire: &'a ValueTripwire,
    ) -> Self {
        Self { round, contexts, current_value, tripwire }
    }

    pub fn context(&self) -> &ContextVector {
        self.contexts.last().expect("view must contain the current context")
    }

    /// Poisoned accessor. Any call is counted against the seller.
    pub fn buyer_true_value(&self) -> TrueValue {
        self.tripwire.reads.set(self.tripwire.reads.get() + 1);
        TrueValue::new(self.current_value).expect("protocol stores valid values")
    }
}

/// What the seller decided this round, with the coin flips recorded for the
/// trace.
#[derive(Debug, Clone)]
pub struct SellerDecision {
    pub weight: WeightVector,
    pub omega: bool,
    pub xi: bool,
    pub expert: Option<usize>,
}

pub trait Seller {
    fn step(&mut self, view: &SellerRoundView<'_>) -> Result<SellerDecision, AgentError>;
    fn feedback(&mut self, bid: Bid) -> Result<(), AgentError>;
    /// Short label for run metadata.
    fn mode_label(&self) -> String;
}

/// The expert set the seller prices from: either an explicitly enumerated
/// sketch family (exact mode) or a dictionary of online sketchers tracking
/// reference weights (sampled mode, heuristic).
pub enum ExpertPool {
    Exact {
        sketches: Vec<Sketch>,
        sums: Vec<Vec<f64>>,
        by_round: HashMap<usize, Vec<(usize, f64)>>,
        round: usize,
        dim: usize,
    },
    Sampled {
        sketchers: Vec<OnlineSketcher>,
        current: Vec<WeightVector>,
    },
}

impl ExpertPool {
    pub fn exact(sketches: Vec<Sketch>, dim: usize) -> Result<Self, AgentError> {
        if sketches.is_empty() {
            return Err(AgentError::EmptyExpertPool);
        }
        let mut by_round: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
        for (idx, sketch) in sketches.iter().enumerate() {
            for (round, coefficient) in sketch.coefficients() {
                by_round.entry(round).or_default().push((idx, coefficient));
            }
        }
        let sums = vec![vec![0.0; dim]; sketches.len()];
        Ok(Self::Exact { sketches, sums, by_round, round: 0, dim })
    }

    pub fn sampled(targets: Vec<WeightVector>, epsilon: f64) -> Result<Self, AgentError> {
        if targets.is_empty() {
            return Err(AgentError::EmptyExpertPool);
        }
        let sketchers = targets
            .into_iter()
            .map(|t| OnlineSketcher::new(t, epsilon))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::Sampled { current: Vec::new(), sketchers })
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Exact { sketches, .. } => sketches.len(),
            Self::Sampled { sketchers, .. } => sketchers.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mode_label(&self) -> &'static str {
        match self {
            Self::Exact { .. } => "exact",
            Self::Sampled { .. } => "sampled",
        }
    }

    /// Advances every expert to the next round's context.
    pub fn ingest(&mut self, context: &ContextVector) -> Result<(), AgentError> {
        match self {
            Self::Exact { sums, by_round, round, .. } => {
                *round += 1;
                if let Some(entries) = by_round.get(round) {
                    for &(idx, coefficient) in entries {
                        for (s, c) in sums[idx].iter_mut().zip(context.coords()) {
                            *s += coefficient * c;
                        }
                    }
                }
                Ok(())
            }
            Self::Sampled { sketchers, current } => {
                current.clear();
                for sketcher in sketchers.iter_mut() {
                    current.push(sketcher.ingest(context)?);
                }
                Ok(())
            }
        }
    }

    /// The weight expert `idx` reconstructs to at the current round.
    pub fn weight(&self, idx: usize) -> WeightVector {
        match self {
            Self::Exact { sums, .. } => WeightVector::project(&sums[idx]),
            Self::Sampled { current, .. } => current[idx].clone(),
        }
    }

    /// Price expert `idx` would post on `context`, without materializing
    /// the projected vector (the reward loop is the hot path).
    pub fn price(&self, idx: usize, context: &ContextVector) -> f64 {
        match self {
            Self::Exact { sums, .. } => {
                let sum = &sums[idx];
                let norm = crate::domain::euclidean_norm(sum);
                let raw = crate::domain::inner_product(sum, context.coords());
                if norm > 1.0 {
                    raw / norm
                } else {
                    raw
                }
            }
            Self::Sampled { current, .. } => current[idx].price(context),
        }
    }

    /// Reward function `z -> rev(v_t(z), x_t, b)` over the whole pool.
    pub fn rewards(&self, context: &ContextVector, bid: Bid) -> RewardFunction {
        RewardFunction::from_revenues((0..self.len()).map(|idx| {
            let price = self.price(idx, context);
            if crate::domain::sale_occurs(price, bid.value()) {
                price.max(0.0)
            } else {
                0.0
            }
        }))
    }
}

struct PendingRound {
    context: ContextVector,
}

/// Truthful-buyer seller: samples a sketch from the expert algorithm,
/// prices by its reconstruction, and feeds back the full revenue reward
/// function every round.
pub struct OmrSeller {
    pool: ExpertPool,
    learner: HedgeState,
    expert_rng: ChaCha8Rng,
    pending: Option<PendingRound>,
}

impl OmrSeller {
    pub fn new(pool: ExpertPool, horizon: usize, expert_rng: ChaCha8Rng) -> Result<Self, AgentError> {
        let learner = HedgeState::init(pool.len(), horizon)?;
        Ok(Self { pool, learner, expert_rng, pending: None })
    }

    pub fn pool(&self) -> &ExpertPool {
        &self.pool
    }
}

impl Seller for OmrSeller {
    fn step(&mut self, view: &SellerRoundView<'_>) -> Result<SellerDecision, AgentError> {
        if self.pending.is_some() {
            return Err(AgentError::DuplicateStep);
        }
        let context = view.context().clone();
        self.pool.ingest(&context)?;
        let expert = self.learner.sample(&mut self.expert_rng);
        let weight = self.pool.weight(expert);
        self.pending = Some(PendingRound { context });
        Ok(SellerDecision { weight, omega: false, xi: true, expert: Some(expert) })
    }

    fn feedback(&mut self, bid: Bid) -> Result<(), AgentError> {
        let pending = self.pending.take().ok_or(AgentError::FeedbackBeforeStep)?;
        let rewards = self.pool.rewards(&pending.context, bid);
        self.learner.update(&rewards)?;
        Ok(())
    }

    fn mode_label(&self) -> String {
        format!("omr/{}", self.pool.mode_label())
    }
}

/// Test-harness overrides for the strategy-robust seller's coins.
#[derive(Debug, Clone, Default)]
pub struct SumOverrides {
    /// Pin the update probability instead of deriving it.
    pub rho: Option<f64>,
    /// Suppress the random-pricing branch entirely (used by the reduction
    /// equivalence tests).
    pub disable_random_pricing: bool,
    /// Scripted random-pricing coins, one per round.
    pub forced_omega: Option<Vec<bool>>,
    /// Scripted uniform prices consumed when the random branch fires.
    pub forced_lambda: Option<Vec<f64>>,
}

/// Strategy-robust seller: with probability `epsilon` prices uniformly at
/// random on the context direction; otherwise plays the sparse-gated expert
/// algorithm. Update coins for the whole horizon are drawn up front.
pub struct SumSeller {
    pool: ExpertPool,
    learner: SparseWrapped<HedgeState>,
    epsilon: f64,
    rho: f64,
    omega_rng: ChaCha8Rng,
    lambda_rng: ChaCha8Rng,
    expert_rng: ChaCha8Rng,
    overrides: SumOverrides,
    round: usize,
    pending: Option<PendingRound>,
}

/// The independent randomness streams a strategy-robust seller consumes.
pub struct SumStreams {
    pub omega: ChaCha8Rng,
    pub lambda: ChaCha8Rng,
    pub xi: ChaCha8Rng,
    pub expert: ChaCha8Rng,
}

impl SumSeller {
    pub fn new(
        pool: ExpertPool,
        epsilon: f64,
        gamma_bar: f64,
        horizon: usize,
        mut streams: SumStreams,
        overrides: SumOverrides,
    ) -> Result<Self, AgentError> {
        let rho = overrides.rho.unwrap_or_else(|| compute_rho(epsilon, gamma_bar));
        let gate = SparseGate::new(rho, horizon, &mut streams.xi)?;
        let learner = sparse_wrap(HedgeState::init(pool.len(), horizon)?, gate);
        Ok(Self {
            pool,
            learner,
            epsilon,
            rho,
            omega_rng: streams.omega,
            lambda_rng: streams.lambda,
            expert_rng: streams.expert,
            overrides,
            round: 0,
            pending: None,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn update_coins(&self) -> &[bool] {
        self.learner.gate().coins()
    }
}

impl Seller for SumSeller {
    fn step(&mut self, view: &SellerRoundView<'_>) -> Result<SellerDecision, AgentError> {
        if self.pending.is_some() {
            return Err(AgentError::DuplicateStep);
        }
        self.round += 1;
        let context = view.context().clone();
        self.pool.ingest(&context)?;
        let xi = self.learner.upcoming_coin()?;

        let omega = match &self.overrides.forced_omega {
            Some(script) => script.get(self.round - 1).copied().unwrap_or(false),
            None if self.overrides.disable_random_pricing => false,
            None => self.omega_rng.gen::<f64>() < self.epsilon,
        };

        let decision = if omega {
            let lambda = match &self.overrides.forced_lambda {
                Some(script) => script.get(self.round - 1).copied().unwrap_or(0.0),
                None => self.lambda_rng.gen::<f64>(),
            };
            let coords: Vec<f64> = context.coords().iter().map(|c| lambda * c).collect();
            SellerDecision {
                weight: WeightVector::new(coords)?,
                omega: true,
                xi,
                expert: None,
            }
        } else {
            let expert = self.learner.sample(&mut self.expert_rng);
            SellerDecision {
                weight: self.pool.weight(expert),
                omega: false,
                xi,
                expert: Some(expert),
            }
        };
        self.pending = Some(PendingRound { context });
        Ok(decision)
    }

    fn feedback(&mut self, bid: Bid) -> Result<(), AgentError> {
        let pending = self.pending.take().ok_or(AgentError::FeedbackBeforeStep)?;
        // the reward function is computed every round; the gate inside the
        // wrapped learner decides whether it lands
        let rewards = self.pool.rewards(&pending.context, bid);
        self.learner.update(&rewards)?;
        Ok(())
    }

    fn mode_label(&self) -> String {
        format!("sum/{}", self.pool.mode_label())
    }
}

/// Posts a fixed weight every round. Test oracle (e.g. the hindsight-best
/// fixed policy when the instance is known in advance).
pub struct FixedWeightSeller {
    pub weight: WeightVector,
}

impl Seller for FixedWeightSeller {
    fn step(&mut self, _view: &SellerRoundView<'_>) -> Result<SellerDecision, AgentError> {
        Ok(SellerDecision {
            weight: self.weight.clone(),
            omega: false,
            xi: false,
            expert: None,
        })
    }

    fn feedback(&mut self, _bid: Bid) -> Result<(), AgentError> {
        Ok(())
    }

    fn mode_label(&self) -> String {
        "fixed-weight".to_string()
    }
}

/// Naive control seller: posts the previous round's bid as today's price.
/// Deliberately overfits to elicited bids, so deception against it is
/// strictly profitable; used to show the robust mechanism is doing work.
pub struct CopyLastBidSeller {
    price: f64,
}

impl CopyLastBidSeller {
    pub fn new(initial_price: f64) -> Self {
        Self { price: initial_price.clamp(0.0, 1.0) }
    }
}

impl Seller for CopyLastBidSeller {
    fn step(&mut self, view: &SellerRoundView<'_>) -> Result<SellerDecision, AgentError> {
        let coords: Vec<f64> = view.context().coords().iter().map(|c| self.price * c).collect();
        Ok(SellerDecision {
            weight: WeightVector::new(coords)?,
            omega: false,
            xi: false,
            expert: None,
        })
    }

    fn feedback(&mut self, bid: Bid) -> Result<(), AgentError> {
        self.price = bid.value();
        Ok(())
    }

    fn mode_label(&self) -> String {
        "copy-last-bid".to_string()
    }
}

/// A buyer's own interaction record: their rounds, bids and allocation
/// outcomes. Other buyers never see any of this.
#[derive(Debug, Clone, Default)]
pub struct OwnHistory {
    pub rounds: Vec<usize>,
    pub bids: Vec<f64>,
    pub outcomes: Vec<bool>,
}

impl OwnHistory {
    pub fn appearances(&self) -> usize {
        self.rounds.len()
    }
}

/// The information available to a buyer when its round-`t` bid is due:
/// contexts through `t`, prices and revealed weights through `t-1`, every
/// buyer's values through `t`, and the buyer's own record. Nothing
/// generated later in round `t` appears here.
pub struct BuyerView<'a> {
    pub round: usize,
    pub contexts: &'a [ContextVector],
    pub prices: &'a [f64],
    pub weights: &'a [WeightVector],
    pub values: &'a [f64],
    pub own: &'a OwnHistory,
}

pub trait Buyer {
    fn bid(&mut self, view: &BuyerView<'_>, value: TrueValue, rng: &mut ChaCha8Rng) -> Bid;
}

pub struct TruthfulBuyer;

impl Buyer for TruthfulBuyer {
    fn bid(&mut self, _view: &BuyerView<'_>, value: TrueValue, _rng: &mut ChaCha8Rng) -> Bid {
        Bid::new(value.value()).expect("true values are valid bids")
    }
}

/// Bids `max(0, theta - margin)`.
pub struct ShadeBuyer {
    pub margin: f64,
}

impl Buyer for ShadeBuyer {
    fn bid(&mut self, _view: &BuyerView<'_>, value: TrueValue, _rng: &mut ChaCha8Rng) -> Bid {
        Bid::new((value.value() - self.margin).max(0.0)).expect("shaded bid in range")
    }
}

/// Lowballs its first `deceive_rounds` appearances, then turns truthful.
pub struct DeceiverBuyer {
    pub deceive_rounds: usize,
    pub lowball: f64,
}

impl Buyer for DeceiverBuyer {
    fn bid(&mut self, view: &BuyerView<'_>, value: TrueValue, _rng: &mut ChaCha8Rng) -> Bid {
        if view.own.appearances() < self.deceive_rounds {
            Bid::new(self.lowball.clamp(0.0, 1.0)).expect("lowball in range")
        } else {
            Bid::new(value.value()).expect("true values are valid bids")
        }
    }
}

/// Plays a fixed bid script indexed by appearance; replays and barrier tests.
pub struct ScriptedBuyer {
    pub bids: Vec<f64>,
}

impl Buyer for ScriptedBuyer {
    fn bid(&mut self, view: &BuyerView<'_>, value: TrueValue, _rng: &mut ChaCha8Rng) -> Bid {
        let k = view.own.appearances();
        let raw = self.bids.get(k).copied().unwrap_or(value.value());
        Bid::new(raw.clamp(0.0, 1.0)).expect("scripted bid in range")
    }
}

/// Builds a buyer from its string id: `truthful`, `shade:<margin>`,
/// `deceiver:<rounds>:<lowball>`.
pub fn make_buyer(id: &str) -> Result<Box<dyn Buyer>, AgentError> {
    let parts: Vec<&str> = id.split(':').collect();
    match parts.as_slice() {
        ["truthful"] => Ok(Box::new(TruthfulBuyer)),
        ["shade", margin] => {
            let margin: f64 = margin
                .parse()
                .map_err(|_| AgentError::BadStrategyParameter(id.to_string()))?;
            if !(0.0..=1.0).contains(&margin) {
                return Err(AgentError::BadStrategyParameter(id.to_string()));
            }
            Ok(Box::new(ShadeBuyer { margin }))
        }
        ["deceiver", rounds, lowball] => {
            let deceive_rounds: usize = rounds
                .parse()
                .map_err(|_| AgentError::BadStrategyParameter(id.to_string()))?;
            let lowball: f64 = lowball
                .parse()
                .map_err(|_| AgentError::BadStrategyParameter(id.to_string()))?;
            if !(0.0..=1.0).contains(&lowball) {
                return Err(AgentError::BadStrategyParameter(id.to_string()));
            }
            Ok(Box::new(DeceiverBuyer { deceive_rounds, lowball }))
        }
        _ => Err(AgentError::UnknownBuyer(id.to_string())),
    }
}
