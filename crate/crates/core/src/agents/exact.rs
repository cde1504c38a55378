//! Exact-expectation engine for tiny instances.
//!
//! Utilities and revenue are computed as exact expectations over the
//! seller's coins: the random-pricing and update coins are enumerated, the
//! uniform price inside the random branch is integrated in closed form
//! (its piecewise-linear payoffs admit exact integrals), and the expert
//! choice is a deterministic follow-the-leader rule. Buyer strategies are
//! trees over the buyer's own outcome history, which is the only discrete
//! private signal a buyer receives.

use crate::agents::AgentError;
use crate::domain::{
    sale_occurs, ContextVector, RoundPartition, WeightVector,
};
use crate::sketch::{reconstruct, Sketch};

/// A pure strategy for one buyer: at its `k`-th appearance the bid may
/// depend on the outcomes of appearances `1..k` (the `bits` argument).
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyTree {
    levels: Vec<Vec<f64>>,
}

impl StrategyTree {
    pub fn new(levels: Vec<Vec<f64>>) -> Result<Self, AgentError> {
        for (k, level) in levels.iter().enumerate() {
            if level.len() != 1 << k {
                return Err(AgentError::BestResponseOutOfScope(format!(
                    "level {k} must have {} entries, found {}",
                    1 << k,
                    level.len()
                )));
            }
            if level.iter().any(|b| !(0.0..=1.0).contains(b)) {
                return Err(AgentError::BestResponseOutOfScope(
                    "tree bids must lie in [0,1]".to_string(),
                ));
            }
        }
        Ok(Self { levels })
    }

    /// History-independent tree: one fixed bid per appearance.
    pub fn constant_bids(bids: &[f64]) -> Self {
        Self {
            levels: bids
                .iter()
                .enumerate()
                .map(|(k, &b)| vec![b; 1 << k])
                .collect(),
        }
    }

    pub fn appearances(&self) -> usize {
        self.levels.len()
    }

    pub fn bid(&self, appearance: usize, bits: usize) -> f64 {
        self.levels[appearance][bits]
    }

    /// The truthful-switch counterpart: identical everywhere except that
    /// every node of the given appearance bids the true value.
    pub fn with_truthful_at(&self, appearance: usize, theta: f64) -> Self {
        let mut levels = self.levels.clone();
        for entry in &mut levels[appearance] {
            *entry = theta;
        }
        Self { levels }
    }
}

/// Buyer behavior the engine can evaluate exactly.
#[derive(Debug, Clone)]
pub enum ExactStrategy {
    Truthful,
    Shade(f64),
    Deceiver { rounds: usize, lowball: f64 },
    Tree(StrategyTree),
}

impl ExactStrategy {
    fn bid(&self, appearance: usize, bits: usize, theta: f64) -> f64 {
        match self {
            ExactStrategy::Truthful => theta,
            ExactStrategy::Shade(margin) => (theta - margin).max(0.0),
            ExactStrategy::Deceiver { rounds, lowball } => {
                if appearance < *rounds {
                    *lowball
                } else {
                    theta
                }
            }
            ExactStrategy::Tree(tree) => tree.bid(appearance, bits),
        }
    }
}

/// Seller models with finite (or analytically integrable) coin spaces.
#[derive(Debug, Clone)]
pub enum ExactSellerSpec {
    /// The strategy-robust seller with a deterministic follow-the-leader
    /// expert rule: random pricing with probability `epsilon`, update coins
    /// with probability `rho` (0 and 1 collapse the branch).
    SparseFtl {
        epsilon: f64,
        rho: f64,
        experts: Vec<Sketch>,
    },
    /// Naive control: posts the previous bid as the next price.
    CopyLastBid { initial_price: f64 },
    /// Stationary policy.
    FixedWeight(WeightVector),
}

/// A fully specified tiny instance: fixed environment, known values,
/// partition and per-buyer discounts.
#[derive(Debug, Clone)]
pub struct ExactInstance {
    pub contexts: Vec<ContextVector>,
    pub values: Vec<f64>,
    pub partition: RoundPartition,
    pub gammas: Vec<f64>,
    pub seller: ExactSellerSpec,
}

impl ExactInstance {
    pub fn horizon(&self) -> usize {
        self.contexts.len()
    }

    fn validate(&self) -> Result<(), AgentError> {
        let horizon = self.horizon();
        if horizon == 0 || horizon > 10 {
            return Err(AgentError::BestResponseOutOfScope(format!(
                "exact engine supports horizons 1..=10, got {horizon}"
            )));
        }
        if self.values.len() != horizon || self.partition.horizon() != horizon {
            return Err(AgentError::BestResponseOutOfScope(
                "contexts, values and partition must agree on the horizon".to_string(),
            ));
        }
        if self.gammas.len() != self.partition.buyer_count() {
            return Err(AgentError::BestResponseOutOfScope(
                "one discount factor per buyer".to_string(),
            ));
        }
        if self.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(AgentError::BestResponseOutOfScope(
                "values must lie in [0,1]".to_string(),
            ));
        }
        if let ExactSellerSpec::SparseFtl { epsilon, rho, experts } = &self.seller {
            if !(0.0..=1.0).contains(epsilon) || !(0.0..=1.0).contains(rho) {
                return Err(AgentError::BestResponseOutOfScope(
                    "epsilon and rho must lie in [0,1]".to_string(),
                ));
            }
            if experts.is_empty() {
                return Err(AgentError::EmptyExpertPool);
            }
        }
        Ok(())
    }
}

/// Expected discounted utilities (one per buyer) and expected revenue.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactOutcome {
    pub buyer_utilities: Vec<f64>,
    pub revenue: f64,
}

#[derive(Debug, Clone)]
enum SellerState {
    Ftl(Vec<f64>),
    Copy(f64),
    Fixed,
}

struct Engine<'a> {
    instance: &'a ExactInstance,
    profile: &'a [ExactStrategy],
    /// `expert_prices[t-1][z]`: the price expert `z` reconstructs to at
    /// round `t` (SparseFtl only).
    expert_prices: Vec<Vec<f64>>,
    fixed_prices: Vec<f64>,
    epsilon: f64,
    rho: f64,
}

#[derive(Clone)]
struct BuyerNode {
    appearance: usize,
    bits: usize,
}

impl Engine<'_> {
    fn run(instance: &ExactInstance, profile: &[ExactStrategy]) -> Result<ExactOutcome, AgentError> {
        instance.validate()?;
        if profile.len() != instance.partition.buyer_count() {
            return Err(AgentError::BestResponseOutOfScope(
                "one strategy per buyer".to_string(),
            ));
        }
        let horizon = instance.horizon();
        let (expert_prices, fixed_prices, epsilon, rho, state) = match &instance.seller {
            ExactSellerSpec::SparseFtl { epsilon, rho, experts } => {
                let mut table = vec![Vec::with_capacity(experts.len()); horizon];
                for (t, row) in table.iter_mut().enumerate() {
                    for sketch in experts {
                        let v = reconstruct(sketch, &instance.contexts[..=t]);
                        row.push(v.price(&instance.contexts[t]));
                    }
                }
                (
                    table,
                    Vec::new(),
                    *epsilon,
                    *rho,
                    SellerState::Ftl(vec![0.0; experts.len()]),
                )
            }
            ExactSellerSpec::CopyLastBid { initial_price } => (
                Vec::new(),
                Vec::new(),
                0.0,
                0.0,
                SellerState::Copy(initial_price.clamp(0.0, 1.0)),
            ),
            ExactSellerSpec::FixedWeight(weight) => {
                let prices = instance
                    .contexts
                    .iter()
                    .map(|x| weight.price(x))
                    .collect();
                (Vec::new(), prices, 0.0, 0.0, SellerState::Fixed)
            }
        };
        let engine = Engine {
            instance,
            profile,
            expert_prices,
            fixed_prices,
            epsilon,
            rho,
        };
        let mut outcome = ExactOutcome {
            buyer_utilities: vec![0.0; profile.len()],
            revenue: 0.0,
        };
        let mut nodes = vec![BuyerNode { appearance: 0, bits: 0 }; profile.len()];
        engine.recurse(1, state, &mut nodes, 1.0, &mut outcome)?;
        Ok(outcome)
    }

    fn deterministic_price(&self, t: usize, state: &SellerState) -> f64 {
        match state {
            SellerState::Ftl(cumulative) => {
                let mut leader = 0;
                for (z, &c) in cumulative.iter().enumerate() {
                    if c > cumulative[leader] {
                        leader = z;
                    }
                }
                self.expert_prices[t - 1][leader]
            }
            SellerState::Copy(price) => *price,
            SellerState::Fixed => self.fixed_prices[t - 1],
        }
    }

    /// Seller state transitions after observing `bid` at round `t`,
    /// together with their probabilities (the update-coin branches).
    fn successor_states(&self, t: usize, state: &SellerState, bid: f64) -> Vec<(f64, SellerState)> {
        match state {
            SellerState::Ftl(cumulative) => {
                let updated = || {
                    let mut next = cumulative.clone();
                    for (c, price) in next.iter_mut().zip(&self.expert_prices[t - 1]) {
                        let reward = if sale_occurs(*price, bid) {
                            price.max(0.0).clamp(0.0, 1.0)
                        } else {
                            0.0
                        };
                        *c += reward;
                    }
                    SellerState::Ftl(next)
                };
                if self.rho >= 1.0 {
                    vec![(1.0, updated())]
                } else if self.rho <= 0.0 {
                    vec![(1.0, state.clone())]
                } else {
                    vec![(self.rho, updated()), (1.0 - self.rho, state.clone())]
                }
            }
            SellerState::Copy(_) => vec![(1.0, SellerState::Copy(bid))],
            SellerState::Fixed => vec![(1.0, SellerState::Fixed)],
        }
    }

    fn recurse(
        &self,
        t: usize,
        state: SellerState,
        nodes: &mut [BuyerNode],
        weight: f64,
        outcome: &mut ExactOutcome,
    ) -> Result<(), AgentError> {
        if t > self.instance.horizon() {
            return Ok(());
        }
        let buyer = self.instance.partition.buyer_of(t)?;
        let theta = self.instance.values[t - 1];
        let gamma = self.instance.gammas[buyer - 1];
        let discount = gamma.powi(t as i32 - 1);
        let node = nodes[buyer - 1].clone();
        let bid = self.profile[buyer - 1].bid(node.appearance, node.bits, theta);
        debug_assert!((0.0..=1.0).contains(&bid), "strategy produced bid {bid}");

        // deterministic-price branch (the expert or naive price)
        let det_probability = 1.0 - self.epsilon;
        if det_probability > 0.0 {
            let price = self.deterministic_price(t, &state);
            let sold = sale_occurs(price, bid);
            let utility = if sold { theta - price } else { 0.0 };
            let revenue = if sold { price.max(0.0) } else { 0.0 };
            self.descend(
                t,
                &state,
                nodes,
                buyer,
                sold,
                bid,
                weight * det_probability,
                discount * utility,
                revenue,
                outcome,
            )?;
        }

        // random-pricing branch: the uniform price integrates in closed
        // form; only the sale indicator branches (it feeds the buyer's
        // outcome history)
        if self.epsilon > 0.0 {
            let branch = weight * self.epsilon;
            // sale: price uniform on [0, bid]
            if bid > 0.0 {
                self.descend(
                    t,
                    &state,
                    nodes,
                    buyer,
                    true,
                    bid,
                    branch * bid,
                    discount * (theta - bid / 2.0),
                    bid / 2.0,
                    outcome,
                )?;
            }
            // no sale: price above the bid
            if bid < 1.0 {
                self.descend(
                    t,
                    &state,
                    nodes,
                    buyer,
                    false,
                    bid,
                    branch * (1.0 - bid),
                    0.0,
                    0.0,
                    outcome,
                )?;
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn descend(
        &self,
        t: usize,
        state: &SellerState,
        nodes: &mut [BuyerNode],
        buyer: usize,
        sold: bool,
        bid: f64,
        weight: f64,
        discounted_utility: f64,
        expected_revenue: f64,
        outcome: &mut ExactOutcome,
    ) -> Result<(), AgentError> {
        outcome.buyer_utilities[buyer - 1] += weight * discounted_utility;
        outcome.revenue += weight * expected_revenue;

        let saved = nodes[buyer - 1].clone();
        nodes[buyer - 1] = BuyerNode {
            appearance: saved.appearance + 1,
            bits: saved.bits | ((sold as usize) << saved.appearance),
        };
        for (probability, next_state) in self.successor_states(t, state, bid) {
            if probability > 0.0 {
                self.recurse(t + 1, next_state, nodes, weight * probability, outcome)?;
            }
        }
        nodes[buyer - 1] = saved;
        Ok(())
    }
}

/// Exact expected utilities and revenue for a full strategy profile.
pub fn evaluate_profile(
    instance: &ExactInstance,
    profile: &[ExactStrategy],
) -> Result<ExactOutcome, AgentError> {
    Engine::run(instance, profile)
}

#[derive(Debug, Clone)]
pub struct BestResponse {
    pub tree: StrategyTree,
    pub utility: f64,
    pub trees_searched: u128,
}

/// Uniform bid grid over [0,1] that always contains 0, 1 and the true
/// value, so truthful play is representable.
pub fn bid_grid_with(theta: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2);
    let mut grid: Vec<f64> = (0..points).map(|i| i as f64 / (points - 1) as f64).collect();
    grid.push(theta.clamp(0.0, 1.0));
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    grid
}

/// Brute-force best response for one buyer against a fixed profile:
/// enumerates every strategy tree over the bid grid and maximizes the exact
/// expected discounted utility. Ties break toward the earliest tree in
/// enumeration order, so the result is deterministic.
pub fn best_response(
    instance: &ExactInstance,
    profile: &[ExactStrategy],
    responder: usize,
    bid_grid: &[f64],
    max_trees: u128,
) -> Result<BestResponse, AgentError> {
    instance.validate()?;
    let appearances = instance.partition.slots()[responder - 1].len();
    if appearances == 0 {
        return Err(AgentError::BestResponseOutOfScope(
            "responder never appears".to_string(),
        ));
    }
    if appearances > 4 {
        return Err(AgentError::BestResponseOutOfScope(format!(
            "search supports at most 4 appearances, got {appearances}"
        )));
    }
    if bid_grid.is_empty() || bid_grid.len() > 9 {
        return Err(AgentError::BestResponseOutOfScope(format!(
            "bid grid must have 1..=9 points, got {}",
            bid_grid.len()
        )));
    }
    if bid_grid.iter().any(|b| !(0.0..=1.0).contains(b)) {
        return Err(AgentError::BestResponseOutOfScope(
            "bid grid entries must lie in [0,1]".to_string(),
        ));
    }

    let grid = bid_grid.len() as u128;
    let node_count = (1usize << appearances) - 1;
    let mut trees: u128 = 1;
    for _ in 0..node_count {
        trees = trees
            .checked_mul(grid)
            .ok_or(AgentError::SearchSpaceExceeded { trees: u128::MAX, cap: max_trees })?;
    }
    if trees > max_trees {
        return Err(AgentError::SearchSpaceExceeded { trees, cap: max_trees });
    }

    let mut working = profile.to_vec();
    let mut assignment = vec![0usize; node_count];
    let mut best: Option<(StrategyTree, f64)> = None;
    loop {
        let tree = tree_from_assignment(&assignment, bid_grid, appearances);
        working[responder - 1] = ExactStrategy::Tree(tree.clone());
        let outcome = Engine::run(instance, &working)?;
        let utility = outcome.buyer_utilities[responder - 1];
        if best.as_ref().is_none_or(|(_, u)| utility > *u) {
            best = Some((tree, utility));
        }
        // odometer
        let mut pos = node_count;
        loop {
            if pos == 0 {
                let (tree, utility) = best.expect("at least one tree evaluated");
                return Ok(BestResponse { tree, utility, trees_searched: trees });
            }
            pos -= 1;
            if assignment[pos] + 1 < bid_grid.len() {
                assignment[pos] += 1;
                for a in assignment.iter_mut().skip(pos + 1) {
                    *a = 0;
                }
                break;
            }
        }
    }
}

fn tree_from_assignment(assignment: &[usize], grid: &[f64], appearances: usize) -> StrategyTree {
    let mut levels = Vec::with_capacity(appearances);
    let mut offset = 0;
    for k in 0..appearances {
        let width = 1usize << k;
        let level: Vec<f64> = assignment[offset..offset + width]
            .iter()
            .map(|&g| grid[g])
            .collect();
        levels.push(level);
        offset += width;
    }
    StrategyTree { levels }
}

/// Per-buyer best-response gains over the profile's own utilities; the
/// profile passes an `eps`-equilibrium check when every gain is at most
/// `eps`.
pub fn deviation_gains(
    instance: &ExactInstance,
    profile: &[ExactStrategy],
    grid_points: usize,
    max_trees: u128,
) -> Result<Vec<f64>, AgentError> {
    let base = evaluate_profile(instance, profile)?;
    let mut gains = Vec::with_capacity(profile.len());
    for buyer in 1..=profile.len() {
        // the grid must contain the buyer's own values so truthful play is
        // representable; with heterogeneous values we include each of them
        let mut grid = bid_grid_with(0.0, grid_points);
        for &round in &instance.partition.slots()[buyer - 1] {
            grid.push(instance.values[round - 1]);
        }
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        if grid.len() > 9 {
            grid.truncate(9);
        }
        let response = best_response(instance, profile, buyer, &grid, max_trees)?;
        gains.push(response.utility - base.buyer_utilities[buyer - 1]);
    }
    Ok(gains)
}
