//! Online expert algorithms over a finite expert set, the expert-regret
//! metric, and the sparse-feedback wrapper that gates updates by private
//! Bernoulli coins.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExpertsError {
    #[error("expert count must be >= 1")]
    NoExperts,
    #[error("horizon must be >= 1")]
    ZeroHorizon,
    #[error("reward function covers {got} experts, expected {want}")]
    RewardSizeMismatch { got: usize, want: usize },
    #[error("reward {0} is outside [0,1]")]
    RewardOutOfRange(f64),
    #[error("gate probability {0} must lie in (0,1]")]
    BadGateProbability(f64),
    #[error("gate ran out of coins after {0} rounds")]
    GateExhausted(usize),
    #[error("empty play trace")]
    EmptyTrace,
}

/// One round's reward assignment, one value in `[0,1]` per expert.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardFunction {
    values: Vec<f64>,
}

impl RewardFunction {
    pub fn new(values: Vec<f64>) -> Result<Self, ExpertsError> {
        if values.is_empty() {
            return Err(ExpertsError::NoExperts);
        }
        for &v in &values {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(ExpertsError::RewardOutOfRange(v));
            }
        }
        Ok(Self { values })
    }

    /// Builds a reward function from raw revenue numbers, clamping the
    /// sub-epsilon floating-point excursions outside `[0,1]`.
    pub fn from_revenues(values: impl IntoIterator<Item = f64>) -> Self {
        Self {
            values: values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn zeros(experts: usize) -> Self {
        Self { values: vec![0.0; experts] }
    }

    pub fn get(&self, expert: usize) -> f64 {
        self.values[expert]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// An online algorithm choosing among `K` experts from full reward feedback.
pub trait ExpertAlgorithm {
    fn expert_count(&self) -> usize;
    /// Draws an expert from the current play distribution.
    fn sample(&self, rng: &mut ChaCha8Rng) -> usize;
    /// Feeds back one round's full reward function.
    fn update(&mut self, reward: &RewardFunction) -> Result<(), ExpertsError>;
}

/// Multiplicative-weights (Hedge) state in log space, with the classical
/// fixed-horizon tuning `eta = sqrt(8 ln K / T)`.
#[derive(Debug, Clone)]
pub struct HedgeState {
    log_weights: Vec<f64>,
    learning_rate: f64,
    horizon: usize,
    expert_count: usize,
}

impl HedgeState {
    pub fn init(expert_count: usize, horizon: usize) -> Result<Self, ExpertsError> {
        if expert_count == 0 {
            return Err(ExpertsError::NoExperts);
        }
        if horizon == 0 {
            return Err(ExpertsError::ZeroHorizon);
        }
        let learning_rate = (8.0 * (expert_count as f64).ln() / horizon as f64).sqrt();
        Ok(Self {
            log_weights: vec![0.0; expert_count],
            learning_rate,
            horizon,
            expert_count,
        })
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Softmax of the log weights; sums to 1.
    pub fn distribution(&self) -> Vec<f64> {
        let max = self
            .log_weights
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let unnormalized: Vec<f64> = self.log_weights.iter().map(|lw| (lw - max).exp()).collect();
        let total: f64 = unnormalized.iter().sum();
        unnormalized.into_iter().map(|w| w / total).collect()
    }
}

impl ExpertAlgorithm for HedgeState {
    fn expert_count(&self) -> usize {
        self.expert_count
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let distribution = self.distribution();
        let draw: f64 = rng.gen();
        let mut cumulative = 0.0;
        for (i, p) in distribution.iter().enumerate() {
            cumulative += p;
            if draw < cumulative {
                return i;
            }
        }
        self.expert_count - 1
    }

    fn update(&mut self, reward: &RewardFunction) -> Result<(), ExpertsError> {
        if reward.len() != self.expert_count {
            return Err(ExpertsError::RewardSizeMismatch {
                got: reward.len(),
                want: self.expert_count,
            });
        }
        for (lw, r) in self.log_weights.iter_mut().zip(reward.values()) {
            *lw += self.learning_rate * r;
        }
        Ok(())
    }
}

/// Deterministic follow-the-leader: plays the expert with the highest
/// cumulative reward, breaking ties toward the lowest index. Used by the
/// exact-expectation harness, where sampling must be degenerate.
#[derive(Debug, Clone)]
pub struct FollowTheLeader {
    cumulative: Vec<f64>,
}

impl FollowTheLeader {
    pub fn init(expert_count: usize) -> Result<Self, ExpertsError> {
        if expert_count == 0 {
            return Err(ExpertsError::NoExperts);
        }
        Ok(Self { cumulative: vec![0.0; expert_count] })
    }

    pub fn leader(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.cumulative.iter().enumerate() {
            if c > self.cumulative[best] {
                best = i;
            }
        }
        best
    }
}

impl ExpertAlgorithm for FollowTheLeader {
    fn expert_count(&self) -> usize {
        self.cumulative.len()
    }

    fn sample(&self, _rng: &mut ChaCha8Rng) -> usize {
        self.leader()
    }

    fn update(&mut self, reward: &RewardFunction) -> Result<(), ExpertsError> {
        if reward.len() != self.cumulative.len() {
            return Err(ExpertsError::RewardSizeMismatch {
                got: reward.len(),
                want: self.cumulative.len(),
            });
        }
        for (c, r) in self.cumulative.iter_mut().zip(reward.values()) {
            *c += r;
        }
        Ok(())
    }
}

/// Private i.i.d. Bernoulli coins deciding which rounds feed the learner.
/// The whole sequence is drawn up front from the gate's own stream.
#[derive(Debug, Clone)]
pub struct SparseGate {
    rho: f64,
    coins: Vec<bool>,
}

impl SparseGate {
    pub fn new(rho: f64, horizon: usize, rng: &mut ChaCha8Rng) -> Result<Self, ExpertsError> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(ExpertsError::BadGateProbability(rho));
        }
        let coins = (0..horizon).map(|_| rng.gen::<f64>() < rho).collect();
        Ok(Self { rho, coins })
    }

    /// A gate with a fixed scripted coin sequence (tests and overrides).
    pub fn scripted(rho: f64, coins: Vec<bool>) -> Result<Self, ExpertsError> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(ExpertsError::BadGateProbability(rho));
        }
        Ok(Self { rho, coins })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn coins(&self) -> &[bool] {
        &self.coins
    }

    pub fn coin(&self, round_index: usize) -> Result<bool, ExpertsError> {
        self.coins
            .get(round_index)
            .copied()
            .ok_or(ExpertsError::GateExhausted(round_index))
    }
}

/// Wraps an expert algorithm so the inner learner sees `xi_t * r_t`: an
/// all-zeros reward on gated-off rounds, never a skipped round, keeping
/// round indices aligned with any time-indexed schedule inside.
#[derive(Debug, Clone)]
pub struct SparseWrapped<L> {
    inner: L,
    gate: SparseGate,
    cursor: usize,
}

pub fn sparse_wrap<L: ExpertAlgorithm>(inner: L, gate: SparseGate) -> SparseWrapped<L> {
    SparseWrapped { inner, gate, cursor: 0 }
}

impl<L: ExpertAlgorithm> SparseWrapped<L> {
    pub fn gate(&self) -> &SparseGate {
        &self.gate
    }

    pub fn inner(&self) -> &L {
        &self.inner
    }

    /// Coin for the round the next `update` call will consume.
    pub fn upcoming_coin(&self) -> Result<bool, ExpertsError> {
        self.gate.coin(self.cursor)
    }
}

impl<L: ExpertAlgorithm> ExpertAlgorithm for SparseWrapped<L> {
    fn expert_count(&self) -> usize {
        self.inner.expert_count()
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        self.inner.sample(rng)
    }

    fn update(&mut self, reward: &RewardFunction) -> Result<(), ExpertsError> {
        let open = self.gate.coin(self.cursor)?;
        self.cursor += 1;
        if open {
            self.inner.update(reward)
        } else {
            self.inner.update(&RewardFunction::zeros(self.inner.expert_count()))
        }
    }
}

/// Hindsight-best expert and its cumulative reward; ties break toward the
/// lowest expert index.
pub fn hindsight_best(trace: &[(usize, RewardFunction)]) -> Result<(usize, f64), ExpertsError> {
    let first = trace.first().ok_or(ExpertsError::EmptyTrace)?;
    let experts = first.1.len();
    let mut totals = vec![0.0; experts];
    for (_, reward) in trace {
        if reward.len() != experts {
            return Err(ExpertsError::RewardSizeMismatch { got: reward.len(), want: experts });
        }
        for (t, r) in totals.iter_mut().zip(reward.values()) {
            *t += r;
        }
    }
    let mut best = 0;
    for (i, &t) in totals.iter().enumerate() {
        if t > totals[best] {
            best = i;
        }
    }
    Ok((best, totals[best]))
}

/// Realized single-path expert regret:
/// `max_z sum_t r_t(z) - sum_t r_t(z_t)`.
pub fn expert_regret(trace: &[(usize, RewardFunction)]) -> Result<f64, ExpertsError> {
    let (_, best_total) = hindsight_best(trace)?;
    let realized: f64 = trace.iter().map(|(z, r)| r.get(*z)).sum();
    Ok(best_total - realized)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn hedge_init_is_uniform() {
        let hedge = HedgeState::init(4, 16).unwrap();
        for p in hedge.distribution() {
            assert!((p - 0.25).abs() < 1e-12);
        }
        let single = HedgeState::init(1, 16).unwrap();
        assert_eq!(single.distribution(), vec![1.0]);
        assert!(HedgeState::init(4, 0).is_err());
        assert!(HedgeState::init(0, 16).is_err());
    }

    #[test]
    fn hedge_update_symmetry_and_odds() {
        // identical rewards leave the distribution unchanged
        let mut hedge = HedgeState::init(3, 8).unwrap();
        hedge.update(&RewardFunction::new(vec![0.7, 0.7, 0.7]).unwrap()).unwrap();
        for p in hedge.distribution() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }

        // zero rewards leave the state unchanged
        let before = hedge.distribution();
        hedge.update(&RewardFunction::zeros(3)).unwrap();
        assert_eq!(before, hedge.distribution());

        // K=2, eta=1, rewards (1,0): odds ratio e : 1
        let mut hedge = HedgeState::init(2, 8).unwrap();
        hedge.learning_rate = 1.0;
        hedge.update(&RewardFunction::new(vec![1.0, 0.0]).unwrap()).unwrap();
        let d = hedge.distribution();
        let e = std::f64::consts::E;
        assert!((d[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((d[1] - 1.0 / (e + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn hedge_rejects_mismatched_reward() {
        let mut hedge = HedgeState::init(3, 8).unwrap();
        assert!(matches!(
            hedge.update(&RewardFunction::new(vec![0.5]).unwrap()),
            Err(ExpertsError::RewardSizeMismatch { .. })
        ));
    }

    #[test]
    fn hedge_sampling_is_deterministic_per_seed() {
        let hedge = HedgeState::init(8, 64).unwrap();
        let draw = |seed: u64| -> Vec<usize> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..32).map(|_| hedge.sample(&mut rng)).collect()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }

    #[test]
    fn sparse_gate_validation_and_scripting() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(SparseGate::new(0.0, 4, &mut rng).is_err());
        assert!(SparseGate::new(1.1, 4, &mut rng).is_err());
        let gate = SparseGate::scripted(0.5, vec![true, false, true]).unwrap();
        assert_eq!(gate.coins(), &[true, false, true]);
    }

    #[test]
    fn sparse_wrap_feeds_zeros_on_closed_rounds() {
        // scripted coins (1,0,1): inner sees (r1, 0, r3)
        let gate = SparseGate::scripted(0.5, vec![true, false, true]).unwrap();
        let mut wrapped = sparse_wrap(FollowTheLeader::init(2).unwrap(), gate);
        let r_one = RewardFunction::new(vec![0.0, 1.0]).unwrap();
        wrapped.update(&r_one).unwrap();
        wrapped.update(&RewardFunction::new(vec![1.0, 0.0]).unwrap()).unwrap();
        wrapped.update(&r_one).unwrap();
        // closed round 2 contributed nothing: totals are (0, 2)
        assert_eq!(wrapped.inner().cumulative, vec![0.0, 2.0]);
        // running past the scripted horizon errors
        assert!(matches!(
            wrapped.update(&r_one),
            Err(ExpertsError::GateExhausted(3))
        ));
    }

    #[test]
    fn fully_open_gate_is_an_exact_identity() {
        let horizon = 64;
        let mut gate_rng = ChaCha8Rng::seed_from_u64(9);
        let gate = SparseGate::new(1.0, horizon, &mut gate_rng).unwrap();
        let mut wrapped = sparse_wrap(HedgeState::init(4, horizon).unwrap(), gate);
        let mut plain = HedgeState::init(4, horizon).unwrap();
        let mut rng_a = ChaCha8Rng::seed_from_u64(17);
        let mut rng_b = ChaCha8Rng::seed_from_u64(17);
        let mut reward_rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..horizon {
            let reward = RewardFunction::from_revenues(
                (0..4).map(|_| reward_rng.gen::<f64>()),
            );
            assert_eq!(wrapped.sample(&mut rng_a), plain.sample(&mut rng_b));
            wrapped.update(&reward).unwrap();
            plain.update(&reward).unwrap();
        }
    }

    #[test]
    fn expert_regret_cases() {
        let r = |a: f64, b: f64| RewardFunction::new(vec![a, b]).unwrap();
        // all rewards equal -> 0
        let trace = vec![(0, r(0.5, 0.5)), (1, r(0.5, 0.5))];
        assert_eq!(expert_regret(&trace).unwrap(), 0.0);

        // worst play: picked expert 2 while expert 1 earns 1 each round
        let trace = vec![(1, r(1.0, 0.0)), (1, r(1.0, 0.0))];
        assert_eq!(expert_regret(&trace).unwrap(), 2.0);

        // hindsight-best play gives exactly zero
        let trace = vec![(0, r(1.0, 0.0)), (0, r(1.0, 0.5))];
        assert_eq!(expert_regret(&trace).unwrap(), 0.0);

        assert!(matches!(expert_regret(&[]), Err(ExpertsError::EmptyTrace)));
    }

    #[test]
    fn hindsight_ties_break_low() {
        let r = RewardFunction::new(vec![0.5, 0.5]).unwrap();
        let (best, _) = hindsight_best(&[(0, r)]).unwrap();
        assert_eq!(best, 0);
    }

    #[test]
    fn reward_function_validation() {
        assert!(RewardFunction::new(vec![]).is_err());
        assert!(RewardFunction::new(vec![1.5]).is_err());
        assert!(RewardFunction::new(vec![-0.1]).is_err());
        assert_eq!(RewardFunction::from_revenues([1.0 + 1e-12]).get(0), 1.0);
    }
}
