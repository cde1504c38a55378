//! Stand-alone verifiers for every desk-checkable bound the sellers rest
//! on. Each verifier generates its own instances, runs an oracle that is
//! deliberately independent of the main code path it exercises, and emits
//! a machine-readable report with the measured quantity, the analytic
//! bound, and the margin.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::agents::exact::{
    evaluate_profile, ExactInstance, ExactSellerSpec, ExactStrategy, StrategyTree,
};
use crate::agents::{compute_delta, compute_rho};
use crate::domain::{euclidean_norm, inner_product, ContextVector, RoundPartition, WeightVector};
use crate::environment::sample_unit_sphere;
use crate::experts::{
    expert_regret, sparse_wrap, ExpertAlgorithm, HedgeState, RewardFunction, SparseGate,
};
use crate::sketch::{construct_sketch, reconstruct, LazyOgdState, Sketch};

/// One measured inequality.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub label: String,
    pub measured: f64,
    pub bound: f64,
    pub margin: f64,
    pub passed: bool,
}

impl Check {
    /// `measured <= bound` within a hair of floating-point slack.
    fn upper(label: impl Into<String>, measured: f64, bound: f64) -> Self {
        let passed = measured <= bound + 1e-9;
        Self { label: label.into(), measured, bound, margin: bound - measured, passed }
    }

    /// `|measured - bound| <= tolerance`.
    fn equal(label: impl Into<String>, measured: f64, bound: f64, tolerance: f64) -> Self {
        let passed = (measured - bound).abs() <= tolerance;
        Self {
            label: label.into(),
            measured,
            bound,
            margin: tolerance - (measured - bound).abs(),
            passed,
        }
    }
}

/// A verifier's full output; serializes to JSON for the summary files.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub verifier: String,
    pub seed: u64,
    pub params: serde_json::Value,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub passed: bool,
}

impl Report {
    fn new(verifier: &str, seed: u64, params: serde_json::Value) -> Self {
        Self {
            verifier: verifier.to_string(),
            seed,
            params,
            checks: Vec::new(),
            notes: Vec::new(),
            passed: true,
        }
    }

    fn push(&mut self, check: Check) {
        self.passed &= check.passed;
        self.checks.push(check);
    }

    fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn worst_margin(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| c.margin)
            .fold(f64::INFINITY, f64::min)
    }
}

fn ball_weight(rng: &mut ChaCha8Rng, dim: usize) -> WeightVector {
    let direction = sample_unit_sphere(rng, dim);
    let radius: f64 = rng.gen::<f64>();
    WeightVector::new(direction.coords().iter().map(|c| c * radius).collect())
        .expect("scaled direction lies in the ball")
}

/// Sketch fidelity: on random and adversarial instances the constructed
/// sketch must satisfy the per-round price-error bound within its update
/// budget, with the error recomputed independently through `reconstruct`.
pub fn verify_online_sketch(
    trials: usize,
    horizon: usize,
    dim: usize,
    epsilon: f64,
    seed: u64,
) -> Report {
    let mut report = Report::new(
        "online-sketch",
        seed,
        json!({ "trials": trials, "horizon": horizon, "dim": dim, "epsilon": epsilon }),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nominal_budget = (16.0 / (epsilon * epsilon)).ceil();
    let derived_budget = (16.0 / epsilon.powi(4)).ceil();
    let support_budget = (16.0 / (epsilon * epsilon)).ceil();
    let tight = epsilon * epsilon / 2.0;
    let stated = epsilon * epsilon;
    let family = crate::sketch::SketchSpace::standard(1_000_000, epsilon)
        .expect("valid epsilon");

    let mut worst_error = 0.0f64;
    let mut worst_updates = 0usize;
    let mut worst_support = 0usize;
    let mut family_violations = 0usize;
    let mut run_instance = |target: &WeightVector, contexts: &[ContextVector]| {
        let build = construct_sketch(target, contexts, epsilon).expect("construction terminates");
        worst_updates = worst_updates.max(build.updates);
        worst_support = worst_support.max(build.sketch.support().len());
        if !family.contains(&build.sketch) {
            family_violations += 1;
        }
        for t in 1..=contexts.len() {
            let v = reconstruct(&build.sketch, &contexts[..t]);
            let err = (inner_product(v.coords(), contexts[t - 1].coords())
                - inner_product(target.coords(), contexts[t - 1].coords()))
            .abs();
            worst_error = worst_error.max(err);
        }
    };

    // zero target: no updates, zero error
    let zero_contexts: Vec<ContextVector> = (0..horizon.min(16))
        .map(|_| sample_unit_sphere(&mut rng, dim))
        .collect();
    let zero_build = construct_sketch(&WeightVector::zero(dim), &zero_contexts, epsilon).unwrap();
    report.push(Check::upper("zero-target updates", zero_build.updates as f64, 0.0));

    // alternating-sign adversarial contexts on one axis
    let adversarial: Vec<ContextVector> = (0..horizon)
        .map(|t| {
            let mut c = vec![0.0; dim];
            c[0] = if t % 2 == 0 { 1.0 } else { -1.0 };
            ContextVector::new(c).unwrap()
        })
        .collect();
    let mut high = vec![0.0; dim];
    high[0] = 0.9;
    run_instance(&WeightVector::new(high).unwrap(), &adversarial);

    for _ in 0..trials {
        let target = ball_weight(&mut rng, dim);
        let contexts: Vec<ContextVector> = (0..horizon)
            .map(|_| sample_unit_sphere(&mut rng, dim))
            .collect();
        run_instance(&target, &contexts);
    }

    report.push(Check::upper("worst per-round error vs stated bound", worst_error, stated));
    report.push(Check::upper("worst per-round error vs constructive bound", worst_error, tight));
    // the descent argument pays more than eps^2/2 of loss per update
    // against the comparator bound 4/eps^2 + (eps^2/4) M, so the provable
    // update budget is 16/eps^4
    report.push(Check::upper(
        "worst update count vs derived budget 16/eps^4",
        worst_updates as f64,
        derived_budget,
    ));
    report.push(Check::upper(
        "worst support size vs family budget 16/eps^2",
        worst_support as f64,
        support_budget,
    ));
    report.push(Check::upper("sketches outside the standard family", family_violations as f64, 0.0));
    report.note(format!(
        "constructive threshold {tight} is half the stated bound {stated}; both reported"
    ));
    report.note(format!(
        "nominal update budget 16/eps^2 = {nominal_budget}: worst observed {worst_updates} \
({}); the derived budget is what the descent argument supports",
        if (worst_updates as f64) <= nominal_budget { "met" } else { "exceeded" }
    ));
    report
}

/// Projected-lazy-descent regret: against adversarial unit-subgradient
/// absolute losses, the regret to every comparator on a ball grid stays
/// within `(2 beta)^-1 + 2 beta M` plus the grid-resolution margin.
pub fn verify_lazy_ogd(trials: usize, updates: usize, beta: f64, seed: u64) -> Report {
    let mut report = Report::new(
        "lazy-ogd",
        seed,
        json!({ "trials": trials, "updates": updates, "beta": beta }),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 2;
    let resolution = 1e-2;
    let bound = 0.5 / beta + 2.0 * beta * updates as f64;
    let grid_margin = updates as f64 * resolution * (dim as f64).sqrt() / 2.0;

    // comparator grid over the 2-ball
    let steps = (1.0 / resolution) as i64;
    let mut comparators = Vec::new();
    for i in -steps..=steps {
        for j in -steps..=steps {
            let v = [i as f64 * resolution, j as f64 * resolution];
            if v[0] * v[0] + v[1] * v[1] <= 1.0 + 1e-12 {
                comparators.push(v);
            }
        }
    }

    // constant loss |<v, e1>|: the zero comparator has zero loss, so the
    // realized loss sum is itself a regret value that must obey the bound
    {
        let mut state = LazyOgdState::new(dim, beta);
        let mut realized = 0.0;
        for _ in 0..updates {
            let value = state.iterate().coords()[0];
            realized += value.abs();
            let sign = if value >= 0.0 { 1.0 } else { -1.0 };
            state.step(&[sign, 0.0]).unwrap();
        }
        report.push(Check::upper("constant-loss regret vs zero comparator", realized, bound));
    }

    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let mut state = LazyOgdState::new(dim, beta);
        let mut losses: Vec<([f64; 2], f64)> = Vec::with_capacity(updates);
        let mut realized = 0.0;
        for i in 0..updates {
            // adversarial sign-flipping absolute loss |<v,x> - c|: the
            // target c runs away from the current iterate
            let direction = sample_unit_sphere(&mut rng, dim);
            let x = [direction.coords()[0], direction.coords()[1]];
            let current = inner_product(state.iterate().coords(), &x);
            let span = 0.9;
            let c = (if i % 2 == 0 { current + span } else { current - span }).clamp(-1.0, 1.0);
            let err = current - c;
            realized += err.abs();
            losses.push((x, c));
            let sign = if err >= 0.0 { 1.0 } else { -1.0 };
            state.step(&[sign * x[0], sign * x[1]]).unwrap();
        }
        for comparator in &comparators {
            let comparator_loss: f64 = losses
                .iter()
                .map(|(x, c)| (inner_product(comparator, x) - c).abs())
                .sum();
            worst = worst.max(realized - comparator_loss);
        }
    }
    report.push(Check::upper(
        "adversarial regret vs best grid comparator",
        worst,
        bound + grid_margin,
    ));
    report.note(format!("grid margin {grid_margin} added for the 1e-2 comparator grid"));
    report
}

/// Random-pricing cost: the average utility loss of a non-truthful bid
/// under a uniform price matches `(theta - bid)^2 / 2`, checked by Monte
/// Carlo within four standard errors and by the closed-form integral.
pub fn verify_random_pricing(theta: f64, bid: f64, samples: usize, seed: u64) -> Report {
    let mut report = Report::new(
        "random-pricing",
        seed,
        json!({ "theta": theta, "bid": bid, "samples": samples }),
    );
    let expected = 0.5 * (theta - bid) * (theta - bid);

    // analytic oracle: integrate both truncated triangles exactly
    let truthful_integral = theta * theta / 2.0;
    let bid_integral = theta * bid - bid * bid / 2.0;
    let analytic = truthful_integral - bid_integral;
    report.push(Check::equal("analytic integral vs closed form", analytic, expected, 1e-12));

    // Monte Carlo oracle
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let price: f64 = rng.gen();
        let truthful = if price <= theta { theta - price } else { 0.0 };
        let strategic = if price <= bid { theta - price } else { 0.0 };
        let gap = truthful - strategic;
        sum += gap;
        sum_sq += gap * gap;
    }
    let n = samples as f64;
    let mean = sum / n;
    let variance = (sum_sq / n - mean * mean).max(0.0);
    let std_error = (variance / n).sqrt();
    let tolerance = 4.0 * std_error + 1e-12;
    report.push(Check::equal(
        "monte carlo gap vs closed form (4 sigma)",
        mean,
        expected,
        tolerance,
    ));
    report.note(format!("std error {std_error}"));
    report
}

fn max_candidate_revenue_1d(prices: &[f64], values: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for &q in prices {
        if q <= 0.0 {
            continue;
        }
        let total: f64 = values
            .iter()
            .map(|&v| if v >= q - 1e-12 { q } else { 0.0 })
            .sum();
        best = best.max(total);
    }
    best
}

fn max_candidate_revenue(
    candidates: &[Vec<f64>],
    contexts: &[ContextVector],
    values: &[f64],
) -> f64 {
    let mut best = 0.0f64;
    for w in candidates {
        let mut total = 0.0;
        for (x, &v) in contexts.iter().zip(values) {
            let q = inner_product(w, x.coords());
            if q > 0.0 && v >= q - 1e-12 {
                total += q;
            }
        }
        best = best.max(total);
    }
    best
}

/// Revenue stability under bounded bid perturbations: the hindsight
/// optimum against true values exceeds the optimum against bids by at most
/// `2 sqrt(delta) T`. Sups are brute-forced over candidate-augmented grids
/// built here, not through the protocol's oracle.
pub fn verify_revenue_stability(trials: usize, horizon: usize, delta: f64, seed: u64) -> Report {
    let mut report = Report::new(
        "revenue-stability",
        seed,
        json!({ "trials": trials, "horizon": horizon, "delta": delta }),
    );
    assert!((0.0..=0.25).contains(&delta), "delta must lie in [0, 1/4]");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slack = 2.0 * delta.sqrt() * horizon as f64;
    let shrink = 1.0 - delta.sqrt();

    // exact-equality case: identical bids, identical sups
    {
        let values: Vec<f64> = (0..horizon).map(|_| rng.gen()).collect();
        let mut candidates: Vec<f64> = values.clone();
        candidates.extend((0..=1000).map(|k| k as f64 / 1000.0));
        let a = max_candidate_revenue_1d(&candidates, &values);
        let b = max_candidate_revenue_1d(&candidates, &values);
        report.push(Check::equal("delta=0 sups coincide", a, b, 0.0));
    }

    // adversarial sale-breaking perturbation: values just above a common
    // price, bids at it
    {
        let p_star = 0.5;
        let values = vec![(p_star + delta).min(1.0); horizon];
        let bids = vec![p_star; horizon];
        let mut truth_candidates: Vec<f64> = values.clone();
        truth_candidates.push(p_star);
        let mut bid_candidates = truth_candidates.clone();
        bid_candidates.extend(truth_candidates.iter().map(|c| c * shrink));
        let sup_truth = max_candidate_revenue_1d(&truth_candidates, &values);
        let sup_bids = max_candidate_revenue_1d(&bid_candidates, &bids);
        report.push(Check::upper("sale-breaking instance", sup_truth, sup_bids + slack));
    }

    let mut worst_violation = f64::NEG_INFINITY;
    for trial in 0..trials {
        let dim = if trial % 2 == 0 { 1 } else { 2 };
        let contexts: Vec<ContextVector> = (0..horizon)
            .map(|_| sample_unit_sphere(&mut rng, dim))
            .collect();
        let values: Vec<f64> = (0..horizon).map(|_| rng.gen()).collect();
        let bids: Vec<f64> = values
            .iter()
            .map(|&v| {
                let noise = rng.gen::<f64>() * 2.0 - 1.0;
                (v + delta * noise).clamp(0.0, 1.0)
            })
            .collect();

        // candidate weights: a coarse grid plus every weight that prices a
        // round exactly at its value or bid, plus their shrunk copies on
        // the bid side (the stability argument's witness)
        let mut candidates: Vec<Vec<f64>> = Vec::new();
        if dim == 1 {
            for k in -200..=200i64 {
                candidates.push(vec![k as f64 / 200.0]);
            }
        } else {
            for i in -20..=20i64 {
                for j in -20..=20i64 {
                    let w = vec![i as f64 / 20.0, j as f64 / 20.0];
                    if euclidean_norm(&w) <= 1.0 + 1e-12 {
                        candidates.push(w);
                    }
                }
            }
        }
        for (x, (&v, &b)) in contexts.iter().zip(values.iter().zip(&bids)) {
            for scale in [v, b] {
                candidates.push(x.coords().iter().map(|c| c * scale).collect());
            }
        }
        let mut bid_candidates = candidates.clone();
        bid_candidates.extend(
            candidates
                .iter()
                .map(|w| w.iter().map(|c| c * shrink).collect::<Vec<f64>>()),
        );

        let sup_truth = max_candidate_revenue(&candidates, &contexts, &values);
        let sup_bids = max_candidate_revenue(&bid_candidates, &contexts, &bids);
        worst_violation = worst_violation.max(sup_truth - sup_bids - slack);
    }
    report.push(Check::upper("worst random-instance violation", worst_violation, 0.0));
    report
}

/// Adaptive full-information reward adversary: punishes frequently played
/// experts and mixes in seeded noise. Fixed rule, deterministic per seed.
pub struct AdaptiveRewardAdversary {
    counts: Vec<f64>,
    total: f64,
    rng: ChaCha8Rng,
}

impl AdaptiveRewardAdversary {
    pub fn new(experts: usize, seed: u64) -> Self {
        Self {
            counts: vec![0.0; experts],
            total: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Reward function for the coming round, a function of past plays only.
    pub fn next_reward(&mut self) -> RewardFunction {
        let values: Vec<f64> = self
            .counts
            .iter()
            .map(|&c| {
                let frequency = if self.total > 0.0 { c / self.total } else { 0.0 };
                let noise: f64 = self.rng.gen();
                (0.6 * (1.0 - frequency) + 0.4 * noise).clamp(0.0, 1.0)
            })
            .collect();
        RewardFunction::from_revenues(values)
    }

    pub fn observe(&mut self, choice: usize) {
        self.counts[choice] += 1.0;
        self.total += 1.0;
    }
}

/// Runs one learner against the adaptive adversary and returns realized
/// expert regret.
pub fn play_adversarial_rewards<L: ExpertAlgorithm>(
    learner: &mut L,
    horizon: usize,
    adversary: &mut AdaptiveRewardAdversary,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let mut trace = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let reward = adversary.next_reward();
        let choice = learner.sample(rng);
        learner.update(&reward).expect("reward covers all experts");
        adversary.observe(choice);
        trace.push((choice, reward));
    }
    expert_regret(&trace).expect("nonempty trace")
}

/// Sparse-feedback overhead: the gated learner's mean regret over
/// replications stays within
/// `rho^-1 sqrt(rho T ln K / 2) + 4 sqrt(rho^-1 T ln(K T))`.
pub fn verify_sparse_regret(
    rho: f64,
    experts: usize,
    horizon: usize,
    replications: usize,
    seed: u64,
) -> Report {
    let mut report = Report::new(
        "sparse-regret",
        seed,
        json!({
            "rho": rho,
            "experts": experts,
            "horizon": horizon,
            "replications": replications
        }),
    );
    let t = horizon as f64;
    let k = experts as f64;
    let bound = (rho * t * k.ln() / 2.0).sqrt() / rho + 4.0 * (t * (k * t).ln() / rho).sqrt();

    let mut total = 0.0;
    for replication in 0..replications {
        let rep_seed = seed
            .wrapping_mul(0x9e3779b97f4a7c15)
            .wrapping_add(replication as u64);
        let mut gate_rng = ChaCha8Rng::seed_from_u64(rep_seed ^ 0xA5A5);
        let gate = SparseGate::new(rho, horizon, &mut gate_rng).expect("valid rho");
        let mut learner = sparse_wrap(HedgeState::init(experts, horizon).unwrap(), gate);
        let mut adversary = AdaptiveRewardAdversary::new(experts, rep_seed ^ 0x5A5A);
        let mut play_rng = ChaCha8Rng::seed_from_u64(rep_seed ^ 0x3C3C);
        total += play_adversarial_rewards(&mut learner, horizon, &mut adversary, &mut play_rng);
    }
    let mean = total / replications as f64;
    report.push(Check::upper("mean wrapped regret", mean, bound));
    report
}

/// Misreport deterrence: on an exact tiny instance, a strategy that
/// misreports by `m > delta` at the first round loses to its
/// truthful-switch counterpart by at least the analytic margin
/// `eps m^2 gamma^(t*-1) / 2 - rho gamma^(t*) / (1-gamma)`.
pub fn verify_truthfulness_incentive(
    epsilon: f64,
    gamma_bar: f64,
    horizon: usize,
    seed: u64,
) -> Report {
    let mut report = Report::new(
        "truthfulness-incentive",
        seed,
        json!({ "epsilon": epsilon, "gamma_bar": gamma_bar, "horizon": horizon }),
    );
    let rho = compute_rho(epsilon, gamma_bar);
    let delta = compute_delta(epsilon, gamma_bar, rho);
    report.note(format!("rho {rho}, delta {delta}"));

    let theta = 0.8;
    let horizon = horizon.clamp(2, 6);
    let contexts: Vec<ContextVector> = (0..horizon)
        .map(|_| ContextVector::new(vec![1.0]).unwrap())
        .collect();
    let values = vec![theta; horizon];
    // two experts, free and half pricing: the leader can be steered by
    // bids, which is exactly the influence channel being bounded
    let step = epsilon * epsilon / 8.0;
    let half_multiplier = (0.5 / step).round() as i64;
    let experts = vec![
        Sketch::empty(step),
        Sketch::new(vec![1], vec![half_multiplier], step).unwrap(),
    ];
    let instance = |rho: f64| ExactInstance {
        contexts: contexts.clone(),
        values: values.clone(),
        partition: RoundPartition::single(horizon),
        gammas: vec![gamma_bar],
        seller: ExactSellerSpec::SparseFtl { epsilon, rho, experts: experts.clone() },
    };

    let future = rho * gamma_bar / (1.0 - gamma_bar);
    let mut in_scope = 0;
    for factor in [2.0, 4.0, 8.0] {
        let m = delta * factor;
        if m > theta || m < 1e-12 {
            continue;
        }
        if m <= delta {
            report.note(format!("misreport {m} <= delta: out of lemma scope, no claim"));
            continue;
        }
        in_scope += 1;
        let mut bids = vec![theta; horizon];
        bids[0] = theta - m;
        let misreporting = ExactStrategy::Tree(StrategyTree::constant_bids(&bids));
        let switched =
            ExactStrategy::Tree(StrategyTree::constant_bids(&bids).with_truthful_at(0, theta));
        let inst = instance(rho);
        let u_misreport = evaluate_profile(&inst, &[misreporting]).unwrap().buyer_utilities[0];
        let u_switched = evaluate_profile(&inst, &[switched]).unwrap().buyer_utilities[0];
        let measured = u_misreport - u_switched;
        let bound = -epsilon * m * m / 2.0 + future;
        report.push(Check::upper(
            format!("coupled gain at misreport {m:.6}"),
            measured,
            bound,
        ));
        report.push(Check::upper(format!("strict loss at misreport {m:.6}"), measured, 0.0));
    }
    if in_scope == 0 {
        report.note("all probed misreports were out of scope".to_string());
    }

    // with the influence channel closed, the loss is exactly the random
    // pricing cost
    let m = 0.3;
    let mut bids = vec![theta; horizon];
    bids[0] = theta - m;
    let inst = instance(0.0);
    let u_misreport =
        evaluate_profile(&inst, &[ExactStrategy::Tree(StrategyTree::constant_bids(&bids))])
            .unwrap()
            .buyer_utilities[0];
    let u_truthful =
        evaluate_profile(&inst, &[ExactStrategy::Truthful]).unwrap().buyer_utilities[0];
    report.push(Check::equal(
        "no-channel loss equals eps * m^2 / 2",
        u_misreport - u_truthful,
        -epsilon * m * m / 2.0,
        1e-12,
    ));
    report
}
