//! Online sketching: lazy projected gradient descent, the constructive
//! sketch builder, the reconstruction map, and enumeration of the expert
//! set of sketches.
//!
//! A sketch is a compressed pricing policy: a small set of round indices
//! with grid coefficients. Against a context history it reconstructs to a
//! weight vector via a normalized partial sum, so a seller can search over
//! sketches instead of the whole ball.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{inner_product, ContextVector, WeightVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SketchError {
    #[error("epsilon {0} must lie in (0, 1/2]")]
    EpsilonOutOfRange(f64),
    #[error("subgradient norm {0} exceeds 1")]
    SubgradientTooLarge(f64),
    #[error("grid step must be positive, got {0}")]
    BadGridStep(f64),
    #[error("support indices must be distinct, increasing and >= 1")]
    BadSupport,
    #[error("coefficient {coefficient} at round {round} falls outside the grid bound {bound}")]
    CoefficientOutOfRange { round: usize, coefficient: f64, bound: f64 },
    #[error("support size {got} exceeds the budget {budget}")]
    SupportTooLarge { got: usize, budget: usize },
    #[error("sketch set has at least {count_at_least} elements, over the cap {cap}")]
    CapExceeded { count_at_least: u128, cap: u128 },
    #[error("update loop exceeded {cap} iterations in one round; construction defect")]
    IterationCapExceeded { cap: usize },
    #[error("context dimension {got} does not match the target dimension {want}")]
    DimensionMismatch { got: usize, want: usize },
}

/// Coefficient magnitudes never exceed this bound.
pub const COEFFICIENT_BOUND: f64 = 2.0;

/// The family of sketches being enumerated or constructed: supports are
/// subsets of `1..=support_window` (itself capped at the horizon) of size at
/// most `max_support`, and coefficients are `k * grid_step` with
/// `|k| <= max_multiplier`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchSpace {
    pub horizon: usize,
    pub grid_step: f64,
    pub max_multiplier: i64,
    pub max_support: usize,
    pub support_window: usize,
}

impl SketchSpace {
    /// The standard family for a given accuracy: step `eps^2/8`,
    /// coefficients in `[-2,2]`, support budget `ceil(16/eps^2)`.
    pub fn standard(horizon: usize, epsilon: f64) -> Result<Self, SketchError> {
        check_epsilon(epsilon)?;
        let step = epsilon * epsilon / 8.0;
        let budget = (16.0 / (epsilon * epsilon)).ceil() as usize;
        Ok(Self {
            horizon,
            grid_step: step,
            max_multiplier: (COEFFICIENT_BOUND / step).floor() as i64,
            max_support: budget,
            support_window: horizon,
        })
    }

    /// Coarsened family used for exact-enumeration experiments; recorded as
    /// an override in run metadata.
    pub fn coarse(
        horizon: usize,
        grid_step: f64,
        max_multiplier: i64,
        max_support: usize,
        support_window: usize,
    ) -> Result<Self, SketchError> {
        if grid_step <= 0.0 || !grid_step.is_finite() {
            return Err(SketchError::BadGridStep(grid_step));
        }
        Ok(Self {
            horizon,
            grid_step,
            max_multiplier,
            max_support,
            support_window: support_window.min(horizon),
        })
    }

    /// Number of admissible coefficient values per support index.
    pub fn grid_cardinality(&self) -> u128 {
        2 * self.max_multiplier as u128 + 1
    }

    pub fn contains(&self, sketch: &Sketch) -> bool {
        sketch.grid_step() == self.grid_step
            && sketch.support().len() <= self.max_support
            && sketch.support().iter().all(|&t| t <= self.support_window)
            && sketch
                .multipliers()
                .iter()
                .all(|&k| k.abs() <= self.max_multiplier)
    }
}

fn check_epsilon(epsilon: f64) -> Result<(), SketchError> {
    if !(epsilon > 0.0 && epsilon <= 0.5) || !epsilon.is_finite() {
        return Err(SketchError::EpsilonOutOfRange(epsilon));
    }
    Ok(())
}

/// A compressed pricing policy: round indices with integer grid multipliers.
/// The coefficient at support index `tau` is `multiplier * grid_step`, so
/// serialization of the integers plus the step is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sketch {
    support: Vec<usize>,
    multipliers: Vec<i64>,
    grid_step: f64,
}

impl Sketch {
    pub fn new(
        support: Vec<usize>,
        multipliers: Vec<i64>,
        grid_step: f64,
    ) -> Result<Self, SketchError> {
        if grid_step <= 0.0 || !grid_step.is_finite() {
            return Err(SketchError::BadGridStep(grid_step));
        }
        if support.len() != multipliers.len() {
            return Err(SketchError::BadSupport);
        }
        if support.windows(2).any(|w| w[0] >= w[1]) || support.first().is_some_and(|&t| t == 0) {
            return Err(SketchError::BadSupport);
        }
        for (&t, &k) in support.iter().zip(&multipliers) {
            let coefficient = k as f64 * grid_step;
            if coefficient.abs() > COEFFICIENT_BOUND + 1e-12 {
                return Err(SketchError::CoefficientOutOfRange {
                    round: t,
                    coefficient,
                    bound: COEFFICIENT_BOUND,
                });
            }
        }
        Ok(Self { support, multipliers, grid_step })
    }

    pub fn empty(grid_step: f64) -> Self {
        Self { support: Vec::new(), multipliers: Vec::new(), grid_step }
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn multipliers(&self) -> &[i64] {
        &self.multipliers
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    /// `(round, coefficient)` pairs in increasing round order.
    pub fn coefficients(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.support
            .iter()
            .zip(&self.multipliers)
            .map(move |(&t, &k)| (t, k as f64 * self.grid_step))
    }

    /// Total coefficient mass in update steps; equals the number of
    /// constructive updates that produced the sketch.
    pub fn update_mass(&self) -> u64 {
        self.multipliers.iter().map(|k| k.unsigned_abs()).sum()
    }
}

/// Reconstruction map: the normalized partial sum
/// `sum_{tau in S, tau <= t} beta_tau x_tau / max(1, ||..||)` where `t` is
/// the length of the context prefix. Support indices beyond the prefix are
/// simply excluded, so the output depends only on the prefix.
pub fn reconstruct(sketch: &Sketch, contexts: &[ContextVector]) -> WeightVector {
    let t = contexts.len();
    let dim = contexts.first().map_or(0, ContextVector::dim);
    let mut sum = vec![0.0; dim];
    for (round, coefficient) in sketch.coefficients() {
        if round > t {
            break;
        }
        for (s, c) in sum.iter_mut().zip(contexts[round - 1].coords()) {
            *s += coefficient * c;
        }
    }
    WeightVector::project(&sum)
}

/// Lazy projected online gradient descent over the unit ball: gradients
/// accumulate in the unprojected iterate `u`, and the played point is the
/// projection `v = u / max(1, ||u||)`.
#[derive(Debug, Clone)]
pub struct LazyOgdState {
    u: Vec<f64>,
    v: WeightVector,
    step_size: f64,
    update_count: usize,
}

impl LazyOgdState {
    pub fn new(dim: usize, step_size: f64) -> Self {
        assert!(step_size > 0.0, "step size must be positive");
        Self {
            u: vec![0.0; dim],
            v: WeightVector::zero(dim),
            step_size,
            update_count: 0,
        }
    }

    pub fn iterate(&self) -> &WeightVector {
        &self.v
    }

    pub fn unprojected(&self) -> &[f64] {
        &self.u
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn update_count(&self) -> usize {
        self.update_count
    }

    /// One descent step `u -= beta * g` followed by the lazy projection.
    pub fn step(&mut self, subgradient: &[f64]) -> Result<(), SketchError> {
        if subgradient.len() != self.u.len() {
            return Err(SketchError::DimensionMismatch {
                got: subgradient.len(),
                want: self.u.len(),
            });
        }
        let norm = crate::domain::euclidean_norm(subgradient);
        if norm > 1.0 + crate::domain::TOLERANCE {
            return Err(SketchError::SubgradientTooLarge(norm));
        }
        for (u, g) in self.u.iter_mut().zip(subgradient) {
            *u -= self.step_size * g;
        }
        self.v = WeightVector::project(&self.u);
        self.update_count += 1;
        Ok(())
    }
}

/// Incremental sketch construction toward a fixed target weight.
///
/// At each ingested context the sketcher repeatedly steps its lazy descent
/// iterate until the price error `|<v,x_t> - <w,x_t>|` is at most
/// `eps^2/2`, accumulating the grid multiplier for the current round. The
/// snapshot after round `t` reconstructs exactly to the current iterate.
#[derive(Debug, Clone)]
pub struct OnlineSketcher {
    target: WeightVector,
    epsilon: f64,
    threshold: f64,
    state: LazyOgdState,
    support: Vec<usize>,
    multipliers: Vec<i64>,
    rounds_seen: usize,
    round_iteration_cap: usize,
}

impl OnlineSketcher {
    pub fn new(target: WeightVector, epsilon: f64) -> Result<Self, SketchError> {
        check_epsilon(epsilon)?;
        let step = epsilon * epsilon / 8.0;
        let budget = (16.0 / (epsilon * epsilon)).ceil() as usize;
        Ok(Self {
            state: LazyOgdState::new(target.dim(), step),
            target,
            epsilon,
            threshold: epsilon * epsilon / 2.0,
            support: Vec::new(),
            multipliers: Vec::new(),
            rounds_seen: 0,
            round_iteration_cap: 10 * budget,
        })
    }

    /// Processes the next round's context and returns the iterate to play.
    pub fn ingest(&mut self, context: &ContextVector) -> Result<WeightVector, SketchError> {
        if context.dim() != self.target.dim() {
            return Err(SketchError::DimensionMismatch {
                got: context.dim(),
                want: self.target.dim(),
            });
        }
        self.rounds_seen += 1;
        let want = inner_product(self.target.coords(), context.coords());
        let mut delta: i64 = 0;
        let mut iterations = 0usize;
        loop {
            let have = inner_product(self.state.iterate().coords(), context.coords());
            let err = have - want;
            if err.abs() <= self.threshold {
                break;
            }
            iterations += 1;
            if iterations > self.round_iteration_cap {
                return Err(SketchError::IterationCapExceeded { cap: self.round_iteration_cap });
            }
            // The loop only runs while |err| > eps^2/2 > 0, so the kink of
            // the absolute loss is never differentiated; sign(0) maps to +1
            // and is unreachable.
            debug_assert!(err != 0.0);
            let sign = if err >= 0.0 { 1.0 } else { -1.0 };
            let gradient: Vec<f64> = context.coords().iter().map(|c| sign * c).collect();
            self.state.step(&gradient)?;
            delta -= sign as i64;
        }
        if delta != 0 {
            // repeated updates at the same round accumulate into one coefficient
            self.support.push(self.rounds_seen);
            self.multipliers.push(delta);
        }
        Ok(self.state.iterate().clone())
    }

    pub fn updates(&self) -> usize {
        self.state.update_count()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Snapshot of the sketch accumulated so far.
    pub fn sketch(&self) -> Result<Sketch, SketchError> {
        Sketch::new(
            self.support.clone(),
            self.multipliers.clone(),
            self.state.step_size(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct SketchBuild {
    pub sketch: Sketch,
    pub updates: usize,
}

/// Runs the constructive procedure over a full context sequence.
pub fn construct_sketch(
    target: &WeightVector,
    contexts: &[ContextVector],
    epsilon: f64,
) -> Result<SketchBuild, SketchError> {
    let mut sketcher = OnlineSketcher::new(target.clone(), epsilon)?;
    for context in contexts {
        sketcher.ingest(context)?;
    }
    Ok(SketchBuild { sketch: sketcher.sketch()?, updates: sketcher.updates() })
}

/// Exact count of the sketch family via
/// `sum_s C(window, s) * grid^s`, saturating on overflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetSize {
    Exact(u128),
    Overflow,
}

impl SetSize {
    pub fn exceeds(&self, cap: u128) -> bool {
        match self {
            SetSize::Exact(n) => *n > cap,
            SetSize::Overflow => true,
        }
    }
}

pub fn count_sketch_set(space: &SketchSpace) -> SetSize {
    let window = space.support_window.min(space.horizon) as u128;
    let grid = space.grid_cardinality();
    let smax = (space.max_support as u128).min(window);
    let mut total: u128 = 0;
    let mut binom: u128 = 1; // C(window, s)
    let mut grid_pow: u128 = 1; // grid^s
    for s in 0..=smax {
        if s > 0 {
            binom = match binom
                .checked_mul(window - s + 1)
                .map(|v| v / s)
            {
                Some(v) => v,
                None => return SetSize::Overflow,
            };
            grid_pow = match grid_pow.checked_mul(grid) {
                Some(v) => v,
                None => return SetSize::Overflow,
            };
        }
        total = match binom
            .checked_mul(grid_pow)
            .and_then(|term| total.checked_add(term))
        {
            Some(v) => v,
            None => return SetSize::Overflow,
        };
    }
    SetSize::Exact(total)
}

/// Exhaustively enumerates the sketch family, deterministically: supports
/// in lexicographic order, coefficient tuples in row-major grid order
/// (last support index fastest). Errors before producing anything if the
/// count exceeds `cap`.
pub fn enumerate_sketch_set(space: &SketchSpace, cap: u128) -> Result<Vec<Sketch>, SketchError> {
    let size = count_sketch_set(space);
    if size.exceeds(cap) {
        let count_at_least = match size {
            SetSize::Exact(n) => n,
            SetSize::Overflow => u128::MAX,
        };
        return Err(SketchError::CapExceeded { count_at_least, cap });
    }
    let window = space.support_window.min(space.horizon);
    let mut out = Vec::new();
    let mut support = Vec::new();
    emit_supports(space, window, 1, &mut support, &mut out)?;
    Ok(out)
}

fn emit_supports(
    space: &SketchSpace,
    window: usize,
    next: usize,
    support: &mut Vec<usize>,
    out: &mut Vec<Sketch>,
) -> Result<(), SketchError> {
    emit_coefficients(space, support, out)?;
    if support.len() == space.max_support {
        return Ok(());
    }
    for t in next..=window {
        support.push(t);
        emit_supports(space, window, t + 1, support, out)?;
        support.pop();
    }
    Ok(())
}

fn emit_coefficients(
    space: &SketchSpace,
    support: &[usize],
    out: &mut Vec<Sketch>,
) -> Result<(), SketchError> {
    let s = support.len();
    if s == 0 {
        out.push(Sketch::empty(space.grid_step));
        return Ok(());
    }
    let mut multipliers = vec![-space.max_multiplier; s];
    loop {
        out.push(Sketch::new(
            support.to_vec(),
            multipliers.clone(),
            space.grid_step,
        )?);
        // odometer, last index fastest
        let mut pos = s;
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            if multipliers[pos] < space.max_multiplier {
                multipliers[pos] += 1;
                for m in multipliers.iter_mut().skip(pos + 1) {
                    *m = -space.max_multiplier;
                }
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TOLERANCE;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_context(rng: &mut ChaCha8Rng, dim: usize) -> ContextVector {
        loop {
            let coords: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            if let Ok(c) = ContextVector::normalized(coords) {
                return c;
            }
        }
    }

    fn ball_weight(rng: &mut ChaCha8Rng, dim: usize) -> WeightVector {
        let coords: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let norm = crate::domain::euclidean_norm(&coords);
        let radius = rng.gen::<f64>();
        let scale = if norm == 0.0 { 0.0 } else { radius / norm };
        WeightVector::new(coords.iter().map(|c| c * scale).collect()).unwrap()
    }

    #[test]
    fn reconstruct_empty_and_singleton() {
        let e1 = ContextVector::basis(2, 0);
        let empty = Sketch::empty(0.03125);
        assert_eq!(reconstruct(&empty, std::slice::from_ref(&e1)).coords(), &[0.0, 0.0]);

        // single unit term: beta_1 = 1 on x_1 = e_1
        let z = Sketch::new(vec![1], vec![32], 0.03125).unwrap();
        assert_eq!(reconstruct(&z, std::slice::from_ref(&e1)).coords(), &[1.0, 0.0]);

        // norm-2 sum rescales onto the sphere
        let z2 = Sketch::new(vec![1], vec![64], 0.03125).unwrap();
        assert_eq!(reconstruct(&z2, &[e1]).coords(), &[1.0, 0.0]);
    }

    #[test]
    fn reconstruct_is_prefix_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let contexts: Vec<ContextVector> = (0..6).map(|_| unit_context(&mut rng, 3)).collect();
        let z = Sketch::new(vec![2, 5], vec![10, -20], 0.03125).unwrap();
        // support index 5 is excluded from every prefix shorter than 5
        let v3 = reconstruct(&z, &contexts[..3]);
        let z_trunc = Sketch::new(vec![2], vec![10], 0.03125).unwrap();
        assert_eq!(v3, reconstruct(&z_trunc, &contexts[..3]));
        assert_ne!(reconstruct(&z, &contexts[..5]), v3);
    }

    #[test]
    fn lazy_ogd_step_cases() {
        let mut state = LazyOgdState::new(3, 0.1);
        state.step(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(state.unprojected(), &[-0.1, 0.0, 0.0]);
        assert_eq!(state.iterate().coords(), &[-0.1, 0.0, 0.0]);

        // zero gradient leaves everything but the count unchanged
        state.step(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(state.unprojected(), &[-0.1, 0.0, 0.0]);
        assert_eq!(state.update_count(), 2);

        // projection engages once ||u|| > 1
        let mut state = LazyOgdState::new(2, 0.2);
        for _ in 0..10 {
            state.step(&[1.0, 0.0]).unwrap();
        }
        assert!((state.unprojected()[0] + 2.0).abs() < 1e-12);
        assert!((state.iterate().coords()[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn lazy_ogd_rejects_oversized_subgradient() {
        let mut state = LazyOgdState::new(2, 0.1);
        assert!(matches!(
            state.step(&[1.0, 1.0]),
            Err(SketchError::SubgradientTooLarge(_))
        ));
    }

    #[test]
    fn construct_sketch_zero_target_is_empty() {
        let contexts = vec![ContextVector::basis(2, 0), ContextVector::basis(2, 1)];
        let build = construct_sketch(&WeightVector::zero(2), &contexts, 0.5).unwrap();
        assert!(build.sketch.support().is_empty());
        assert_eq!(build.updates, 0);
    }

    #[test]
    fn construct_sketch_one_dimensional_worked_case() {
        // d=1, x_t = 1, w = 0.5, eps = 0.5: threshold 0.125, step 0.03125.
        // Twelve consecutive updates at t=1 bring v to 0.375.
        let contexts: Vec<ContextVector> =
            (0..4).map(|_| ContextVector::new(vec![1.0]).unwrap()).collect();
        let target = WeightVector::new(vec![0.5]).unwrap();
        let build = construct_sketch(&target, &contexts, 0.5).unwrap();
        assert_eq!(build.updates, 12);
        assert!(build.updates <= 64);
        assert_eq!(build.sketch.support(), &[1]);
        assert_eq!(build.sketch.multipliers(), &[12]);
        let v = reconstruct(&build.sketch, &contexts[..1]);
        assert!((v.coords()[0] - 0.375).abs() < 1e-15);
    }

    #[test]
    fn construct_sketch_random_instances_meet_guarantee() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let epsilon: f64 = 0.3;
        let horizon = 200;
        let dim = 10;
        // the descent argument bounds total updates by 16/eps^4: each
        // update pays loss above eps^2/2 against the comparator bound
        // 4/eps^2 + (eps^2/4) M
        let budget = (16.0 / epsilon.powi(4)).ceil();
        let support_budget = (16.0 / (epsilon * epsilon)).ceil() as usize;
        let target = ball_weight(&mut rng, dim);
        let contexts: Vec<ContextVector> =
            (0..horizon).map(|_| unit_context(&mut rng, dim)).collect();
        let build = construct_sketch(&target, &contexts, epsilon).unwrap();
        assert!(build.updates as f64 <= budget, "updates {} over budget", build.updates);
        assert!(build.sketch.support().len() <= support_budget);
        assert_eq!(build.updates as u64, build.sketch.update_mass());
        // independent recomputation of the per-round guarantee via reconstruct
        for t in 1..=horizon {
            let v = reconstruct(&build.sketch, &contexts[..t]);
            let err = (inner_product(v.coords(), contexts[t - 1].coords())
                - inner_product(target.coords(), contexts[t - 1].coords()))
            .abs();
            assert!(
                err <= epsilon * epsilon / 2.0 + TOLERANCE,
                "round {t}: error {err}"
            );
        }
    }

    #[test]
    fn incremental_iterate_matches_reconstruct() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let target = ball_weight(&mut rng, 4);
        let mut sketcher = OnlineSketcher::new(target, 0.4).unwrap();
        let mut contexts = Vec::new();
        for _ in 0..50 {
            let ctx = unit_context(&mut rng, 4);
            contexts.push(ctx.clone());
            let played = sketcher.ingest(&ctx).unwrap();
            let snapshot = sketcher.sketch().unwrap();
            let rebuilt = reconstruct(&snapshot, &contexts);
            for (a, b) in played.coords().iter().zip(rebuilt.coords()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn enumerate_tiny_families() {
        // T=1, grid {-g, 0, g}, |S| <= 1: empty plus three singletons
        let space = SketchSpace::coarse(1, 0.5, 1, 1, 1).unwrap();
        let sketches = enumerate_sketch_set(&space, 100).unwrap();
        assert_eq!(sketches.len(), 4);
        assert_eq!(count_sketch_set(&space), SetSize::Exact(4));

        // T=2, same grid, |S| <= 2: 1 + 2*3 + 9 = 16
        let space = SketchSpace::coarse(2, 0.5, 1, 2, 2).unwrap();
        let sketches = enumerate_sketch_set(&space, 100).unwrap();
        assert_eq!(sketches.len(), 16);
        assert_eq!(count_sketch_set(&space), SetSize::Exact(16));

        // deterministic order: empty first, then supports lexicographically
        assert!(sketches[0].support().is_empty());
        assert_eq!(sketches[1].support(), &[1]);

        // support budget zero leaves only the empty sketch
        let space = SketchSpace::coarse(5, 0.5, 3, 0, 5).unwrap();
        assert_eq!(count_sketch_set(&space), SetSize::Exact(1));
        assert_eq!(enumerate_sketch_set(&space, 10).unwrap().len(), 1);
    }

    #[test]
    fn enumeration_cardinality_matches_count() {
        let space = SketchSpace::coarse(4, 0.25, 2, 2, 4).unwrap();
        let sketches = enumerate_sketch_set(&space, 1_000_000).unwrap();
        assert_eq!(SetSize::Exact(sketches.len() as u128), count_sketch_set(&space));
        // all distinct
        let mut keys: Vec<String> = sketches.iter().map(|z| format!("{z:?}")).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), sketches.len());
    }

    #[test]
    fn full_family_is_infeasible_at_moderate_scale() {
        // eps = 0.5 gives 129 grid points per coordinate; T = 20 explodes
        let space = SketchSpace::standard(20, 0.5).unwrap();
        assert_eq!(space.grid_cardinality(), 129);
        match enumerate_sketch_set(&space, 1_000_000) {
            Err(SketchError::CapExceeded { count_at_least, .. }) => {
                assert!(count_at_least > 1_000_000);
            }
            other => panic!("expected CapExceeded, got {other:?}"),
        }
    }

    #[test]
    fn standard_space_budgets() {
        let space = SketchSpace::standard(100, 0.5).unwrap();
        assert_eq!(space.max_support, 64);
        assert!((space.grid_step - 0.03125).abs() < 1e-15);
        assert_eq!(space.max_multiplier, 64);
    }

    #[test]
    fn sketch_validation() {
        assert!(Sketch::new(vec![1, 1], vec![0, 0], 0.1).is_err());
        assert!(Sketch::new(vec![2, 1], vec![0, 0], 0.1).is_err());
        assert!(Sketch::new(vec![1], vec![0, 0], 0.1).is_err());
        assert!(Sketch::new(vec![1], vec![30], 0.1).is_err()); // 3.0 > 2
        assert!(Sketch::new(vec![1], vec![20], 0.1).is_ok());
    }
}
