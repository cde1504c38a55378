//! Context-value generators. An environment observes contexts, posted
//! prices, revealed weights and true values, never bids; the view type
//! simply has no bid field, so the exclusion is structural.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::domain::{ContextVector, DomainError, TrueValue};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvironmentError {
    #[error("fixed sequence exhausted after {0} rounds")]
    SequenceExhausted(usize),
    #[error("fixed sequence is empty")]
    EmptySequence,
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// The environment's information set at the start of a round: contexts,
/// posted prices, revealed weights and the values it generated itself, all
/// from completed rounds. Bids are excluded at the type level: there is no
/// field that could carry them.
#[derive(Debug, Clone, Copy, Default)]
pub struct EnvironmentView<'a> {
    pub contexts: &'a [ContextVector],
    pub prices: &'a [f64],
    pub weights: &'a [crate::domain::WeightVector],
    pub values: &'a [f64],
}

impl EnvironmentView<'_> {
    pub fn last_price(&self) -> Option<f64> {
        self.prices.last().copied()
    }

    pub fn round(&self) -> usize {
        self.prices.len() + 1
    }
}

pub trait Environment {
    /// Emits the next `(context, value)` pair from the view alone.
    fn emit(
        &mut self,
        view: &EnvironmentView<'_>,
    ) -> Result<(ContextVector, TrueValue), EnvironmentError>;
}

/// Replays a fixed sequence exactly.
#[derive(Debug, Clone)]
pub struct FixedEnvironment {
    rounds: Vec<(ContextVector, TrueValue)>,
    cursor: usize,
}

impl FixedEnvironment {
    pub fn new(rounds: Vec<(ContextVector, TrueValue)>) -> Result<Self, EnvironmentError> {
        if rounds.is_empty() {
            return Err(EnvironmentError::EmptySequence);
        }
        Ok(Self { rounds, cursor: 0 })
    }

    /// Validates raw coordinate/value pairs; rejects non-unit contexts.
    pub fn from_raw(rows: Vec<(Vec<f64>, f64)>) -> Result<Self, EnvironmentError> {
        let rounds = rows
            .into_iter()
            .map(|(coords, value)| {
                Ok((ContextVector::new(coords)?, TrueValue::new(value)?))
            })
            .collect::<Result<Vec<_>, DomainError>>()?;
        Self::new(rounds)
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }
}

impl Environment for FixedEnvironment {
    fn emit(
        &mut self,
        _view: &EnvironmentView<'_>,
    ) -> Result<(ContextVector, TrueValue), EnvironmentError> {
        let round = self
            .rounds
            .get(self.cursor)
            .cloned()
            .ok_or(EnvironmentError::SequenceExhausted(self.cursor))?;
        self.cursor += 1;
        Ok(round)
    }
}

#[derive(Debug, Clone)]
pub enum ContextDist {
    PointMass(ContextVector),
    UniformSphere { dim: usize },
}

#[derive(Debug, Clone)]
pub enum ValueDist {
    PointMass(f64),
    Uniform { lo: f64, hi: f64 },
}

/// Samples a point uniformly from the unit sphere via normalized Gaussians.
pub fn sample_unit_sphere(rng: &mut ChaCha8Rng, dim: usize) -> ContextVector {
    loop {
        let coords: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
        if let Ok(c) = ContextVector::normalized(coords) {
            return c;
        }
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; u1 bounded away from zero
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// I.i.d. context/value pairs from the configured distributions.
#[derive(Debug, Clone)]
pub struct IidEnvironment {
    contexts: ContextDist,
    values: ValueDist,
    rng: ChaCha8Rng,
}

impl IidEnvironment {
    pub fn new(contexts: ContextDist, values: ValueDist, rng: ChaCha8Rng) -> Self {
        Self { contexts, values, rng }
    }
}

impl Environment for IidEnvironment {
    fn emit(
        &mut self,
        _view: &EnvironmentView<'_>,
    ) -> Result<(ContextVector, TrueValue), EnvironmentError> {
        let context = match &self.contexts {
            ContextDist::PointMass(c) => c.clone(),
            ContextDist::UniformSphere { dim } => sample_unit_sphere(&mut self.rng, *dim),
        };
        let value = match &self.values {
            ValueDist::PointMass(v) => TrueValue::new(*v)?,
            ValueDist::Uniform { lo, hi } => {
                TrueValue::new(lo + (hi - lo) * self.rng.gen::<f64>())?
            }
        };
        Ok((context, value))
    }
}

/// Price-chasing adversary: keeps a fixed context direction and sets the
/// value just below the last posted price, punishing a seller that overfits
/// to elicited data.
#[derive(Debug, Clone)]
pub struct PriceTracker {
    direction: ContextVector,
    offset: f64,
    initial_value: f64,
}

impl PriceTracker {
    pub const DEFAULT_OFFSET: f64 = 0.05;

    pub fn new(direction: ContextVector, initial_value: f64) -> Self {
        Self { direction, offset: Self::DEFAULT_OFFSET, initial_value }
    }
}

impl Environment for PriceTracker {
    fn emit(
        &mut self,
        view: &EnvironmentView<'_>,
    ) -> Result<(ContextVector, TrueValue), EnvironmentError> {
        let value = match view.last_price() {
            None => self.initial_value,
            Some(price) => (price - self.offset).clamp(0.0, 1.0),
        };
        Ok((self.direction.clone(), TrueValue::new(value)?))
    }
}

/// Rotates the context through the standard basis while drawing values
/// uniformly; stresses sellers whose sketches live in a thin span.
#[derive(Debug, Clone)]
pub struct RotationEnvironment {
    dim: usize,
    rng: ChaCha8Rng,
}

impl RotationEnvironment {
    pub fn new(dim: usize, rng: ChaCha8Rng) -> Self {
        assert!(dim >= 1);
        Self { dim, rng }
    }
}

impl Environment for RotationEnvironment {
    fn emit(
        &mut self,
        view: &EnvironmentView<'_>,
    ) -> Result<(ContextVector, TrueValue), EnvironmentError> {
        let axis = (view.round() - 1) % self.dim;
        let value = TrueValue::new(self.rng.gen::<f64>())?;
        Ok((ContextVector::basis(self.dim, axis), value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::WeightVector;
    use rand::SeedableRng;



    #[test]
    fn fixed_environment_replays_exactly() {
        let seq = vec![
            (ContextVector::basis(2, 0), TrueValue::new(0.3).unwrap()),
            (ContextVector::basis(2, 1), TrueValue::new(0.9).unwrap()),
        ];
        let mut env = FixedEnvironment::new(seq.clone()).unwrap();
        let view = EnvironmentView::default();
        assert_eq!(env.emit(&view).unwrap(), seq[0]);
        assert_eq!(env.emit(&view).unwrap(), seq[1]);
        assert!(matches!(
            env.emit(&view),
            Err(EnvironmentError::SequenceExhausted(2))
        ));
    }

    #[test]
    fn fixed_environment_rejects_non_unit_contexts() {
        let err = FixedEnvironment::from_raw(vec![(vec![0.5, 0.5], 0.3)]);
        assert!(err.is_err());
    }

    #[test]
    fn point_mass_iid_equals_fixed() {
        let ctx = ContextVector::basis(2, 0);
        let mut iid = IidEnvironment::new(
            ContextDist::PointMass(ctx.clone()),
            ValueDist::PointMass(0.4),
            ChaCha8Rng::seed_from_u64(0),
        );
        let mut fixed = FixedEnvironment::new(vec![
            (ctx.clone(), TrueValue::new(0.4).unwrap());
            3
        ])
        .unwrap();
        let view = EnvironmentView::default();
        for _ in 0..3 {
            assert_eq!(iid.emit(&view).unwrap(), fixed.emit(&view).unwrap());
        }
    }

    #[test]
    fn tracker_chases_the_last_price() {
        let mut env = PriceTracker::new(ContextVector::basis(1, 0), 0.5);
        let (_, first) = env.emit(&EnvironmentView::default()).unwrap();
        assert_eq!(first.value(), 0.5);
        let contexts = [ContextVector::basis(1, 0)];
        let weights = [WeightVector::new(vec![0.6]).unwrap()];
        let values = [0.5];
        let view = EnvironmentView {
            contexts: &contexts,
            prices: &[0.6],
            weights: &weights,
            values: &values,
        };
        let (_, chased) = env.emit(&view).unwrap();
        assert!((chased.value() - 0.55).abs() < 1e-12);
        // clamps at zero
        let view_low = EnvironmentView { prices: &[0.01], ..view };
        let (_, floored) = env.emit(&view_low).unwrap();
        assert_eq!(floored.value(), 0.0);
    }

    #[test]
    fn environments_are_deterministic_per_seed() {
        let run = |seed: u64| -> Vec<(Vec<f64>, f64)> {
            let mut env = IidEnvironment::new(
                ContextDist::UniformSphere { dim: 3 },
                ValueDist::Uniform { lo: 0.0, hi: 1.0 },
                ChaCha8Rng::seed_from_u64(seed),
            );
            let view = EnvironmentView::default();
            (0..8)
                .map(|_| {
                    let (c, v) = env.emit(&view).unwrap();
                    (c.coords().to_vec(), v.value())
                })
                .collect()
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11), run(12));
    }

    #[test]
    fn rotation_cycles_basis_axes() {
        let mut env = RotationEnvironment::new(3, ChaCha8Rng::seed_from_u64(2));
        let mut contexts = Vec::new();
        let mut prices = Vec::new();
        let mut weights = Vec::new();
        let mut values = Vec::new();
        for t in 1..=6usize {
            let view = EnvironmentView {
                contexts: &contexts,
                prices: &prices,
                weights: &weights,
                values: &values,
            };
            let (c, v) = env.emit(&view).unwrap();
            assert_eq!(c, ContextVector::basis(3, (t - 1) % 3));
            contexts.push(c);
            prices.push(0.0);
            weights.push(WeightVector::zero(3));
            values.push(v.value());
        }
    }

    #[test]
    fn unit_sphere_samples_are_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..32 {
            let c = sample_unit_sphere(&mut rng, 5);
            assert!((crate::domain::euclidean_norm(c.coords()) - 1.0).abs() < 1e-9);
        }
    }
}
