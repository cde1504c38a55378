//! Shared domain types and the closed-form payoff functions.
//!
//! Everything downstream (sellers, buyers, the protocol runner, the
//! verifiers) evaluates prices, revenue and utilities through this module,
//! so the sale convention lives here exactly once: the buyer obtains the
//! good iff `bid >= price`, ties are sales, and the comparison carries a
//! small absolute tolerance so grid-boundary instances do not flip on
//! floating-point noise.

use thiserror::Error;

/// Absolute tolerance for every equality-adjacent comparison (sale
/// resolution, norm checks). Callers that need a different slack use the
/// `*_with_tolerance` variants.
pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("context vector must have dimension >= 1")]
    EmptyContext,
    #[error("context norm {norm} is not 1 within tolerance")]
    ContextNotUnit { norm: f64 },
    #[error("weight norm {norm} lies outside the unit ball")]
    WeightOutsideBall { norm: f64 },
    #[error("value {value} is outside [0,1]")]
    ValueOutOfRange { value: f64 },
    #[error("value {value} is not finite")]
    NotFinite { value: f64 },
    #[error("partition slots must disjointly cover rounds 1..={horizon}")]
    BadPartition { horizon: usize },
    #[error("discount factor {gamma} is outside [0, {bar}]")]
    DiscountOutOfRange { gamma: f64, bar: f64 },
    #[error("discount bound {bar} must lie in [0,1)")]
    DiscountBoundOutOfRange { bar: f64 },
    #[error("trace has {got} rounds but the partition covers {want}")]
    TraceLengthMismatch { got: usize, want: usize },
    #[error("buyer index {index} out of range 1..={count}")]
    BuyerIndexOutOfRange { index: usize, count: usize },
    #[error("trace row {round}: {reason}")]
    InvalidTrace { round: usize, reason: String },
}

/// Inner product of two equal-length slices.
///
/// Panics on dimension mismatch; all protocol-level vectors are validated
/// at construction so a mismatch here is a caller bug.
pub fn inner_product(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "inner_product: dimension mismatch");
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn euclidean_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Radial projection onto the unit ball: `v / max(1, ||v||)`.
pub fn project_to_ball(v: &[f64]) -> Vec<f64> {
    let norm = euclidean_norm(v);
    if norm <= 1.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / norm).collect()
    }
}

/// A unit-norm feature vector observed by all parties at the start of a round.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextVector {
    coords: Vec<f64>,
}

impl ContextVector {
    pub fn new(coords: Vec<f64>) -> Result<Self, DomainError> {
        if coords.is_empty() {
            return Err(DomainError::EmptyContext);
        }
        if let Some(&bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(DomainError::NotFinite { value: bad });
        }
        let norm = euclidean_norm(&coords);
        if (norm - 1.0).abs() > TOLERANCE {
            return Err(DomainError::ContextNotUnit { norm });
        }
        Ok(Self { coords })
    }

    /// Standard basis vector `e_axis` in `dim` dimensions.
    pub fn basis(dim: usize, axis: usize) -> Self {
        assert!(axis < dim, "basis axis out of range");
        let mut coords = vec![0.0; dim];
        coords[axis] = 1.0;
        Self { coords }
    }

    /// Normalizes an arbitrary nonzero vector onto the unit sphere.
    pub fn normalized(coords: Vec<f64>) -> Result<Self, DomainError> {
        let norm = euclidean_norm(&coords);
        if norm == 0.0 || !norm.is_finite() {
            return Err(DomainError::ContextNotUnit { norm });
        }
        Self::new(coords.iter().map(|c| c / norm).collect())
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// A pricing vector in the unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    coords: Vec<f64>,
}

impl WeightVector {
    pub fn new(coords: Vec<f64>) -> Result<Self, DomainError> {
        if let Some(&bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(DomainError::NotFinite { value: bad });
        }
        let norm = euclidean_norm(&coords);
        if norm > 1.0 + TOLERANCE {
            return Err(DomainError::WeightOutsideBall { norm });
        }
        Ok(Self { coords })
    }

    pub fn zero(dim: usize) -> Self {
        Self { coords: vec![0.0; dim] }
    }

    /// Projects an arbitrary vector into the ball; never fails.
    pub fn project(coords: &[f64]) -> Self {
        Self { coords: project_to_ball(coords) }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn norm(&self) -> f64 {
        euclidean_norm(&self.coords)
    }

    /// Posted price induced by this weight on a context.
    pub fn price(&self, context: &ContextVector) -> f64 {
        inner_product(&self.coords, context.coords())
    }
}

/// A sealed bid in `[0,1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bid(f64);

impl Bid {
    pub fn new(value: f64) -> Result<Self, DomainError> {
        check_unit_interval(value)?;
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// A buyer's private value in `[0,1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueValue(f64);

impl TrueValue {
    pub fn new(value: f64) -> Result<Self, DomainError> {
        check_unit_interval(value)?;
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn check_unit_interval(value: f64) -> Result<(), DomainError> {
    if !value.is_finite() {
        return Err(DomainError::NotFinite { value });
    }
    if !(0.0..=1.0).contains(&value) {
        return Err(DomainError::ValueOutOfRange { value });
    }
    Ok(())
}

/// Sale resolution: the good is sold iff `bid >= price`, with ties selling.
pub fn sale_occurs(price: f64, bid: f64) -> bool {
    sale_occurs_with_tolerance(price, bid, TOLERANCE)
}

pub fn sale_occurs_with_tolerance(price: f64, bid: f64, tolerance: f64) -> bool {
    bid >= price - tolerance
}

/// Single-round seller revenue: `[<w,x>]_+ * 1[b >= <w,x>]`.
///
/// The sale indicator tests the raw (unclipped) inner product, so a
/// negative price yields a sale with zero revenue.
pub fn revenue(weight: &WeightVector, context: &ContextVector, bid: Bid) -> f64 {
    let price = weight.price(context);
    if sale_occurs(price, bid.value()) {
        price.max(0.0)
    } else {
        0.0
    }
}

/// Single-round buyer utility: `(theta - p) * 1[b >= p]`.
///
/// May be negative when the buyer wins above value; the price may itself be
/// negative (in which case the buyer collects positive surplus while the
/// seller books zero revenue).
pub fn buyer_utility(true_value: TrueValue, price: f64, bid: Bid) -> f64 {
    if sale_occurs(price, bid.value()) {
        true_value.value() - price
    } else {
        0.0
    }
}

/// Disjoint assignment of rounds `1..=T` to buyers.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundPartition {
    slots: Vec<Vec<usize>>,
    horizon: usize,
}

impl RoundPartition {
    pub fn new(slots: Vec<Vec<usize>>, horizon: usize) -> Result<Self, DomainError> {
        let mut seen = vec![false; horizon + 1];
        let mut covered = 0usize;
        for slot in &slots {
            for &round in slot {
                if round == 0 || round > horizon || seen[round] {
                    return Err(DomainError::BadPartition { horizon });
                }
                seen[round] = true;
                covered += 1;
            }
        }
        if covered != horizon {
            return Err(DomainError::BadPartition { horizon });
        }
        let mut slots = slots;
        for slot in &mut slots {
            slot.sort_unstable();
        }
        Ok(Self { slots, horizon })
    }

    /// Buyer `1 + (t-1) mod n` acts in round `t`.
    pub fn round_robin(buyers: usize, horizon: usize) -> Self {
        assert!(buyers >= 1);
        let mut slots = vec![Vec::new(); buyers];
        for t in 1..=horizon {
            slots[(t - 1) % buyers].push(t);
        }
        Self { slots, horizon }
    }

    /// Contiguous blocks of (nearly) equal size, one per buyer.
    pub fn blocks(buyers: usize, horizon: usize) -> Self {
        assert!(buyers >= 1);
        let mut slots = vec![Vec::new(); buyers];
        for t in 1..=horizon {
            let idx = ((t - 1) * buyers / horizon).min(buyers - 1);
            slots[idx].push(t);
        }
        Self { slots, horizon }
    }

    pub fn single(horizon: usize) -> Self {
        Self::round_robin(1, horizon)
    }

    pub fn slots(&self) -> &[Vec<usize>] {
        &self.slots
    }

    pub fn buyer_count(&self) -> usize {
        self.slots.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// 1-based index of the buyer acting in `round`.
    pub fn buyer_of(&self, round: usize) -> Result<usize, DomainError> {
        for (i, slot) in self.slots.iter().enumerate() {
            if slot.binary_search(&round).is_ok() {
                return Ok(i + 1);
            }
        }
        Err(DomainError::BadPartition { horizon: self.horizon })
    }
}

/// Per-buyer geometric discount factors, all bounded by `gamma_bar < 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountProfile {
    gammas: Vec<f64>,
    gamma_bar: f64,
}

impl DiscountProfile {
    pub fn new(gammas: Vec<f64>, gamma_bar: f64) -> Result<Self, DomainError> {
        if !(0.0..1.0).contains(&gamma_bar) {
            return Err(DomainError::DiscountBoundOutOfRange { bar: gamma_bar });
        }
        for &g in &gammas {
            if !g.is_finite() || g < 0.0 || g > gamma_bar {
                return Err(DomainError::DiscountOutOfRange { gamma: g, bar: gamma_bar });
            }
        }
        Ok(Self { gammas, gamma_bar })
    }

    pub fn uniform(buyers: usize, gamma: f64) -> Result<Self, DomainError> {
        Self::new(vec![gamma; buyers], gamma)
    }

    /// All buyers myopic; admissible since `gamma_bar` may be 0 only through
    /// the half-open bound, so we use an explicit zero bound.
    pub fn myopic(buyers: usize) -> Self {
        Self { gammas: vec![0.0; buyers], gamma_bar: 0.0 }
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn gamma(&self, buyer_index: usize) -> f64 {
        self.gammas[buyer_index - 1]
    }

    pub fn gamma_bar(&self) -> f64 {
        self.gamma_bar
    }
}

/// Everything recorded about one protocol round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub round: usize,
    pub buyer_index: usize,
    pub context: ContextVector,
    pub weight: WeightVector,
    pub price: f64,
    pub bid: Bid,
    pub true_value: TrueValue,
    pub sold: bool,
    pub coin_omega: bool,
    pub coin_xi: bool,
    pub expert_chosen: Option<usize>,
}

impl RoundTrace {
    /// Cross-checks the stored price and sale flag against the raw fields.
    pub fn validate(&self) -> Result<(), DomainError> {
        let recomputed = self.weight.price(&self.context);
        if (recomputed - self.price).abs() > 1e-12 {
            return Err(DomainError::InvalidTrace {
                round: self.round,
                reason: format!("price {} != <w,x> {}", self.price, recomputed),
            });
        }
        if self.sold != sale_occurs(self.price, self.bid.value()) {
            return Err(DomainError::InvalidTrace {
                round: self.round,
                reason: "sale flag disagrees with bid >= price".to_string(),
            });
        }
        Ok(())
    }
}

/// Ex-post discounted utility of one buyer over a full trace:
/// `sum_{t in slot_i} gamma_i^(t-1) * u(theta_t, p_t, b_t)`.
pub fn discounted_utility(
    traces: &[RoundTrace],
    buyer_index: usize,
    partition: &RoundPartition,
    discount: &DiscountProfile,
) -> Result<f64, DomainError> {
    if traces.len() != partition.horizon() {
        return Err(DomainError::TraceLengthMismatch {
            got: traces.len(),
            want: partition.horizon(),
        });
    }
    if buyer_index == 0 || buyer_index > partition.buyer_count() {
        return Err(DomainError::BuyerIndexOutOfRange {
            index: buyer_index,
            count: partition.buyer_count(),
        });
    }
    let gamma = discount.gamma(buyer_index);
    let mut total = 0.0;
    for &round in &partition.slots()[buyer_index - 1] {
        let trace = &traces[round - 1];
        let util = buyer_utility(trace.true_value, trace.price, trace.bid);
        total += gamma.powi(round as i32 - 1) * util;
    }
    Ok(total)
}
