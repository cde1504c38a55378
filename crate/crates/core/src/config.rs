//! Experiment configuration: a flat, typed key-value document with strict
//! unknown-key rejection, plus deterministic derivation of the per-party
//! randomness streams from one master seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::domain::{DiscountProfile, DomainError, RoundPartition};
use crate::sketch::{SketchError, SketchSpace};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected 'key = value', found '{text}'")]
    Malformed { line: usize, text: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key '{key}'")]
    DuplicateKey { line: usize, key: String },
    #[error("key '{key}': cannot parse '{value}' as {want}")]
    BadValue { key: String, value: String, want: &'static str },
    #[error("missing required key '{0}'")]
    MissingKey(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SellerId {
    Omr,
    Sum,
}

impl SellerId {
    pub fn as_str(&self) -> &'static str {
        match self {
            SellerId::Omr => "omr",
            SellerId::Sum => "sum",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpertMode {
    Exact,
    Sampled,
}

impl ExpertMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExpertMode::Exact => "exact",
            ExpertMode::Sampled => "sampled",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptOracleMode {
    Grid,
    SketchSet,
}

impl OptOracleMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            OptOracleMode::Grid => "grid",
            OptOracleMode::SketchSet => "sketch_set",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PartitionSpec {
    RoundRobin,
    Blocks,
    Explicit(Vec<Vec<usize>>),
}

/// Everything a simulation run needs, as parsed from a config document.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub horizon: usize,
    pub dimension: usize,
    pub epsilon: f64,
    pub gamma_bar: f64,
    pub gammas: Vec<f64>,
    pub partition: PartitionSpec,
    pub seller: SellerId,
    pub environment: String,
    pub buyers: Vec<String>,
    pub seed: u64,
    pub replications: u32,
    pub opt_mode: OptOracleMode,
    pub opt_resolution: f64,
    pub expert_mode: ExpertMode,
    pub expert_cap: u128,
    pub dictionary_size: usize,
    pub grid_step: Option<f64>,
    pub max_support: Option<usize>,
    pub support_window: Option<usize>,
    pub rho_override: Option<f64>,
    pub disable_random_pricing: bool,
    pub trace_out: String,
    pub summary_out: String,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut seen: BTreeMap<String, String> = BTreeMap::new();
        for (index, raw) in text.lines().enumerate() {
            let line = index + 1;
            let stripped = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let trimmed = stripped.trim();
            if trimmed.is_empty() {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| ConfigError::Malformed {
                line,
                text: trimmed.to_string(),
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey { line, key });
            }
            if seen.insert(key.clone(), value).is_some() {
                return Err(ConfigError::DuplicateKey { line, key });
            }
        }
        Self::from_map(seen)
    }

    fn from_map(mut map: BTreeMap<String, String>) -> Result<Self, ConfigError> {
        fn take<T: std::str::FromStr>(
            map: &mut BTreeMap<String, String>,
            key: &'static str,
            want: &'static str,
        ) -> Result<Option<T>, ConfigError> {
            match map.remove(key) {
                None => Ok(None),
                Some(value) => value
                    .parse::<T>()
                    .map(Some)
                    .map_err(|_| ConfigError::BadValue { key: key.to_string(), value, want }),
            }
        }
        fn require<T>(value: Option<T>, key: &'static str) -> Result<T, ConfigError> {
            value.ok_or(ConfigError::MissingKey(key))
        }

        let horizon = require(take::<usize>(&mut map, "horizon", "integer")?, "horizon")?;
        let dimension = require(take::<usize>(&mut map, "dimension", "integer")?, "dimension")?;
        let epsilon = require(take::<f64>(&mut map, "epsilon", "real")?, "epsilon")?;
        let gamma_bar = require(take::<f64>(&mut map, "gamma_bar", "real")?, "gamma_bar")?;

        let seller = match require(take::<String>(&mut map, "seller", "seller id")?, "seller")?
            .as_str()
        {
            "omr" => SellerId::Omr,
            "sum" => SellerId::Sum,
            other => {
                return Err(ConfigError::BadValue {
                    key: "seller".to_string(),
                    value: other.to_string(),
                    want: "omr | sum",
                })
            }
        };
        let environment =
            require(take::<String>(&mut map, "environment", "environment id")?, "environment")?;
        let buyers: Vec<String> =
            require(take::<String>(&mut map, "buyers", "buyer list")?, "buyers")?
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();

        let gammas = match take::<String>(&mut map, "gammas", "real list")? {
            None => vec![gamma_bar; buyers.len()],
            Some(text) => text
                .split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| ConfigError::BadValue {
                        key: "gammas".to_string(),
                        value: s.to_string(),
                        want: "real",
                    })
                })
                .collect::<Result<Vec<_>, _>>()?,
        };

        let partition = match take::<String>(&mut map, "partition", "partition spec")? {
            None => PartitionSpec::RoundRobin,
            Some(text) => match text.as_str() {
                "round_robin" => PartitionSpec::RoundRobin,
                "blocks" => PartitionSpec::Blocks,
                other => {
                    if let Some(body) = other.strip_prefix("explicit:") {
                        let slots = body
                            .split(';')
                            .map(|slot| {
                                slot.split(',')
                                    .filter(|s| !s.trim().is_empty())
                                    .map(|s| {
                                        s.trim().parse::<usize>().map_err(|_| {
                                            ConfigError::BadValue {
                                                key: "partition".to_string(),
                                                value: s.to_string(),
                                                want: "round index",
                                            }
                                        })
                                    })
                                    .collect::<Result<Vec<_>, _>>()
                            })
                            .collect::<Result<Vec<_>, _>>()?;
                        PartitionSpec::Explicit(slots)
                    } else {
                        return Err(ConfigError::BadValue {
                            key: "partition".to_string(),
                            value: other.to_string(),
                            want: "round_robin | blocks | explicit:...",
                        });
                    }
                }
            },
        };

        let opt_mode = match take::<String>(&mut map, "opt_mode", "oracle mode")? {
            None => OptOracleMode::Grid,
            Some(text) => match text.as_str() {
                "grid" => OptOracleMode::Grid,
                "sketch_set" => OptOracleMode::SketchSet,
                other => {
                    return Err(ConfigError::BadValue {
                        key: "opt_mode".to_string(),
                        value: other.to_string(),
                        want: "grid | sketch_set",
                    })
                }
            },
        };
        let expert_mode = match take::<String>(&mut map, "expert_mode", "expert mode")? {
            None => ExpertMode::Exact,
            Some(text) => match text.as_str() {
                "exact" => ExpertMode::Exact,
                "sampled" => ExpertMode::Sampled,
                other => {
                    return Err(ConfigError::BadValue {
                        key: "expert_mode".to_string(),
                        value: other.to_string(),
                        want: "exact | sampled",
                    })
                }
            },
        };
        let disable_random_pricing =
            match take::<String>(&mut map, "disable_random_pricing", "bool")? {
                None => false,
                Some(text) => match text.as_str() {
                    "true" => true,
                    "false" => false,
                    other => {
                        return Err(ConfigError::BadValue {
                            key: "disable_random_pricing".to_string(),
                            value: other.to_string(),
                            want: "true | false",
                        })
                    }
                },
            };

        let config = Self {
            horizon,
            dimension,
            epsilon,
            gamma_bar,
            gammas,
            partition,
            seller,
            environment,
            buyers,
            seed: take::<u64>(&mut map, "seed", "integer")?.unwrap_or(0),
            replications: take::<u32>(&mut map, "replications", "integer")?.unwrap_or(1),
            opt_mode,
            opt_resolution: take::<f64>(&mut map, "opt_resolution", "real")?.unwrap_or(1e-3),
            expert_mode,
            expert_cap: take::<u128>(&mut map, "expert_cap", "integer")?.unwrap_or(200_000),
            dictionary_size: take::<usize>(&mut map, "dictionary_size", "integer")?.unwrap_or(16),
            grid_step: take::<f64>(&mut map, "grid_step", "real")?,
            max_support: take::<usize>(&mut map, "max_support", "integer")?,
            support_window: take::<usize>(&mut map, "support_window", "integer")?,
            rho_override: take::<f64>(&mut map, "rho_override", "real")?,
            disable_random_pricing,
            trace_out: take::<String>(&mut map, "trace_out", "path")?
                .unwrap_or_else(|| "trace.csv".to_string()),
            summary_out: take::<String>(&mut map, "summary_out", "path")?
                .unwrap_or_else(|| "summary.json".to_string()),
        };
        debug_assert!(map.is_empty(), "all known keys must be consumed");
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.horizon == 0 {
            return Err(ConfigError::Invalid("horizon must be >= 1".to_string()));
        }
        if self.dimension == 0 {
            return Err(ConfigError::Invalid("dimension must be >= 1".to_string()));
        }
        if self.replications == 0 {
            return Err(ConfigError::Invalid("replications must be >= 1".to_string()));
        }
        if self.buyers.is_empty() {
            return Err(ConfigError::Invalid("at least one buyer required".to_string()));
        }
        let epsilon_cap = match self.seller {
            SellerId::Omr => 0.5,
            SellerId::Sum => 0.25,
        };
        if !(self.epsilon > 0.0 && self.epsilon <= epsilon_cap) {
            return Err(ConfigError::Invalid(format!(
                "epsilon {} outside (0, {}] for seller {}",
                self.epsilon,
                epsilon_cap,
                self.seller.as_str()
            )));
        }
        if !(0.0..1.0).contains(&self.gamma_bar) {
            return Err(ConfigError::Invalid(format!(
                "gamma_bar {} outside [0, 1)",
                self.gamma_bar
            )));
        }
        if self.gammas.len() != self.buyers.len() {
            return Err(ConfigError::Invalid(format!(
                "{} gammas for {} buyers",
                self.gammas.len(),
                self.buyers.len()
            )));
        }
        if self.opt_resolution <= 0.0 || !self.opt_resolution.is_finite() {
            return Err(ConfigError::Invalid("opt_resolution must be positive".to_string()));
        }
        if let Some(rho) = self.rho_override {
            if !(rho > 0.0 && rho <= 1.0) {
                return Err(ConfigError::Invalid(format!("rho_override {rho} outside (0, 1]")));
            }
        }
        // these construct-or-fail
        self.build_partition()?;
        self.build_discount()?;
        self.sketch_space()?;
        Ok(())
    }

    pub fn build_partition(&self) -> Result<RoundPartition, ConfigError> {
        Ok(match &self.partition {
            PartitionSpec::RoundRobin => {
                RoundPartition::round_robin(self.buyers.len(), self.horizon)
            }
            PartitionSpec::Blocks => RoundPartition::blocks(self.buyers.len(), self.horizon),
            PartitionSpec::Explicit(slots) => {
                if slots.len() != self.buyers.len() {
                    return Err(ConfigError::Invalid(format!(
                        "{} partition slots for {} buyers",
                        slots.len(),
                        self.buyers.len()
                    )));
                }
                RoundPartition::new(slots.clone(), self.horizon)?
            }
        })
    }

    pub fn build_discount(&self) -> Result<DiscountProfile, ConfigError> {
        Ok(DiscountProfile::new(self.gammas.clone(), self.gamma_bar)?)
    }

    /// The expert family for exact mode, honoring any coarse overrides.
    pub fn sketch_space(&self) -> Result<SketchSpace, ConfigError> {
        let mut space = SketchSpace::standard(self.horizon, self.epsilon)?;
        if let Some(step) = self.grid_step {
            if step <= 0.0 || !step.is_finite() {
                return Err(ConfigError::Invalid("grid_step must be positive".to_string()));
            }
            space.grid_step = step;
            space.max_multiplier = (crate::sketch::COEFFICIENT_BOUND / step).floor() as i64;
        }
        if let Some(max_support) = self.max_support {
            space.max_support = max_support;
        }
        if let Some(window) = self.support_window {
            space.support_window = window.min(self.horizon);
        }
        Ok(space)
    }

    pub fn has_grid_override(&self) -> bool {
        self.grid_step.is_some() || self.max_support.is_some() || self.support_window.is_some()
    }

    /// Canonical emission: sorted keys, shortest round-trip numerals.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        let mut put = |key: &str, value: String| {
            let _ = writeln!(out, "{key} = {value}");
        };
        put("buyers", self.buyers.join(","));
        put("dictionary_size", self.dictionary_size.to_string());
        put("dimension", self.dimension.to_string());
        put("disable_random_pricing", self.disable_random_pricing.to_string());
        put("environment", self.environment.clone());
        put("epsilon", self.epsilon.to_string());
        put("expert_cap", self.expert_cap.to_string());
        put("expert_mode", self.expert_mode.as_str().to_string());
        put("gamma_bar", self.gamma_bar.to_string());
        put(
            "gammas",
            self.gammas.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(","),
        );
        if let Some(step) = self.grid_step {
            put("grid_step", step.to_string());
        }
        put("horizon", self.horizon.to_string());
        if let Some(max_support) = self.max_support {
            put("max_support", max_support.to_string());
        }
        put("opt_mode", self.opt_mode.as_str().to_string());
        put("opt_resolution", self.opt_resolution.to_string());
        put(
            "partition",
            match &self.partition {
                PartitionSpec::RoundRobin => "round_robin".to_string(),
                PartitionSpec::Blocks => "blocks".to_string(),
                PartitionSpec::Explicit(slots) => format!(
                    "explicit:{}",
                    slots
                        .iter()
                        .map(|slot| slot
                            .iter()
                            .map(|r| r.to_string())
                            .collect::<Vec<_>>()
                            .join(","))
                        .collect::<Vec<_>>()
                        .join(";")
                ),
            },
        );
        put("replications", self.replications.to_string());
        if let Some(rho) = self.rho_override {
            put("rho_override", rho.to_string());
        }
        put("seed", self.seed.to_string());
        put("seller", self.seller.as_str().to_string());
        put("summary_out", self.summary_out.clone());
        if let Some(window) = self.support_window {
            put("support_window", window.to_string());
        }
        put("trace_out", self.trace_out.clone());
        out
    }

    /// FNV-1a hash of the canonical emission; stable across platforms.
    pub fn hash(&self) -> String {
        let mut hash: u64 = 0xcbf29ce484222325;
        for byte in self.emit().bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
        format!("{hash:016x}")
    }

    pub fn seed_plan(&self) -> SeedPlan {
        SeedPlan::new(self.seed)
    }
}

const KNOWN_KEYS: &[&str] = &[
    "buyers",
    "dictionary_size",
    "dimension",
    "disable_random_pricing",
    "environment",
    "epsilon",
    "expert_cap",
    "expert_mode",
    "gamma_bar",
    "gammas",
    "grid_step",
    "horizon",
    "max_support",
    "opt_mode",
    "opt_resolution",
    "partition",
    "replications",
    "rho_override",
    "seed",
    "seller",
    "summary_out",
    "support_window",
    "trace_out",
];

/// Labeled, mutually independent randomness streams. Each party gets its
/// own stream per replication, so perturbing one never shifts another.
#[derive(Debug, Clone, Copy)]
pub struct SeedPlan {
    master: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamLabel {
    Environment,
    SellerOmega,
    SellerLambda,
    SellerXi,
    ExpertSampling,
    Dictionary,
    Buyer(u32),
}

impl StreamLabel {
    fn code(self) -> u64 {
        match self {
            StreamLabel::Environment => 1,
            StreamLabel::SellerOmega => 2,
            StreamLabel::SellerLambda => 3,
            StreamLabel::SellerXi => 4,
            StreamLabel::ExpertSampling => 5,
            StreamLabel::Dictionary => 6,
            StreamLabel::Buyer(i) => 16 + i as u64,
        }
    }
}

impl SeedPlan {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn stream(&self, label: StreamLabel, replication: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(label.code() | ((replication as u64 + 1) << 32));
        rng
    }
}
