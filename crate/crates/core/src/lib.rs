//! Simulation and verification toolkit for strategy-robust online
//! contextual pricing.
//!
//! The crate implements a repeated posted-price protocol between a
//! learning seller and strategic discounted buyers, two sketch-based
//! expert sellers (a truthful-buyer learner and its sparse-update
//! strategy-robust variant), adversarial environments, an exact
//! tiny-horizon equilibrium engine, and stand-alone verifiers for every
//! desk-checkable bound the construction rests on.

pub mod agents;
pub mod analysis;
pub mod config;
pub mod domain;
pub mod environment;
pub mod experiment;
pub mod experts;
pub mod protocol;
pub mod sketch;
pub mod trace;
