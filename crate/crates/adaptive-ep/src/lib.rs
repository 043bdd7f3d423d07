//! Adaptive endpointing at desk scale.
//!
//! Spoken-assistant endpointing must decide when a speaker has finished. A
//! "standard" configuration answers quickly but sometimes cuts slow speakers
//! off; a "relaxed" configuration waits longer at a latency cost. This crate
//! implements per-utterance selection between the two: static baselines, a
//! hindsight oracle, an offline supervised classifier, and an online deep
//! contextual bandit that learns from reward signals alone, all running
//! against a calibrated synthetic utterance environment with counterfactual
//! outcomes under both configurations.
//!
//! Modules
//! - [`nn`]: feed-forward reward predictor with concrete dropout.
//! - [`sim`]: synthetic utterance generator, observation filtering, decoding.
//! - [`policy`]: decision agents over observed features.
//! - [`corpus`]: counterfactual log files with manifests and splits.
//! - [`metrics`]: latency/cutoff metrics and trade-off sweeps.
//! - [`experiment`]: config-driven experiment runs and reports.

pub mod corpus;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod policy;
pub mod sim;

pub use error::{Error, Result};
