//! Smartphone app fingerprinting from the side-channel features of network
//! traffic.
//!
//! The pipeline turns labeled packet logs into bursts and flows
//! ([`sessionizer`]), summarises every flow as a 54-value statistical
//! fingerprint ([`features`]), trains a decision forest on scaled and
//! importance-selected features ([`learn`]), and hardens it against traffic
//! shared between apps with a two-stage relabeling scheme ([`ambiguity`]).
//! [`eval`] applies confidence validation and produces sweep reports, and
//! [`synth`] generates labeled traffic with known shared-library flows.

pub mod ambiguity;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod learn;
pub mod sessionizer;
pub mod synth;
pub mod trace_model;

mod seed;

pub use error::{Error, Result};

/// Reserved label assigned to flows the preliminary classifier gets wrong.
/// Real app labels may never use it.
pub const AMBIGUOUS_LABEL: &str = "ambiguous";
