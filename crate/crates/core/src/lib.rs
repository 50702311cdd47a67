//! Cyber-resilience quantification from performance time series.
//!
//! The crate models functionality under competing malware and bonware
//! impacts, measures resilience as a ratio of accomplished work, extracts
//! impact parameters from observed curves, and generates synthetic
//! experiment runs.

pub mod error;
pub mod fitting;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod synth;

pub use error::{Error, Result};
