//! Batch pipeline over synthetic or recorded runs: simulate a design grid,
//! filter and average runs per condition, measure resilience against paired
//! baselines, fit impact models and emit plot-ready tables.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod report;
