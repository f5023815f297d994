//! Experiment plans, sweep execution and reporting.

pub mod experiment;
pub mod plan;
pub mod report;
