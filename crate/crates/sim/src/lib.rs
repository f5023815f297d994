//! Deterministic discrete-event simulator for mobile ad hoc networks running
//! APS-SMT or a single-path baseline.

pub mod adversary;
pub mod config;
pub mod engine;
pub mod event;
pub mod fixtures;
pub mod packet;
pub mod topology;

pub use config::{AdversaryModel, ConfigError, MobilityConfig, Protocol, ProtocolParams, ScenarioConfig, TrafficConfig};
pub use engine::{run, RunStats, Simulator, TransmissionCounters};
