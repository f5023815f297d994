//! Protocol logic for secure message transmission over an Active Path Set
//! of node-disjoint routes in a mobile ad hoc network.
//!
//! - [`dispersal`]: any-`m`-of-`n` message dispersal over GF(256).
//! - [`discovery`]: signed flooding route discovery and probe key setup.
//! - [`localizer`]: binary-search probing that pins a dropping link.
//! - [`metrics`]: traffic tables, anomaly score, link weights and trust.
//! - [`selection`]: route rating and greedy disjoint path selection.

pub mod crypto;
pub mod discovery;
pub mod dispersal;
pub mod localizer;
pub mod metrics;
pub mod selection;
mod types;

pub use types::{Link, NodeId, Path};
