use std::fmt;

use smt_core::localizer::LocalizerConfig;
use smt_core::metrics::{AnomalyWeights, PenaltyConfig, TrustParams};
use smt_core::selection::SelectionParams;
use smt_core::NodeId;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid scenario: {field}: {reason}")]
pub struct ConfigError {
    pub field: &'static str,
    pub reason: String,
}

impl ConfigError {
    fn new(field: &'static str, reason: impl Into<String>) -> Self {
        ConfigError { field, reason: reason.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Protocol {
    /// Dispersal over an Active Path Set with probing, penalties and trust.
    ApsSmt,
    /// Single shortest route, no acknowledgements beyond end-to-end, no
    /// security mechanism.
    Nsp,
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::ApsSmt => "APS-SMT",
            Protocol::Nsp => "NSP",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "APS-SMT" | "APS_SMT" | "APSSMT" => Ok(Protocol::ApsSmt),
            "NSP" => Ok(Protocol::Nsp),
            other => Err(format!("unknown protocol {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdversaryModel {
    None,
    BlackHole,
    Wormhole,
    /// Forwards data late by `adversary_delay` seconds.
    Delay,
}

impl std::str::FromStr for AdversaryModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(AdversaryModel::None),
            "black-hole" | "blackhole" | "black_hole" => Ok(AdversaryModel::BlackHole),
            "wormhole" => Ok(AdversaryModel::Wormhole),
            "delay" => Ok(AdversaryModel::Delay),
            other => Err(format!("unknown adversary model {other:?}")),
        }
    }
}

impl fmt::Display for AdversaryModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdversaryModel::None => "none",
            AdversaryModel::BlackHole => "black-hole",
            AdversaryModel::Wormhole => "wormhole",
            AdversaryModel::Delay => "delay",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityConfig {
    pub speed_min: f64,
    pub speed_max: f64,
    pub pause: f64,
    /// Seconds between position updates and connectivity recomputation.
    pub update_interval: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig { speed_min: 1.0, speed_max: 10.0, pause: 10.0, update_interval: 0.5 }
    }
}

impl MobilityConfig {
    pub fn is_static(&self) -> bool {
        self.speed_max == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficConfig {
    pub source: NodeId,
    pub destination: NodeId,
    pub packet_size: usize,
    /// Messages per second.
    pub rate: f64,
    /// Seconds of application traffic, starting at `start`.
    pub duration: f64,
    pub start: f64,
}

/// Protocol knobs shared by the source agents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    pub localizer: LocalizerConfig,
    pub trust: TrustParams,
    pub penalty: PenaltyConfig,
    pub selection: SelectionParams,
    pub anomaly: AnomalyWeights,
    /// Seconds the source collects responses before (re)selecting routes.
    pub discovery_wait: f64,
    /// Minimum spacing of discoveries while the path set is below `k`.
    pub rediscovery_interval: f64,
    /// Minimum spacing of discoveries while no route is usable at all.
    pub empty_retry: f64,
    /// Unused candidates older than this are not selected.
    pub route_max_age: f64,
    /// NSP rediscovers after this long without an end-to-end ack.
    pub nsp_silence_timeout: f64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            localizer: LocalizerConfig::default(),
            trust: TrustParams::default(),
            penalty: PenaltyConfig::default(),
            selection: SelectionParams::default(),
            anomaly: AnomalyWeights::default(),
            discovery_wait: 0.25,
            rediscovery_interval: 5.0,
            empty_retry: 1.0,
            route_max_age: 5.0,
            nsp_silence_timeout: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub width: f64,
    pub height: f64,
    pub node_count: usize,
    pub reception_range: f64,
    pub mobility: MobilityConfig,
    pub adversary_count: usize,
    pub adversary_model: AdversaryModel,
    /// Colluding pairs for the wormhole model. Empty means pair up the
    /// placed adversaries in order.
    pub wormhole_pairs: Vec<(NodeId, NodeId)>,
    /// Fixed adversary identities; `None` places them uniformly at random.
    pub adversary_nodes: Option<Vec<NodeId>>,
    /// Hold time of the delay model, seconds.
    pub adversary_delay: f64,
    /// Fixed initial positions; `None` draws them uniformly.
    pub positions: Option<Vec<(f64, f64)>>,
    pub traffic: TrafficConfig,
    pub protocol: Protocol,
    pub seed: u64,
    pub per_hop_latency: f64,
    pub queue_loss_prob: f64,
    pub params: ProtocolParams,
    pub log_events: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            width: 500.0,
            height: 500.0,
            node_count: 50,
            reception_range: 150.0,
            mobility: MobilityConfig::default(),
            adversary_count: 0,
            adversary_model: AdversaryModel::BlackHole,
            wormhole_pairs: Vec::new(),
            adversary_nodes: None,
            adversary_delay: 2.0,
            positions: None,
            traffic: TrafficConfig {
                source: NodeId(0),
                destination: NodeId(49),
                packet_size: 512,
                rate: 4.0,
                duration: 300.0,
                start: 1.0,
            },
            protocol: Protocol::ApsSmt,
            seed: 1,
            per_hop_latency: 0.005,
            queue_loss_prob: 0.01,
            params: ProtocolParams::default(),
            log_events: false,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite_pos = |x: f64| x.is_finite() && x > 0.0;
        if !finite_pos(self.width) || !finite_pos(self.height) {
            return Err(ConfigError::new("area", "width and height must be positive"));
        }
        if self.node_count < 2 || self.node_count > u32::MAX as usize {
            return Err(ConfigError::new("nodes", "need at least two nodes"));
        }
        if !finite_pos(self.reception_range) {
            return Err(ConfigError::new("range", "reception range must be positive"));
        }
        let m = &self.mobility;
        if !(m.speed_min >= 0.0 && m.speed_max >= m.speed_min && m.speed_max.is_finite()) {
            return Err(ConfigError::new("speed", "need 0 <= speed_min <= speed_max"));
        }
        if !(m.pause >= 0.0 && m.pause.is_finite()) || !finite_pos(m.update_interval) {
            return Err(ConfigError::new("mobility", "pause must be >= 0 and update interval > 0"));
        }
        let t = &self.traffic;
        let n = self.node_count as u32;
        if t.source.0 >= n || t.destination.0 >= n || t.source == t.destination {
            return Err(ConfigError::new("traffic", "source and destination must be distinct existing nodes"));
        }
        if t.packet_size == 0 || !finite_pos(t.rate) || !(t.duration >= 0.0) || !(t.start >= 0.0) {
            return Err(ConfigError::new("traffic", "packet size and rate must be positive, duration >= 0"));
        }
        if self.adversary_count >= self.node_count || self.adversary_count + 2 > self.node_count {
            return Err(ConfigError::new(
                "adversaries",
                format!("{} adversaries leave no room for honest endpoints among {} nodes", self.adversary_count, self.node_count),
            ));
        }
        if let Some(fixed) = &self.adversary_nodes {
            if fixed.len() != self.adversary_count {
                return Err(ConfigError::new("adversary_nodes", "length must equal the adversary count"));
            }
            let mut seen = std::collections::HashSet::new();
            for a in fixed {
                if a.0 >= n || *a == t.source || *a == t.destination || !seen.insert(*a) {
                    return Err(ConfigError::new("adversary_nodes", format!("{a} is not a valid distinct non-endpoint node")));
                }
            }
        }
        if self.adversary_model == AdversaryModel::None && self.adversary_count > 0 {
            return Err(ConfigError::new("adversary_model", "model none with a non-zero adversary count"));
        }
        if self.adversary_model == AdversaryModel::Wormhole {
            if self.wormhole_pairs.is_empty() && !self.adversary_count.is_multiple_of(2) {
                return Err(ConfigError::new("wormhole_pairs", "odd adversary count cannot be paired"));
            }
            if !self.wormhole_pairs.is_empty() {
                let Some(fixed) = &self.adversary_nodes else {
                    return Err(ConfigError::new("wormhole_pairs", "explicit pairs need fixed adversary nodes"));
                };
                for (a, b) in &self.wormhole_pairs {
                    if a == b || !fixed.contains(a) || !fixed.contains(b) {
                        return Err(ConfigError::new("wormhole_pairs", "pairs must be two distinct adversaries"));
                    }
                }
            }
        } else if !self.wormhole_pairs.is_empty() {
            return Err(ConfigError::new("wormhole_pairs", "only valid with the wormhole model"));
        }
        if let Some(pos) = &self.positions {
            if pos.len() != self.node_count {
                return Err(ConfigError::new("positions", "one position per node"));
            }
            if pos.iter().any(|&(x, y)| !(0.0..=self.width).contains(&x) || !(0.0..=self.height).contains(&y)) {
                return Err(ConfigError::new("positions", "position outside the area"));
            }
        }
        if !(self.adversary_delay >= 0.0 && self.adversary_delay.is_finite()) {
            return Err(ConfigError::new("adversary_delay", "must be >= 0"));
        }
        if !(self.per_hop_latency >= 0.0 && self.per_hop_latency.is_finite()) {
            return Err(ConfigError::new("latency", "per-hop latency must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.queue_loss_prob) {
            return Err(ConfigError::new("loss", "queue loss probability must be in [0, 1]"));
        }
        let p = &self.params;
        if p.localizer.window == 0 || p.localizer.min_outcomes == 0 || p.localizer.min_outcomes > p.localizer.window {
            return Err(ConfigError::new("window", "need 1 <= min_outcomes <= window"));
        }
        if !(0.0..1.0).contains(&p.localizer.loss_threshold) {
            return Err(ConfigError::new("loss_threshold", "must be in [0, 1)"));
        }
        if p.selection.k == 0 || p.trust.window == 0 {
            return Err(ConfigError::new("k", "path set size and trust window must be positive"));
        }
        if !(p.penalty.factor > 1.0) {
            return Err(ConfigError::new("penalty_factor", "must exceed 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ScenarioConfig::default().validate().unwrap();
    }

    #[test]
    fn endpoint_and_count_checks() {
        let mut c = ScenarioConfig { adversary_count: 49, ..ScenarioConfig::default() };
        assert_eq!(c.validate().unwrap_err().field, "adversaries");
        c.adversary_count = 2;
        c.adversary_nodes = Some(vec![NodeId(0), NodeId(3)]);
        assert_eq!(c.validate().unwrap_err().field, "adversary_nodes");
        c.adversary_nodes = Some(vec![NodeId(2), NodeId(3)]);
        c.validate().unwrap();
    }

    #[test]
    fn protocol_names_parse() {
        assert_eq!("aps-smt".parse::<Protocol>(), Ok(Protocol::ApsSmt));
        assert_eq!("NSP".parse::<Protocol>(), Ok(Protocol::Nsp));
        assert!("tcp".parse::<Protocol>().is_err());
    }
}
