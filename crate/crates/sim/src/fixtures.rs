//! Small hand-placed scenarios with known route structure.

use smt_core::NodeId;

use crate::config::{AdversaryModel, MobilityConfig, Protocol, ScenarioConfig, TrafficConfig};

fn static_mobility() -> MobilityConfig {
    MobilityConfig { speed_min: 0.0, speed_max: 0.0, pause: 0.0, update_interval: 0.5 }
}

fn base(positions: Vec<(f64, f64)>, width: f64, height: f64, source: u32, destination: u32) -> ScenarioConfig {
    ScenarioConfig {
        width,
        height,
        node_count: positions.len(),
        reception_range: 150.0,
        mobility: static_mobility(),
        adversary_count: 0,
        adversary_model: AdversaryModel::None,
        positions: Some(positions),
        traffic: TrafficConfig {
            source: NodeId(source),
            destination: NodeId(destination),
            packet_size: 512,
            rate: 4.0,
            duration: 60.0,
            start: 1.0,
        },
        queue_loss_prob: 0.0,
        ..ScenarioConfig::default()
    }
}

/// Nodes spaced 100 m apart on a line, source first and destination last.
pub fn line(nodes: usize, protocol: Protocol) -> ScenarioConfig {
    let positions = (0..nodes).map(|i| (i as f64 * 100.0, 50.0)).collect();
    let width = (nodes.max(2) - 1) as f64 * 100.0;
    ScenarioConfig { protocol, ..base(positions, width, 100.0, 0, nodes as u32 - 1) }
}

/// Source 0 and destination 3 joined by two arms through 1 and 2.
/// `black_hole_arm` makes node 1 a black hole.
pub fn diamond(protocol: Protocol, black_hole_arm: bool) -> ScenarioConfig {
    let positions = vec![(0.0, 100.0), (100.0, 0.0), (100.0, 200.0), (200.0, 100.0)];
    let mut cfg = ScenarioConfig { protocol, ..base(positions, 200.0, 200.0, 0, 3) };
    if black_hole_arm {
        cfg.adversary_count = 1;
        cfg.adversary_model = AdversaryModel::BlackHole;
        cfg.adversary_nodes = Some(vec![NodeId(1)]);
    }
    cfg
}

/// Wormhole endpoints of [`wormhole`].
pub const WORMHOLE_PAIR: (NodeId, NodeId) = (NodeId(5), NodeId(6));

/// Ten nodes: the honest route 0-1-2-3-4-9 has five hops; wormhole nodes 5
/// (next to the source) and 6 (next to the destination) offer 0-5-6-9.
/// Nodes 7 and 8 are dead ends.
pub fn wormhole(protocol: Protocol) -> ScenarioConfig {
    let positions = vec![
        (0.0, 100.0),
        (140.0, 100.0),
        (280.0, 100.0),
        (420.0, 100.0),
        (560.0, 100.0),
        (0.0, 230.0),
        (700.0, 230.0),
        (280.0, 230.0),
        (560.0, 0.0),
        (700.0, 100.0),
    ];
    ScenarioConfig {
        protocol,
        adversary_count: 2,
        adversary_model: AdversaryModel::Wormhole,
        adversary_nodes: Some(vec![WORMHOLE_PAIR.0, WORMHOLE_PAIR.1]),
        wormhole_pairs: vec![WORMHOLE_PAIR],
        ..base(positions, 700.0, 300.0, 0, 9)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{Connectivity, Point};

    fn adjacency(cfg: &ScenarioConfig) -> Connectivity {
        let pts: Vec<Point> = cfg.positions.as_ref().unwrap().iter().map(|&(x, y)| Point::new(x, y)).collect();
        Connectivity::compute(&pts, cfg.reception_range)
    }

    #[test]
    fn fixtures_are_valid() {
        for p in [Protocol::ApsSmt, Protocol::Nsp] {
            line(5, p).validate().unwrap();
            diamond(p, true).validate().unwrap();
            wormhole(p).validate().unwrap();
        }
    }

    #[test]
    fn wormhole_radio_graph() {
        let c = adjacency(&wormhole(Protocol::Nsp));
        let expect: [&[u32]; 10] = [&[1, 5], &[0, 2], &[1, 3, 7], &[2, 4], &[3, 8, 9], &[0], &[9], &[2], &[4], &[4, 6]];
        for (i, want) in expect.iter().enumerate() {
            assert_eq!(c.neighbors(i), *want, "node {i}");
        }
    }

    #[test]
    fn diamond_radio_graph() {
        let c = adjacency(&diamond(Protocol::ApsSmt, false));
        assert_eq!(c.neighbors(0), &[1, 2]);
        assert_eq!(c.neighbors(3), &[1, 2]);
        assert!(!c.connected(0, 3) && !c.connected(1, 2));
    }
}
