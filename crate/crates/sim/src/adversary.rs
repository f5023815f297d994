//! Byzantine node behaviors.

use smt_core::NodeId;

use crate::packet::PacketKind;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdversaryBehavior {
    Honest,
    /// Runs discovery correctly, drops all data and data acks.
    BlackHole,
    /// Like a black hole, and additionally tunnels discovery traffic to its
    /// colluding peer over an out-of-band channel.
    Wormhole { peer: NodeId },
    /// Forwards everything, holding each data packet for `seconds`.
    Delay { seconds: f64 },
}

impl AdversaryBehavior {
    pub fn is_adversary(&self) -> bool {
        !matches!(self, AdversaryBehavior::Honest)
    }

    pub fn wormhole_peer(&self) -> Option<NodeId> {
        match self {
            AdversaryBehavior::Wormhole { peer } => Some(*peer),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Disposition {
    Forward,
    Drop,
    /// Forward after an extra hold time.
    Delay(f64),
    /// Handle honestly and also copy to the peer through the tunnel.
    Tunnel(NodeId),
}

/// What an adversary does with a packet it receives.
pub fn apply_adversary(behavior: AdversaryBehavior, kind: PacketKind) -> Disposition {
    match (behavior, kind) {
        (AdversaryBehavior::Honest, _) => Disposition::Forward,
        (AdversaryBehavior::Delay { seconds }, PacketKind::Data | PacketKind::Plain) => Disposition::Delay(seconds),
        (AdversaryBehavior::Delay { .. }, _) => Disposition::Forward,
        (_, PacketKind::Data | PacketKind::Ack | PacketKind::Plain | PacketKind::PlainAck) => Disposition::Drop,
        (AdversaryBehavior::Wormhole { peer }, PacketKind::Request) => Disposition::Tunnel(peer),
        (_, PacketKind::Request | PacketKind::Response) => Disposition::Forward,
    }
}
