use std::fmt;
use std::sync::Arc;

use smt_core::discovery::{RouteRequest, RouteResponse};
use smt_core::localizer::ACK_LEN;
use smt_core::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PacketKind {
    Request,
    Response,
    Data,
    Ack,
    Plain,
    PlainAck,
}

impl PacketKind {
    pub fn is_control(&self) -> bool {
        !matches!(self, PacketKind::Data | PacketKind::Plain)
    }

    pub fn name(&self) -> &'static str {
        match self {
            PacketKind::Request => "rreq",
            PacketKind::Response => "rrep",
            PacketKind::Data => "data",
            PacketKind::Ack => "ack",
            PacketKind::Plain => "plain",
            PacketKind::PlainAck => "plain-ack",
        }
    }
}

impl fmt::Display for PacketKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A dispersal share riding a source route, with its probe header.
#[derive(Debug, Clone)]
pub struct DataPacket {
    pub packet_id: u64,
    pub message_id: u64,
    pub message_sent_at: f64,
    pub route: Arc<Path>,
    pub route_id: u64,
    pub probe_header: Vec<u8>,
    pub share: Vec<u8>,
}

/// Probe acknowledgement travelling back toward the source.
#[derive(Debug, Clone)]
pub struct AckPacket {
    pub route: Arc<Path>,
    pub route_id: u64,
    pub payload: [u8; ACK_LEN],
}

/// Unprotected single-route data.
#[derive(Debug, Clone)]
pub struct PlainPacket {
    pub packet_id: u64,
    pub message_id: u64,
    pub message_sent_at: f64,
    pub route: Arc<Path>,
    pub size: usize,
}

#[derive(Debug, Clone)]
pub enum Packet {
    Request(RouteRequest),
    Response(RouteResponse),
    Data(DataPacket),
    Ack(AckPacket),
    Plain(PlainPacket),
    PlainAck { message_id: u64, route: Arc<Path> },
}

impl Packet {
    pub fn kind(&self) -> PacketKind {
        match self {
            Packet::Request(_) => PacketKind::Request,
            Packet::Response(_) => PacketKind::Response,
            Packet::Data(_) => PacketKind::Data,
            Packet::Ack(_) => PacketKind::Ack,
            Packet::Plain(_) => PacketKind::Plain,
            Packet::PlainAck { .. } => PacketKind::PlainAck,
        }
    }

    /// Identifier used in the event log.
    pub fn log_id(&self) -> u64 {
        match self {
            Packet::Request(r) => r.sequence_number,
            Packet::Response(r) => r.sequence_number,
            Packet::Data(d) => d.packet_id,
            Packet::Ack(a) => u64::from_be_bytes(a.payload[..8].try_into().unwrap()),
            Packet::Plain(p) => p.packet_id,
            Packet::PlainAck { message_id, .. } => *message_id,
        }
    }
}
