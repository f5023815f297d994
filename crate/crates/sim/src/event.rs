use std::cmp::Ordering;
use std::collections::BinaryHeap;

use smt_core::NodeId;

use crate::packet::Packet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timer {
    AckDeadline { route_id: u64, packet_id: u64 },
    DiscoveryDone { sequence: u64 },
    Rediscover,
    Decay,
}

#[derive(Debug, Clone)]
pub enum EventKind {
    Delivery { tx: u64, from: NodeId, to: NodeId, packet: Packet },
    MobilityUpdate,
    AppSend,
    Timer(Timer),
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Delivery { .. } => "packet-delivery",
            EventKind::MobilityUpdate => "mobility-update",
            EventKind::AppSend => "app-send",
            EventKind::Timer(_) => "timer",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Event {
    pub time: f64,
    pub seq: u64,
    pub kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

/// Time-ordered queue; equal times pop in insertion order.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule(&mut self, time: f64, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time, seq, kind });
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
