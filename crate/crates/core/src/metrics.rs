//! Traffic tables, anomaly metrics, link weights and path trust.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::types::{Link, NodeId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("anomaly weights must be non-negative and sum to 1 (got {0}, {1}, {2})")]
    BadWeights(f64, f64, f64),
    #[error("packet {0} was never recorded as sent")]
    UnknownPacket(u64),
    #[error("packet {id} received at {received} before it was sent at {sent}")]
    ReceivedBeforeSent { id: u64, sent: f64, received: f64 },
}

/// Send and receive time of one packet, in simulated seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficRecord {
    pub packet_id: u64,
    pub sent_at: f64,
    pub received_at: Option<f64>,
}

/// Per-flow packet id -> timestamps.
#[derive(Debug, Clone, Default)]
pub struct TrafficTable {
    records: BTreeMap<u64, TrafficRecord>,
}

impl TrafficTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_send(&mut self, packet_id: u64, at: f64) {
        self.records.insert(packet_id, TrafficRecord { packet_id, sent_at: at, received_at: None });
    }

    pub fn record_receive(&mut self, packet_id: u64, at: f64) -> Result<(), MetricsError> {
        let rec = self.records.get_mut(&packet_id).ok_or(MetricsError::UnknownPacket(packet_id))?;
        if at < rec.sent_at {
            return Err(MetricsError::ReceivedBeforeSent { id: packet_id, sent: rec.sent_at, received: at });
        }
        rec.received_at.get_or_insert(at);
        Ok(())
    }

    pub fn remove(&mut self, packet_id: u64) -> Option<TrafficRecord> {
        self.records.remove(&packet_id)
    }

    pub fn get(&self, packet_id: u64) -> Option<&TrafficRecord> {
        self.records.get(&packet_id)
    }

    pub fn records(&self) -> impl Iterator<Item = &TrafficRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Route request and reply timing captured during discovery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscoveryTimestamps {
    pub request_sent: f64,
    pub request_received: f64,
    pub reply_sent: f64,
    pub reply_received: f64,
}

pub fn trip_time(sent: f64, received: f64) -> f64 {
    received - sent
}

/// Mean of the request and reply durations.
pub fn reference_time(d: &DiscoveryTimestamps) -> f64 {
    ((d.request_received - d.request_sent) + (d.reply_received - d.reply_sent)) / 2.0
}

/// Negative when the packet was slower than the reference.
pub fn trip_variation(reference: f64, trip: f64) -> f64 {
    reference - trip
}

/// Half-open interval of simulated time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWindow {
    pub start: f64,
    pub end: f64,
}

impl TimeWindow {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.len() <= 0.0
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

/// Send rate minus receive rate over `window`, in packets per second.
pub fn frequency_change(sent_times: &[f64], recv_times: &[f64], window: TimeWindow) -> f64 {
    if window.is_empty() {
        return 0.0;
    }
    let sent = sent_times.iter().filter(|&&t| window.contains(t)).count() as f64;
    let recv = recv_times.iter().filter(|&&t| window.contains(t)).count() as f64;
    sent / window.len() - recv / window.len()
}

/// Packets sent in `window` with no receive time that are at least
/// `ack_timeout` old at `now`.
pub fn lost_packets(table: &TrafficTable, window: TimeWindow, now: f64, ack_timeout: f64) -> usize {
    table
        .records()
        .filter(|r| window.contains(r.sent_at) && r.received_at.is_none() && now - r.sent_at >= ack_timeout)
        .count()
}

/// Loss classification timeout: four reference trip times, at least 1 s.
pub fn ack_timeout(reference: f64) -> f64 {
    (4.0 * reference).max(1.0)
}

/// Raw inputs of the anomaly function for one measurement window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalyInputs {
    pub trip_variation: f64,
    pub frequency_change: f64,
    pub lost: usize,
    pub sent: usize,
    pub reference_time: f64,
    pub send_rate: f64,
}

impl AnomalyInputs {
    /// Summarizes fully classified records of one window. `trip_variation`
    /// is the mean over delivered packets.
    pub fn from_records(records: &[TrafficRecord], reference: f64, window_seconds: f64) -> Self {
        let sent = records.len();
        let delivered: Vec<f64> =
            records.iter().filter_map(|r| r.received_at.map(|rx| trip_time(r.sent_at, rx))).collect();
        let lost = sent - delivered.len();
        let trip_variation = if delivered.is_empty() {
            0.0
        } else {
            delivered.iter().map(|&t| trip_variation(reference, t)).sum::<f64>() / delivered.len() as f64
        };
        let (send_rate, frequency_change) = if window_seconds > 0.0 {
            let s = sent as f64 / window_seconds;
            (s, s - delivered.len() as f64 / window_seconds)
        } else {
            (0.0, 0.0)
        };
        AnomalyInputs { trip_variation, frequency_change, lost, sent, reference_time: reference, send_rate }
    }
}

/// Convex weights of the anomaly terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalyWeights {
    trip: f64,
    frequency: f64,
    loss: f64,
}

impl AnomalyWeights {
    pub fn new(trip: f64, frequency: f64, loss: f64) -> Result<Self, MetricsError> {
        let ok = [trip, frequency, loss].iter().all(|w| w.is_finite() && *w >= 0.0)
            && ((trip + frequency + loss) - 1.0).abs() < 1e-9;
        if !ok {
            return Err(MetricsError::BadWeights(trip, frequency, loss));
        }
        Ok(AnomalyWeights { trip, frequency, loss })
    }

    pub fn trip(&self) -> f64 {
        self.trip
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    pub fn loss(&self) -> f64 {
        self.loss
    }
}

impl Default for AnomalyWeights {
    fn default() -> Self {
        AnomalyWeights { trip: 0.3, frequency: 0.3, loss: 0.4 }
    }
}

/// Anomaly score in `[0, 1]`: a convex combination of the slowdown relative
/// to the reference time, the relative drop in receive rate, and the loss
/// fraction. A term whose normalizer is zero contributes nothing.
pub fn anomaly(a: &AnomalyInputs, w: &AnomalyWeights) -> f64 {
    let delay = if a.reference_time > 0.0 { (-a.trip_variation / a.reference_time).clamp(0.0, 1.0) } else { 0.0 };
    let freq = if a.send_rate > 0.0 { (a.frequency_change / a.send_rate).clamp(0.0, 1.0) } else { 0.0 };
    let loss = if a.sent > 0 { a.lost as f64 / a.sent as f64 } else { 0.0 };
    w.trip * delay + w.frequency * freq + w.loss * loss
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig {
    /// Link weight multiplier per verdict, > 1.
    pub factor: f64,
    /// Endpoint rating multiplier per verdict, < 1.
    pub rating_factor: f64,
    /// Seconds between halvings of the excess weight; `None` disables decay.
    pub decay_period: Option<f64>,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig { factor: 2.0, rating_factor: 0.5, decay_period: None }
    }
}

/// Link weights (>= 1) and node ratings (in `[0, 1]`) held by one source.
#[derive(Debug, Clone)]
pub struct LinkWeightTable {
    weights: HashMap<Link, f64>,
    ratings: HashMap<NodeId, f64>,
    initial_rating: f64,
}

impl LinkWeightTable {
    pub fn new(initial_rating: f64) -> Self {
        LinkWeightTable { weights: HashMap::new(), ratings: HashMap::new(), initial_rating: initial_rating.clamp(0.0, 1.0) }
    }

    pub fn weight(&self, link: Link) -> f64 {
        self.weights.get(&link).copied().unwrap_or(1.0)
    }

    pub fn rating(&self, node: NodeId) -> f64 {
        self.ratings.get(&node).copied().unwrap_or(self.initial_rating)
    }

    /// Sets a weight directly, floored at 1.
    pub fn set_weight(&mut self, link: Link, weight: f64) {
        self.weights.insert(link, weight.max(1.0));
    }

    pub fn set_rating(&mut self, node: NodeId, rating: f64) {
        self.ratings.insert(node, rating.clamp(0.0, 1.0));
    }

    /// Multiplies the link weight by `factor` and cuts both endpoint ratings.
    pub fn penalize_link(&mut self, link: Link, cfg: &PenaltyConfig) {
        *self.weights.entry(link).or_insert(1.0) *= cfg.factor;
        let (a, b) = link.endpoints();
        for n in [a, b] {
            let r = self.rating(n) * cfg.rating_factor;
            self.set_rating(n, r);
        }
    }

    /// Raises each node's rating by `delta`, capped at 1.
    pub fn reward(&mut self, nodes: &[NodeId], delta: f64) {
        for &n in nodes {
            let r = self.rating(n) + delta;
            self.set_rating(n, r);
        }
    }

    /// Halves every weight's excess over 1.
    pub fn decay(&mut self) {
        for w in self.weights.values_mut() {
            *w = 1.0 + (*w - 1.0) / 2.0;
        }
    }

    /// Links with weight above 1, sorted, for the discovery weight list.
    pub fn penalized_links(&self) -> Vec<(Link, f64)> {
        let mut v: Vec<(Link, f64)> = self.weights.iter().filter(|(_, &w)| w > 1.0).map(|(l, w)| (*l, *w)).collect();
        v.sort_by_key(|a| a.0);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustParams {
    pub initial: f64,
    pub up: f64,
    pub down: f64,
    pub threshold: f64,
    /// Packets per measurement window.
    pub window: usize,
    /// Windows scoring at or above this anomaly are bad.
    pub anomaly_threshold: f64,
}

impl Default for TrustParams {
    fn default() -> Self {
        TrustParams { initial: 0.5, up: 0.05, down: 0.5, threshold: 0.2, window: 20, anomaly_threshold: 0.15 }
    }
}

impl TrustParams {
    pub fn is_well_behaved(&self, anomaly: f64) -> bool {
        anomaly < self.anomaly_threshold
    }
}

/// Additive increase on a good window, multiplicative decrease on a bad one.
pub fn update_trust(trust: f64, well_behaved: bool, p: &TrustParams) -> f64 {
    if well_behaved {
        (trust + p.up).min(1.0)
    } else {
        trust * p.down
    }
}

/// One exported row of per-window path metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSnapshot {
    pub route: String,
    pub window: u64,
    pub trip_variation: f64,
    pub frequency_change: f64,
    pub lost: usize,
    pub anomaly: f64,
    pub trust: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equation_examples() {
        assert_eq!(trip_time(10.0, 15.0), 5.0);
        assert_eq!(trip_time(3.2, 3.2), 0.0);
        let d = DiscoveryTimestamps { request_sent: 0.0, request_received: 4.0, reply_sent: 4.0, reply_received: 10.0 };
        assert_eq!(reference_time(&d), 5.0);
        let sym = DiscoveryTimestamps { request_sent: 1.0, request_received: 3.5, reply_sent: 7.0, reply_received: 9.5 };
        assert_eq!(reference_time(&sym), 2.5);
        let d = DiscoveryTimestamps { request_sent: 1.0, request_received: 1.5, reply_sent: 2.0, reply_received: 2.1 };
        assert!((reference_time(&d) - 0.3).abs() < 1e-12);
        assert_eq!(trip_variation(5.0, 5.0), 0.0);
        assert_eq!(trip_variation(5.0, 9.0), -4.0);
    }

    #[test]
    fn frequency_change_examples() {
        let w = TimeWindow { start: 0.0, end: 5.0 };
        let sent: Vec<f64> = (0..10).map(|i| i as f64 * 0.5).collect();
        assert_eq!(frequency_change(&sent, &sent, w), 0.0);
        assert_eq!(frequency_change(&sent, &sent[..5], w), 1.0);
        assert_eq!(frequency_change(&sent, &[], w), 2.0);
    }

    #[test]
    fn lost_packets_respects_timeout() {
        let mut t = TrafficTable::new();
        for i in 0..10 {
            t.record_send(i, i as f64);
            if i >= 3 {
                t.record_receive(i, i as f64 + 0.01).unwrap();
            }
        }
        let w = TimeWindow { start: 0.0, end: 100.0 };
        assert_eq!(lost_packets(&t, w, 20.0, 1.0), 3);
        t.record_send(99, 19.9);
        assert_eq!(lost_packets(&t, w, 20.0, 1.0), 3);
        assert_eq!(t.record_receive(5000, 1.0), Err(MetricsError::UnknownPacket(5000)));
        assert!(t.record_receive(99, 1.0).is_err());
    }

    #[test]
    fn anomaly_examples() {
        let w = AnomalyWeights::default();
        let clean = AnomalyInputs { trip_variation: 0.0, frequency_change: 0.0, lost: 0, sent: 20, reference_time: 0.02, send_rate: 4.0 };
        assert_eq!(anomaly(&clean, &w), 0.0);
        let hole = AnomalyInputs { trip_variation: 0.0, frequency_change: 4.0, lost: 20, sent: 20, reference_time: 0.02, send_rate: 4.0 };
        assert!((anomaly(&hole, &w) - 0.7).abs() < 1e-12);
        let zero_guard = AnomalyInputs { trip_variation: -1.0, frequency_change: 1.0, lost: 0, sent: 0, reference_time: 0.0, send_rate: 0.0 };
        assert_eq!(anomaly(&zero_guard, &w), 0.0);
        assert!(AnomalyWeights::new(0.5, 0.5, 0.5).is_err());
    }

    #[test]
    fn penalties_multiply_and_stay_local() {
        let mut t = LinkWeightTable::new(0.5);
        let l = Link::new(NodeId(6), NodeId(7));
        let cfg = PenaltyConfig::default();
        t.penalize_link(l, &cfg);
        assert_eq!(t.weight(l), 2.0);
        t.penalize_link(l, &cfg);
        assert_eq!(t.weight(l), 4.0);
        assert_eq!(t.rating(NodeId(6)), 0.125);
        assert_eq!(t.rating(NodeId(8)), 0.5);
        assert_eq!(t.weight(Link::new(NodeId(7), NodeId(8))), 1.0);
        assert_eq!(t.penalized_links(), vec![(l, 4.0)]);
        t.decay();
        assert_eq!(t.weight(l), 2.5);
    }

    #[test]
    fn ratings_are_clamped() {
        let mut t = LinkWeightTable::new(0.5);
        t.reward(&[NodeId(1)], 0.9);
        assert_eq!(t.rating(NodeId(1)), 1.0);
    }

    #[test]
    fn trust_examples() {
        let p = TrustParams::default();
        assert!((update_trust(0.5, true, &p) - 0.55).abs() < 1e-12);
        assert_eq!(update_trust(0.5, false, &p), 0.25);
        let after_two = update_trust(update_trust(0.5, false, &p), false, &p);
        assert_eq!(after_two, 0.125);
        assert!(after_two < p.threshold);
        assert_eq!(update_trust(0.99, true, &p), 1.0);
    }
}
