//! Source-side Byzantine link localization by adaptive probing.
//!
//! Probes are route positions whose nodes must acknowledge every data
//! packet. Consecutive probes bound intervals that partition the route. Each
//! interval keeps a sliding window of recent outcomes; when losses in a
//! window cross the threshold a fault is registered on that interval and it
//! is split at its midpoint. A fault on a single-link interval yields the
//! verdict.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::crypto::{CryptoProvider, Tag};
use crate::discovery::ProbeKeySet;
use crate::types::{NodeId, Path};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LocalizerError {
    #[error("probe node {0} has no shared key")]
    MissingKey(NodeId),
    #[error("route of {0} links cannot be encoded in a one-byte probe header")]
    RouteTooLong(usize),
    #[error("malformed probe header")]
    MalformedHeader,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizerConfig {
    /// Outcomes kept per interval.
    pub window: usize,
    /// Fraction of `window` that losses must exceed to register a fault.
    pub loss_threshold: f64,
    /// Outcomes required before an interval is judged at all.
    pub min_outcomes: usize,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        LocalizerConfig { window: 10, loss_threshold: 0.2, min_outcomes: 5 }
    }
}

/// Sub-path between two consecutive probe positions, `start < end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
}

impl Interval {
    pub fn links(&self) -> usize {
        self.end - self.start
    }

    /// Floor of the index average.
    pub fn midpoint(&self) -> usize {
        (self.start + self.end) / 2
    }
}

/// Sorted probe positions on a route of `links` links. Always contains the
/// destination position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeList {
    links: usize,
    positions: BTreeSet<usize>,
}

impl ProbeList {
    pub fn new(links: usize) -> Self {
        assert!(links >= 1, "a route has at least one link");
        ProbeList { links, positions: BTreeSet::from([links]) }
    }

    pub fn links(&self) -> usize {
        self.links
    }

    pub fn positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.positions.iter().copied()
    }

    pub fn contains(&self, pos: usize) -> bool {
        self.positions.contains(&pos)
    }

    pub fn intervals(&self) -> Vec<Interval> {
        let mut start = 0;
        self.positions
            .iter()
            .map(|&end| {
                let iv = Interval { start, end };
                start = end;
                iv
            })
            .collect()
    }

    fn insert(&mut self, pos: usize) {
        debug_assert!(pos > 0 && pos < self.links);
        self.positions.insert(pos);
    }

    /// Header layout: count (1 byte) then ascending positions (1 byte each).
    pub fn encode(&self) -> Result<Vec<u8>, LocalizerError> {
        if self.links > u8::MAX as usize {
            return Err(LocalizerError::RouteTooLong(self.links));
        }
        let mut out = Vec::with_capacity(1 + self.positions.len());
        out.push(self.positions.len() as u8);
        out.extend(self.positions.iter().map(|&p| p as u8));
        Ok(out)
    }

    pub fn decode(bytes: &[u8], links: usize) -> Result<Self, LocalizerError> {
        let (&count, rest) = bytes.split_first().ok_or(LocalizerError::MalformedHeader)?;
        if rest.len() != count as usize || count == 0 {
            return Err(LocalizerError::MalformedHeader);
        }
        let positions: BTreeSet<usize> = rest.iter().map(|&b| b as usize).collect();
        let ascending = rest.windows(2).all(|w| w[0] < w[1]);
        if !ascending || positions.last() != Some(&links) || positions.contains(&0) {
            return Err(LocalizerError::MalformedHeader);
        }
        Ok(ProbeList { links, positions })
    }
}

/// Sliding window of per-packet outcomes for one interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LossWindow {
    capacity: usize,
    lost: VecDeque<bool>,
    losses: usize,
}

impl LossWindow {
    pub fn new(capacity: usize) -> Self {
        LossWindow { capacity, lost: VecDeque::with_capacity(capacity), losses: 0 }
    }

    pub fn push(&mut self, lost: bool) {
        if self.lost.len() == self.capacity
            && self.lost.pop_front() == Some(true) {
                self.losses -= 1;
            }
        self.lost.push_back(lost);
        self.losses += usize::from(lost);
    }

    pub fn observed(&self) -> usize {
        self.lost.len()
    }

    pub fn losses(&self) -> usize {
        self.losses
    }

    pub fn reset(&mut self) {
        self.lost.clear();
        self.losses = 0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdCheck {
    Ok,
    FaultRegistered,
}

/// Registers a fault iff at least `min_outcomes` were observed and
/// `losses / window > loss_threshold`.
pub fn check_threshold(window: &LossWindow, config: &LocalizerConfig) -> ThresholdCheck {
    if window.observed() < config.min_outcomes {
        return ThresholdCheck::Ok;
    }
    if window.losses() as f64 / config.window as f64 > config.loss_threshold {
        ThresholdCheck::FaultRegistered
    } else {
        ThresholdCheck::Ok
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalOutcome {
    Delivered,
    Lost,
    Unknown,
}

/// Per-interval outcomes of one packet given the positions that acked.
///
/// The source (position 0) counts as acked. Walking downstream, an interval
/// whose far probe acked is delivered; the first interval whose far probe is
/// silent is lost and everything after it is unknown.
pub fn classify(probes: &ProbeList, acked: &BTreeSet<usize>) -> Vec<(Interval, IntervalOutcome)> {
    let mut reached = true;
    probes
        .intervals()
        .into_iter()
        .map(|iv| {
            let outcome = if !reached {
                IntervalOutcome::Unknown
            } else if acked.contains(&iv.end) {
                IntervalOutcome::Delivered
            } else {
                reached = false;
                IntervalOutcome::Lost
            };
            (iv, outcome)
        })
        .collect()
}

/// Link identified as faulty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultVerdict {
    /// Route-ordered endpoints.
    pub faulty_link: (NodeId, NodeId),
    /// Route position of the upstream endpoint.
    pub position: usize,
    /// Fault registrations that split an interval during this episode. The
    /// final threshold crossing on the single-link interval is the verdict
    /// itself and is not included.
    pub registrations: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Subdivision {
    Refined(ProbeList),
    Verdict { start: usize },
}

/// Splits a faulted interval at its midpoint, or reports the single link.
pub fn subdivide(probes: &ProbeList, faulted: Interval) -> Subdivision {
    if faulted.links() == 1 {
        return Subdivision::Verdict { start: faulted.start };
    }
    let mut out = probes.clone();
    out.insert(faulted.midpoint());
    Subdivision::Refined(out)
}

/// Authenticated acknowledgement from one probe node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AckPayload {
    pub packet_id: u64,
    pub probe: NodeId,
    pub tag: Tag,
}

pub const ACK_LEN: usize = 8 + 4 + 8;

impl AckPayload {
    fn tagged_bytes(packet_id: u64, probe: NodeId) -> [u8; 12] {
        let mut b = [0u8; 12];
        b[..8].copy_from_slice(&packet_id.to_be_bytes());
        b[8..].copy_from_slice(&probe.0.to_be_bytes());
        b
    }

    /// Built by the probe node with the key it shares with the source.
    pub fn new(crypto: &dyn CryptoProvider, source: NodeId, probe: NodeId, packet_id: u64) -> Self {
        let key = crypto.shared_key(source, probe);
        let tag = crypto.mac(&key, &Self::tagged_bytes(packet_id, probe));
        AckPayload { packet_id, probe, tag }
    }

    /// packet-id (8) | probe-node-id (4) | tag (8), all big-endian.
    pub fn to_bytes(&self) -> [u8; ACK_LEN] {
        let mut b = [0u8; ACK_LEN];
        b[..12].copy_from_slice(&Self::tagged_bytes(self.packet_id, self.probe));
        b[12..].copy_from_slice(&self.tag.to_be_bytes());
        b
    }

    pub fn from_bytes(b: &[u8]) -> Option<Self> {
        if b.len() != ACK_LEN {
            return None;
        }
        Some(AckPayload {
            packet_id: u64::from_be_bytes(b[..8].try_into().ok()?),
            probe: NodeId(u32::from_be_bytes(b[8..12].try_into().ok()?)),
            tag: u64::from_be_bytes(b[12..].try_into().ok()?),
        })
    }
}

/// What one recorded packet changed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LocalizerEvent {
    Subdivided { interval: Interval, new_probe: usize },
    Verdict(FaultVerdict),
}

/// Localization engine for one route.
#[derive(Debug, Clone)]
pub struct FaultLocalizer {
    route: Path,
    keys: ProbeKeySet,
    config: LocalizerConfig,
    probes: ProbeList,
    windows: BTreeMap<Interval, LossWindow>,
    registrations: u32,
    version: u64,
    rejected_acks: u64,
}

impl FaultLocalizer {
    pub fn new(route: Path, keys: ProbeKeySet, config: LocalizerConfig) -> Result<Self, LocalizerError> {
        if route.len() > u8::MAX as usize {
            return Err(LocalizerError::RouteTooLong(route.len()));
        }
        let probes = ProbeList::new(route.len());
        let mut loc = FaultLocalizer {
            route,
            keys,
            config,
            probes,
            windows: BTreeMap::new(),
            registrations: 0,
            version: 0,
            rejected_acks: 0,
        };
        loc.rebuild_windows();
        Ok(loc)
    }

    pub fn route(&self) -> &Path {
        &self.route
    }

    pub fn probes(&self) -> &ProbeList {
        &self.probes
    }

    /// Bumped whenever the probe list changes. Outcomes of packets sent under
    /// an older version must not be recorded.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn registrations(&self) -> u32 {
        self.registrations
    }

    pub fn rejected_acks(&self) -> u64 {
        self.rejected_acks
    }

    pub fn window(&self, interval: Interval) -> Option<&LossWindow> {
        self.windows.get(&interval)
    }

    fn rebuild_windows(&mut self) {
        let cap = self.config.window;
        let mut next = BTreeMap::new();
        for iv in self.probes.intervals() {
            let w = self.windows.remove(&iv).unwrap_or_else(|| LossWindow::new(cap));
            next.insert(iv, w);
        }
        self.windows = next;
    }

    /// Probe header for the next data packet. Every listed node must hold a
    /// shared key with the source.
    pub fn attach_probes(&self) -> Result<Vec<u8>, LocalizerError> {
        for pos in self.probes.positions() {
            let node = self.route.nodes()[pos];
            if !self.keys.contains(node) {
                return Err(LocalizerError::MissingKey(node));
            }
        }
        self.probes.encode()
    }

    /// Route position of an authentic ack from a current probe, or `None`
    /// (counted) for anything else.
    pub fn verify_ack(&mut self, crypto: &dyn CryptoProvider, packet_id: u64, ack: &AckPayload) -> Option<usize> {
        let pos = self.route.position(ack.probe).filter(|p| self.probes.contains(*p));
        let authentic = pos.is_some()
            && ack.packet_id == packet_id
            && self.keys.get(ack.probe).is_some_and(|key| {
                crypto.check_mac(key, &AckPayload::tagged_bytes(packet_id, ack.probe), ack.tag)
            });
        if authentic {
            pos
        } else {
            self.rejected_acks += 1;
            None
        }
    }

    /// Feeds the acked probe positions of one packet into the interval
    /// windows and acts on a threshold crossing.
    pub fn record_ack(&mut self, acked: &BTreeSet<usize>) -> Option<LocalizerEvent> {
        let outcomes = classify(&self.probes, acked);
        let mut faulted = None;
        for (iv, outcome) in outcomes {
            let lost = match outcome {
                IntervalOutcome::Delivered => false,
                IntervalOutcome::Lost => true,
                IntervalOutcome::Unknown => continue,
            };
            let window = self.windows.get_mut(&iv).expect("window per interval");
            window.push(lost);
            if faulted.is_none() && check_threshold(window, &self.config) == ThresholdCheck::FaultRegistered {
                window.reset();
                faulted = Some(iv);
            }
        }
        let iv = faulted?;
        match subdivide(&self.probes, iv) {
            Subdivision::Verdict { start } => {
                let nodes = self.route.nodes();
                Some(LocalizerEvent::Verdict(FaultVerdict {
                    faulty_link: (nodes[start], nodes[start + 1]),
                    position: start,
                    registrations: self.registrations,
                }))
            }
            Subdivision::Refined(next) => {
                self.registrations += 1;
                let new_probe = iv.midpoint();
                self.probes = next;
                self.version += 1;
                self.rebuild_windows();
                Some(LocalizerEvent::Subdivided { interval: iv, new_probe })
            }
        }
    }

    /// Starts a new episode on the same route.
    pub fn reset(&mut self) {
        self.probes = ProbeList::new(self.route.len());
        self.windows.clear();
        self.registrations = 0;
        self.version += 1;
        self.rebuild_windows();
    }
}
