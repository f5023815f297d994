//! Signed, flooded route discovery.
//!
//! A source signs a request carrying its weight list and floods it. Every
//! intermediate node verifies the chain of signatures, appends itself, signs
//! the packet so far and rebroadcasts the first copy it sees. The destination
//! answers every copy that arrives over a distinct path; the answer travels
//! back along the accumulated path and the source verifies it against the
//! request it still holds.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::crypto::{CryptoProvider, SharedKey, Tag};
use crate::metrics::DiscoveryTimestamps;
use crate::types::{has_duplicates, Link, NodeId, Path};

#[derive(Debug, Clone, PartialEq)]
pub struct RouteRequest {
    pub source: NodeId,
    pub destination: NodeId,
    pub sequence_number: u64,
    pub weight_list: Vec<(Link, f64)>,
    /// Simulated send time at the source.
    pub sent_at: f64,
    pub source_signature: Tag,
    /// Intermediate nodes in traversal order. Excludes source and destination.
    pub accumulated_path: Vec<NodeId>,
    /// `hop_signatures[i]` is the signature of `accumulated_path[i]`.
    pub hop_signatures: Vec<Tag>,
}

impl RouteRequest {
    fn signed_header(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(28 + self.weight_list.len() * 16);
        b.extend_from_slice(&self.source.0.to_be_bytes());
        b.extend_from_slice(&self.destination.0.to_be_bytes());
        b.extend_from_slice(&self.sequence_number.to_be_bytes());
        b.extend_from_slice(&self.sent_at.to_bits().to_be_bytes());
        b.extend_from_slice(&(self.weight_list.len() as u32).to_be_bytes());
        for (link, w) in &self.weight_list {
            let (a, z) = link.endpoints();
            b.extend_from_slice(&a.0.to_be_bytes());
            b.extend_from_slice(&z.0.to_be_bytes());
            b.extend_from_slice(&w.to_bits().to_be_bytes());
        }
        b
    }

    /// Bytes covered by the signature of the hop at `hop`: the signed header,
    /// the source signature, the path up to and including `hop`, and every
    /// earlier hop signature.
    fn hop_message(&self, path: &[NodeId], hop_sigs: &[Tag], hop: usize) -> Vec<u8> {
        let mut b = self.signed_header();
        b.extend_from_slice(&self.source_signature.to_be_bytes());
        for n in &path[..=hop] {
            b.extend_from_slice(&n.0.to_be_bytes());
        }
        for s in &hop_sigs[..hop] {
            b.extend_from_slice(&s.to_be_bytes());
        }
        b
    }

    fn verify_chain(&self, crypto: &dyn CryptoProvider, path: &[NodeId], sigs: &[Tag]) -> bool {
        if path.len() != sigs.len() {
            return false;
        }
        if !crypto.verify(self.source, &self.signed_header(), self.source_signature) {
            return false;
        }
        (0..path.len()).all(|i| crypto.verify(path[i], &self.hop_message(path, sigs, i), sigs[i]))
    }

    /// Checks the source signature and every per-hop signature.
    pub fn verify(&self, crypto: &dyn CryptoProvider) -> bool {
        self.verify_chain(crypto, &self.accumulated_path, &self.hop_signatures)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteResponse {
    pub source: NodeId,
    pub destination: NodeId,
    pub sequence_number: u64,
    pub discovered_path: Path,
    pub hop_signatures: Vec<Tag>,
    pub request_received_at: f64,
    pub reply_sent_at: f64,
    pub destination_signature: Tag,
}

impl RouteResponse {
    fn signed_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&self.source.0.to_be_bytes());
        b.extend_from_slice(&self.destination.0.to_be_bytes());
        b.extend_from_slice(&self.sequence_number.to_be_bytes());
        for n in self.discovered_path.nodes() {
            b.extend_from_slice(&n.0.to_be_bytes());
        }
        for s in &self.hop_signatures {
            b.extend_from_slice(&s.to_be_bytes());
        }
        b.extend_from_slice(&self.request_received_at.to_bits().to_be_bytes());
        b.extend_from_slice(&self.reply_sent_at.to_bits().to_be_bytes());
        b
    }

    pub fn verify_destination(&self, crypto: &dyn CryptoProvider) -> bool {
        self.discovered_path.source() == self.source
            && self.discovered_path.destination() == self.destination
            && crypto.verify(self.destination, &self.signed_bytes(), self.destination_signature)
    }
}

/// Why a discovery packet was discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    Duplicate,
    BadSignature,
    Loop,
    NotAddressed,
    Stale,
    AlreadyKnown,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RequestAction {
    Rebroadcast(RouteRequest),
    Respond(RouteResponse),
    Drop(DropReason),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DiscoveryStats {
    pub requests_initiated: u64,
    pub rebroadcasts: u64,
    pub responses_sent: u64,
    pub duplicates_dropped: u64,
    pub forged_dropped: u64,
    pub loops_dropped: u64,
    pub stale_responses: u64,
    pub routes_accepted: u64,
}

/// A verified route returned by discovery, with the timing needed for the
/// reference trip time.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscoveredRoute {
    pub path: Path,
    pub timestamps: DiscoveryTimestamps,
    pub sequence_number: u64,
}

#[derive(Debug, Clone)]
struct PendingDiscovery {
    request: RouteRequest,
}

/// Source-held shared keys for the probe candidates of one route.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProbeKeySet {
    keys: BTreeMap<NodeId, SharedKey>,
}

impl ProbeKeySet {
    pub fn get(&self, node: NodeId) -> Option<&SharedKey> {
        self.keys.get(&node)
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.keys.contains_key(&node)
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.keys.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

/// Keys for every node after the source: intermediates and the destination.
pub fn establish_probe_keys(crypto: &dyn CryptoProvider, route: &Path) -> ProbeKeySet {
    let source = route.source();
    let keys = route.nodes()[1..].iter().map(|&n| (n, crypto.shared_key(source, n))).collect();
    ProbeKeySet { keys }
}

/// Per-node discovery state machine.
#[derive(Debug, Clone)]
pub struct DiscoveryNode {
    id: NodeId,
    next_sequence: u64,
    seen: HashSet<(NodeId, u64)>,
    answered: HashSet<(NodeId, u64, Vec<NodeId>)>,
    pending: HashMap<NodeId, PendingDiscovery>,
    candidates: HashMap<NodeId, Vec<DiscoveredRoute>>,
    stats: DiscoveryStats,
}

impl DiscoveryNode {
    pub fn new(id: NodeId) -> Self {
        DiscoveryNode {
            id,
            next_sequence: 1,
            seen: HashSet::new(),
            answered: HashSet::new(),
            pending: HashMap::new(),
            candidates: HashMap::new(),
            stats: DiscoveryStats::default(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn stats(&self) -> DiscoveryStats {
        self.stats
    }

    /// Sequence number of the discovery currently pending for `destination`.
    pub fn pending_sequence(&self, destination: NodeId) -> Option<u64> {
        self.pending.get(&destination).map(|p| p.request.sequence_number)
    }

    /// Creates and signs a fresh request. The caller broadcasts it.
    pub fn initiate_request(
        &mut self,
        crypto: &dyn CryptoProvider,
        destination: NodeId,
        weight_list: Vec<(Link, f64)>,
        now: f64,
    ) -> RouteRequest {
        let sequence_number = self.next_sequence;
        self.next_sequence += 1;
        let mut req = RouteRequest {
            source: self.id,
            destination,
            sequence_number,
            weight_list,
            sent_at: now,
            source_signature: 0,
            accumulated_path: Vec::new(),
            hop_signatures: Vec::new(),
        };
        req.source_signature = crypto.sign(self.id, &req.signed_header());
        self.seen.insert((self.id, sequence_number));
        self.pending.insert(destination, PendingDiscovery { request: req.clone() });
        self.stats.requests_initiated += 1;
        req
    }

    /// Dispatches an incoming request: the destination answers, everyone else
    /// propagates.
    pub fn receive_request(
        &mut self,
        crypto: &dyn CryptoProvider,
        req: &RouteRequest,
        now: f64,
    ) -> RequestAction {
        if req.destination == self.id {
            match self.initiate_response(crypto, req, now) {
                Ok(resp) => RequestAction::Respond(resp),
                Err(reason) => RequestAction::Drop(reason),
            }
        } else {
            self.propagate_request(crypto, req)
        }
    }

    pub fn propagate_request(&mut self, crypto: &dyn CryptoProvider, req: &RouteRequest) -> RequestAction {
        if self.seen.contains(&(req.source, req.sequence_number)) {
            self.stats.duplicates_dropped += 1;
            return RequestAction::Drop(DropReason::Duplicate);
        }
        if !req.verify(crypto) {
            self.stats.forged_dropped += 1;
            return RequestAction::Drop(DropReason::BadSignature);
        }
        if req.source == self.id || req.accumulated_path.contains(&self.id) {
            self.stats.loops_dropped += 1;
            return RequestAction::Drop(DropReason::Loop);
        }
        self.seen.insert((req.source, req.sequence_number));
        let mut out = req.clone();
        out.accumulated_path.push(self.id);
        let hop = out.accumulated_path.len() - 1;
        let msg = out.hop_message(&out.accumulated_path, &out.hop_signatures, hop);
        out.hop_signatures.push(crypto.sign(self.id, &msg));
        self.stats.rebroadcasts += 1;
        RequestAction::Rebroadcast(out)
    }

    /// Answers one arriving copy of a request addressed to this node.
    pub fn initiate_response(
        &mut self,
        crypto: &dyn CryptoProvider,
        req: &RouteRequest,
        now: f64,
    ) -> Result<RouteResponse, DropReason> {
        if req.destination != self.id {
            return Err(DropReason::NotAddressed);
        }
        if !req.verify(crypto) {
            self.stats.forged_dropped += 1;
            return Err(DropReason::BadSignature);
        }
        let mut nodes = Vec::with_capacity(req.accumulated_path.len() + 2);
        nodes.push(req.source);
        nodes.extend_from_slice(&req.accumulated_path);
        nodes.push(self.id);
        let Some(path) = Path::new(nodes) else {
            self.stats.loops_dropped += 1;
            return Err(DropReason::Loop);
        };
        let key = (req.source, req.sequence_number, req.accumulated_path.clone());
        if !self.answered.insert(key) {
            self.stats.duplicates_dropped += 1;
            return Err(DropReason::Duplicate);
        }
        let mut resp = RouteResponse {
            source: req.source,
            destination: self.id,
            sequence_number: req.sequence_number,
            discovered_path: path,
            hop_signatures: req.hop_signatures.clone(),
            request_received_at: now,
            reply_sent_at: now,
            destination_signature: 0,
        };
        resp.destination_signature = crypto.sign(self.id, &resp.signed_bytes());
        self.stats.responses_sent += 1;
        Ok(resp)
    }

    /// Relay check for an intermediate node on the reverse path. Returns the
    /// next hop toward the source, or `None` if the response must be dropped.
    pub fn relay_response(&mut self, crypto: &dyn CryptoProvider, resp: &RouteResponse) -> Option<NodeId> {
        let pos = resp.discovered_path.position(self.id)?;
        if pos == 0 {
            return None;
        }
        if !resp.verify_destination(crypto) {
            self.stats.forged_dropped += 1;
            return None;
        }
        Some(resp.discovered_path.nodes()[pos - 1])
    }

    /// Verifies a response at the source and stores its path as a candidate.
    /// Returns `Ok(true)` when the route is new.
    pub fn accept_response(
        &mut self,
        crypto: &dyn CryptoProvider,
        resp: &RouteResponse,
        now: f64,
    ) -> Result<bool, DropReason> {
        if resp.source != self.id {
            return Err(DropReason::NotAddressed);
        }
        let Some(pending) = self.pending.get(&resp.destination) else {
            self.stats.stale_responses += 1;
            return Err(DropReason::Stale);
        };
        if pending.request.sequence_number != resp.sequence_number {
            self.stats.stale_responses += 1;
            return Err(DropReason::Stale);
        }
        let nodes = resp.discovered_path.nodes();
        let intermediates = &nodes[1..nodes.len() - 1];
        if has_duplicates(nodes)
            || !resp.verify_destination(crypto)
            || !pending.request.verify_chain(crypto, intermediates, &resp.hop_signatures)
        {
            self.stats.forged_dropped += 1;
            return Err(DropReason::BadSignature);
        }
        let timestamps = DiscoveryTimestamps {
            request_sent: pending.request.sent_at,
            request_received: resp.request_received_at,
            reply_sent: resp.reply_sent_at,
            reply_received: now,
        };
        let list = self.candidates.entry(resp.destination).or_default();
        if list.iter().any(|c| c.path == resp.discovered_path) {
            return Ok(false);
        }
        list.push(DiscoveredRoute {
            path: resp.discovered_path.clone(),
            timestamps,
            sequence_number: resp.sequence_number,
        });
        self.stats.routes_accepted += 1;
        Ok(true)
    }

    pub fn candidates(&self, destination: NodeId) -> &[DiscoveredRoute] {
        self.candidates.get(&destination).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn retain_candidates(&mut self, destination: NodeId, mut keep: impl FnMut(&DiscoveredRoute) -> bool) {
        if let Some(list) = self.candidates.get_mut(&destination) {
            list.retain(|c| keep(c));
        }
    }
}
