//! Discrete-event engine running one scenario end to end.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smt_core::crypto::SimulatedCrypto;
use smt_core::discovery::{establish_probe_keys, DiscoveryNode, RequestAction, RouteRequest, RouteResponse};
use smt_core::dispersal::{disperse, reconstruct, MessageShare};
use smt_core::localizer::{AckPayload, FaultLocalizer, LocalizerEvent, ProbeList};
use smt_core::metrics::{
    ack_timeout, anomaly, reference_time, update_trust, AnomalyInputs, LinkWeightTable, MetricsSnapshot, TrafficRecord,
    TrafficTable,
};
use smt_core::selection::{dispersion_for, select_aps, RatioRater, Route};
use smt_core::{Link, NodeId, Path};

use crate::adversary::{apply_adversary, AdversaryBehavior, Disposition};
use crate::config::{AdversaryModel, ConfigError, Protocol, ScenarioConfig};
use crate::event::{EventKind, EventQueue, Timer};
use crate::packet::{AckPacket, DataPacket, Packet, PlainPacket};
use crate::topology::{build_topology, Connectivity, Point, Waypoint};

/// Extra simulated time after the last send so in-flight traffic settles.
const DRAIN: f64 = 5.0;

// independent random streams per purpose, so protocols share topology,
// mobility and adversary placement for a given seed
const STREAM_TOPOLOGY: u64 = 1;
const STREAM_ADVERSARY: u64 = 2;
const STREAM_LOSS: u64 = 3;
const STREAM_MOBILITY: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Per-category transmission counts. Every transmission ends in exactly one
/// of the disposition buckets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TransmissionCounters {
    pub sent: u64,
    pub delivered: u64,
    pub dropped_adversary: u64,
    pub dropped_loss: u64,
    pub dropped_disconnection: u64,
    pub in_flight_at_end: u64,
}

impl TransmissionCounters {
    pub fn disposed(&self) -> u64 {
        self.delivered + self.dropped_adversary + self.dropped_loss + self.dropped_disconnection + self.in_flight_at_end
    }

    pub fn is_conserved(&self) -> bool {
        self.sent == self.disposed()
    }
}

/// One line of the optional event log.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub kind: &'static str,
    pub from: Option<NodeId>,
    pub to: Option<NodeId>,
    pub packet_id: Option<u64>,
    pub disposition: &'static str,
}

impl fmt::Display for EventRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |n: Option<NodeId>| n.map(|n| n.0.to_string()).unwrap_or_else(|| "-".into());
        let pid = self.packet_id.map(|p| p.to_string()).unwrap_or_else(|| "-".into());
        write!(f, "{:.6},{},{},{},{},{}", self.time, self.kind, opt(self.from), opt(self.to), pid, self.disposition)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MessageOutcome {
    pub message_id: u64,
    pub sent_at: f64,
    pub delivered_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerdictRecord {
    pub time: f64,
    pub route: Path,
    pub link: (NodeId, NodeId),
    pub registrations: u32,
}

/// Delivered data share with the discovery reference of its route.
#[derive(Debug, Clone, PartialEq)]
pub struct TripSample {
    pub route: Path,
    pub sent_at: f64,
    pub received_at: f64,
    pub reference_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRecord {
    pub time: f64,
    pub routes: Vec<Path>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub protocol: Protocol,
    pub seed: u64,
    pub adversaries: Vec<NodeId>,
    pub initial_mean_degree: f64,
    pub messages_sent: u64,
    pub messages_delivered: u64,
    pub delivery_ratio: f64,
    /// Mean end-to-end delay of delivered messages, seconds.
    pub mean_delay: f64,
    pub localizations: u64,
    pub fault_registrations: u64,
    pub discoveries: u64,
    /// Control transmissions: discovery, acks.
    pub overhead_packets: u64,
    pub forged_dropped: u64,
    pub counters: TransmissionCounters,
    pub outcomes: Vec<MessageOutcome>,
    pub verdicts: Vec<VerdictRecord>,
    pub selections: Vec<SelectionRecord>,
    pub metrics: Vec<MetricsSnapshot>,
    pub trips: Vec<TripSample>,
    pub requests: Vec<RouteRequest>,
    pub event_log: Vec<EventRecord>,
}

impl RunStats {
    /// Delivery ratio over messages sent at or after `from`.
    pub fn delivery_ratio_since(&self, from: f64) -> f64 {
        let tail: Vec<_> = self.outcomes.iter().filter(|o| o.sent_at >= from).collect();
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().filter(|o| o.delivered_at.is_some()).count() as f64 / tail.len() as f64
    }
}

struct PendingProbe {
    version: u64,
    acked: BTreeSet<usize>,
}

struct ActiveRoute {
    id: u64,
    path: Arc<Path>,
    localizer: FaultLocalizer,
    reference: f64,
    ack_timeout: f64,
    pending: BTreeMap<u64, PendingProbe>,
    traffic: TrafficTable,
    window: Vec<u64>,
    windows_done: u64,
}

struct ApsState {
    weights: LinkWeightTable,
    trust: HashMap<Path, f64>,
    active: Vec<ActiveRoute>,
    discovering: Option<u64>,
    last_discovery: f64,
    rediscover_armed: bool,
    next_route_id: u64,
}

struct NspState {
    route: Option<Arc<Path>>,
    last_heard: f64,
    discovering: Option<u64>,
    last_discovery: f64,
}

enum Agent {
    Aps(Box<ApsState>),
    Nsp(NspState),
}

struct Node {
    discovery: DiscoveryNode,
    behavior: AdversaryBehavior,
}

struct Hop {
    from: NodeId,
    to: NodeId,
    tunnel: bool,
}

pub struct Simulator {
    cfg: ScenarioConfig,
    crypto: SimulatedCrypto,
    queue: EventQueue,
    now: f64,
    end: f64,
    waypoints: Vec<Waypoint>,
    conn: Connectivity,
    nodes: Vec<Node>,
    adversaries: Vec<NodeId>,
    initial_mean_degree: f64,
    in_flight: BTreeMap<u64, Hop>,
    next_tx: u64,
    next_packet_id: u64,
    mobility_rng: ChaCha8Rng,
    loss_rng: ChaCha8Rng,
    counters: TransmissionCounters,
    overhead: u64,
    messages: Vec<MessageOutcome>,
    inbox: BTreeMap<u64, Vec<MessageShare>>,
    agent: Agent,
    verdicts: Vec<VerdictRecord>,
    registrations: u64,
    selections: Vec<SelectionRecord>,
    metrics: Vec<MetricsSnapshot>,
    trips: Vec<TripSample>,
    requests: Vec<RouteRequest>,
    log: Vec<EventRecord>,
}

/// Validates `cfg` and runs it to completion.
pub fn run(cfg: &ScenarioConfig) -> Result<RunStats, ConfigError> {
    Ok(Simulator::new(cfg.clone())?.run())
}

/// Adversary identities: fixed, or a uniform draw among non-endpoints.
pub fn place_adversaries(cfg: &ScenarioConfig) -> Vec<NodeId> {
    if let Some(fixed) = &cfg.adversary_nodes {
        return fixed.clone();
    }
    let mut rng = stream(cfg.seed, STREAM_ADVERSARY);
    let t = &cfg.traffic;
    let mut pool: Vec<NodeId> =
        (0..cfg.node_count as u32).map(NodeId).filter(|&n| n != t.source && n != t.destination).collect();
    let (chosen, _) = pool.partial_shuffle(&mut rng, cfg.adversary_count);
    chosen.to_vec()
}

fn behaviors(cfg: &ScenarioConfig, adversaries: &[NodeId]) -> Vec<AdversaryBehavior> {
    let mut out = vec![AdversaryBehavior::Honest; cfg.node_count];
    match cfg.adversary_model {
        AdversaryModel::None => {}
        AdversaryModel::BlackHole => {
            for a in adversaries {
                out[a.0 as usize] = AdversaryBehavior::BlackHole;
            }
        }
        AdversaryModel::Delay => {
            for a in adversaries {
                out[a.0 as usize] = AdversaryBehavior::Delay { seconds: cfg.adversary_delay };
            }
        }
        AdversaryModel::Wormhole => {
            let pairs: Vec<(NodeId, NodeId)> = if cfg.wormhole_pairs.is_empty() {
                adversaries.chunks_exact(2).map(|c| (c[0], c[1])).collect()
            } else {
                cfg.wormhole_pairs.clone()
            };
            for a in adversaries {
                out[a.0 as usize] = AdversaryBehavior::BlackHole;
            }
            for (a, b) in pairs {
                out[a.0 as usize] = AdversaryBehavior::Wormhole { peer: b };
                out[b.0 as usize] = AdversaryBehavior::Wormhole { peer: a };
            }
        }
    }
    out
}

/// Deterministic message body.
fn payload(message_id: u64, size: usize) -> Vec<u8> {
    (0..size).map(|i| (message_id.wrapping_mul(131).wrapping_add(i as u64 * 7) & 0xff) as u8).collect()
}

impl Simulator {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let mut topo_rng = stream(cfg.seed, STREAM_TOPOLOGY);
        let (positions, conn) = build_topology(&cfg, &mut topo_rng);
        let mut mobility_rng = stream(cfg.seed, STREAM_MOBILITY);
        let area = (cfg.width, cfg.height);
        let waypoints: Vec<Waypoint> =
            positions.iter().map(|&p| Waypoint::start(p, area, &cfg.mobility, &mut mobility_rng)).collect();
        let adversaries = place_adversaries(&cfg);
        let nodes = behaviors(&cfg, &adversaries)
            .into_iter()
            .enumerate()
            .map(|(i, behavior)| Node { discovery: DiscoveryNode::new(NodeId(i as u32)), behavior })
            .collect();
        let agent = match cfg.protocol {
            Protocol::ApsSmt => Agent::Aps(Box::new(ApsState {
                weights: LinkWeightTable::new(cfg.params.trust.initial),
                trust: HashMap::new(),
                active: Vec::new(),
                discovering: None,
                last_discovery: f64::NEG_INFINITY,
                rediscover_armed: false,
                next_route_id: 0,
            })),
            Protocol::Nsp => {
                Agent::Nsp(NspState { route: None, last_heard: 0.0, discovering: None, last_discovery: f64::NEG_INFINITY })
            }
        };
        let end = cfg.traffic.start + cfg.traffic.duration + DRAIN;
        let initial_mean_degree = conn.mean_degree();
        Ok(Simulator {
            crypto: SimulatedCrypto::new(cfg.seed),
            queue: EventQueue::new(),
            now: 0.0,
            end,
            waypoints,
            conn,
            nodes,
            adversaries,
            initial_mean_degree,
            in_flight: BTreeMap::new(),
            next_tx: 0,
            next_packet_id: 0,
            mobility_rng,
            loss_rng: stream(cfg.seed, STREAM_LOSS),
            counters: TransmissionCounters::default(),
            overhead: 0,
            messages: Vec::new(),
            inbox: BTreeMap::new(),
            agent,
            verdicts: Vec::new(),
            registrations: 0,
            selections: Vec::new(),
            metrics: Vec::new(),
            trips: Vec::new(),
            requests: Vec::new(),
            log: Vec::new(),
            cfg,
        })
    }

    pub fn positions(&self) -> Vec<Point> {
        self.waypoints.iter().map(|w| w.position).collect()
    }

    pub fn connectivity(&self) -> &Connectivity {
        &self.conn
    }

    pub fn run(mut self) -> RunStats {
        if !self.cfg.mobility.is_static() {
            self.queue.schedule(self.cfg.mobility.update_interval, EventKind::MobilityUpdate);
        }
        if self.cfg.traffic.duration > 0.0 {
            self.queue.schedule(self.cfg.traffic.start, EventKind::AppSend);
        }
        if let Some(period) = self.cfg.params.penalty.decay_period {
            if self.cfg.protocol == Protocol::ApsSmt && period > 0.0 {
                self.queue.schedule(period, EventKind::Timer(Timer::Decay));
            }
        }
        self.start_discovery();
        while let Some(t) = self.queue.peek_time() {
            if t > self.end {
                break;
            }
            let ev = self.queue.pop().expect("peeked");
            self.now = ev.time;
            match ev.kind {
                EventKind::Delivery { tx, from, to, packet } => self.on_delivery(tx, from, to, packet),
                EventKind::MobilityUpdate => self.on_mobility(),
                EventKind::AppSend => self.on_app_send(),
                EventKind::Timer(t) => self.on_timer(t),
            }
        }
        self.counters.in_flight_at_end = self.in_flight.len() as u64;
        self.finish()
    }

    fn finish(self) -> RunStats {
        let sent = self.messages.len() as u64;
        let delays: Vec<f64> = self.messages.iter().filter_map(|m| m.delivered_at.map(|d| d - m.sent_at)).collect();
        let delivered = delays.len() as u64;
        let src = &self.nodes[self.cfg.traffic.source.0 as usize].discovery;
        RunStats {
            protocol: self.cfg.protocol,
            seed: self.cfg.seed,
            adversaries: self.adversaries,
            initial_mean_degree: self.initial_mean_degree,
            messages_sent: sent,
            messages_delivered: delivered,
            delivery_ratio: if sent == 0 { 0.0 } else { delivered as f64 / sent as f64 },
            mean_delay: if delays.is_empty() { 0.0 } else { delays.iter().sum::<f64>() / delays.len() as f64 },
            localizations: self.verdicts.len() as u64,
            fault_registrations: self.registrations,
            discoveries: src.stats().requests_initiated,
            overhead_packets: self.overhead,
            forged_dropped: self.nodes.iter().map(|n| n.discovery.stats().forged_dropped).sum(),
            counters: self.counters,
            outcomes: self.messages,
            verdicts: self.verdicts,
            selections: self.selections,
            metrics: self.metrics,
            trips: self.trips,
            requests: self.requests,
            event_log: self.log,
        }
    }

    fn log(&mut self, kind: &'static str, from: Option<NodeId>, to: Option<NodeId>, id: Option<u64>, disp: &'static str) {
        if self.cfg.log_events {
            self.log.push(EventRecord { time: self.now, kind, from, to, packet_id: id, disposition: disp });
        }
    }

    // ---- radio

    fn transmit(&mut self, from: NodeId, to: NodeId, packet: Packet, extra_delay: f64) {
        let kind = packet.kind();
        let id = packet.log_id();
        self.counters.sent += 1;
        if kind.is_control() {
            self.overhead += 1;
        }
        if !self.conn.connected(from.0 as usize, to.0 as usize) {
            self.counters.dropped_disconnection += 1;
            self.log(kind.name(), Some(from), Some(to), Some(id), "no-link");
            return;
        }
        if self.loss_rng.random_bool(self.cfg.queue_loss_prob) {
            self.counters.dropped_loss += 1;
            self.log(kind.name(), Some(from), Some(to), Some(id), "queue-loss");
            return;
        }
        let tx = self.next_tx;
        self.next_tx += 1;
        self.in_flight.insert(tx, Hop { from, to, tunnel: false });
        let at = self.now + self.cfg.per_hop_latency + extra_delay;
        self.queue.schedule(at, EventKind::Delivery { tx, from, to, packet });
        self.log(kind.name(), Some(from), Some(to), Some(id), "sent");
    }

    /// Out-of-band wormhole channel: no latency, no loss, no range limit.
    fn tunnel(&mut self, from: NodeId, to: NodeId, packet: Packet) {
        let kind = packet.kind();
        let id = packet.log_id();
        self.counters.sent += 1;
        if kind.is_control() {
            self.overhead += 1;
        }
        let tx = self.next_tx;
        self.next_tx += 1;
        self.in_flight.insert(tx, Hop { from, to, tunnel: true });
        self.queue.schedule(self.now, EventKind::Delivery { tx, from, to, packet });
        self.log(kind.name(), Some(from), Some(to), Some(id), "tunneled");
    }

    fn broadcast(&mut self, from: NodeId, packet: Packet) {
        let neighbors: Vec<u32> = self.conn.neighbors(from.0 as usize).to_vec();
        for n in neighbors {
            self.transmit(from, NodeId(n), packet.clone(), 0.0);
        }
    }

    fn are_peers(&self, a: NodeId, b: NodeId) -> bool {
        self.nodes[a.0 as usize].behavior.wormhole_peer() == Some(b)
    }

    /// Unicast along a discovered hop, using the tunnel between peers.
    fn send_hop(&mut self, from: NodeId, to: NodeId, packet: Packet) {
        if self.are_peers(from, to) {
            self.tunnel(from, to, packet);
        } else {
            self.transmit(from, to, packet, 0.0);
        }
    }

    fn on_mobility(&mut self) {
        let dt = self.cfg.mobility.update_interval;
        let area = (self.cfg.width, self.cfg.height);
        for w in &mut self.waypoints {
            w.advance(dt, area, &self.cfg.mobility, &mut self.mobility_rng);
        }
        let pos = self.positions();
        self.conn = Connectivity::compute(&pos, self.cfg.reception_range);
        let broken: Vec<u64> = self
            .in_flight
            .iter()
            .filter(|(_, h)| !h.tunnel && !self.conn.connected(h.from.0 as usize, h.to.0 as usize))
            .map(|(&tx, _)| tx)
            .collect();
        for tx in broken {
            let h = self.in_flight.remove(&tx).expect("listed");
            self.counters.dropped_disconnection += 1;
            self.log("link-break", Some(h.from), Some(h.to), Some(tx), "dropped");
        }
        self.queue.schedule(self.now + dt, EventKind::MobilityUpdate);
    }

    fn on_delivery(&mut self, tx: u64, from: NodeId, to: NodeId, packet: Packet) {
        if self.in_flight.remove(&tx).is_none() {
            return; // already counted when its link broke
        }
        let kind = packet.kind();
        let disposition = apply_adversary(self.nodes[to.0 as usize].behavior, kind);
        if disposition == Disposition::Drop {
            self.counters.dropped_adversary += 1;
            self.log(kind.name(), Some(from), Some(to), Some(packet.log_id()), "adversary-drop");
            return;
        }
        self.counters.delivered += 1;
        self.log(kind.name(), Some(from), Some(to), Some(packet.log_id()), "delivered");
        match packet {
            Packet::Request(req) => self.on_request(to, req, disposition),
            Packet::Response(resp) => self.on_response(to, resp),
            Packet::Data(d) => self.on_data(to, d, disposition),
            Packet::Ack(a) => self.on_ack(to, a),
            Packet::Plain(p) => self.on_plain(to, p, disposition),
            Packet::PlainAck { message_id, route } => self.on_plain_ack(to, message_id, route),
        }
    }

    // ---- discovery

    fn on_request(&mut self, at: NodeId, req: RouteRequest, disposition: Disposition) {
        let action = self.nodes[at.0 as usize].discovery.receive_request(&self.crypto, &req, self.now);
        match action {
            RequestAction::Rebroadcast(out) => {
                if let Disposition::Tunnel(peer) = disposition {
                    self.tunnel(at, peer, Packet::Request(out.clone()));
                }
                self.broadcast(at, Packet::Request(out));
            }
            RequestAction::Respond(resp) => {
                let nodes = resp.discovered_path.nodes();
                let prev = nodes[nodes.len() - 2];
                self.send_hop(at, prev, Packet::Response(resp));
            }
            RequestAction::Drop(_) => {}
        }
    }

    fn on_response(&mut self, at: NodeId, resp: RouteResponse) {
        if resp.source == at {
            let _ = self.nodes[at.0 as usize].discovery.accept_response(&self.crypto, &resp, self.now);
            return;
        }
        if let Some(prev) = self.nodes[at.0 as usize].discovery.relay_response(&self.crypto, &resp) {
            self.send_hop(at, prev, Packet::Response(resp));
        }
    }

    fn start_discovery(&mut self) {
        let src = self.cfg.traffic.source;
        let dst = self.cfg.traffic.destination;
        let weight_list = match &self.agent {
            Agent::Aps(a) => a.weights.penalized_links(),
            Agent::Nsp(_) => Vec::new(),
        };
        let req = self.nodes[src.0 as usize].discovery.initiate_request(&self.crypto, dst, weight_list, self.now);
        let seq = req.sequence_number;
        match &mut self.agent {
            Agent::Aps(a) => {
                a.discovering = Some(seq);
                a.last_discovery = self.now;
            }
            Agent::Nsp(n) => {
                n.discovering = Some(seq);
                n.last_discovery = self.now;
            }
        }
        self.requests.push(req.clone());
        self.log("discovery", Some(src), None, Some(seq), "initiated");
        self.broadcast(src, Packet::Request(req));
        let at = self.now + self.cfg.params.discovery_wait;
        self.queue.schedule(at, EventKind::Timer(Timer::DiscoveryDone { sequence: seq }));
    }

    fn on_timer(&mut self, timer: Timer) {
        match timer {
            Timer::AckDeadline { route_id, packet_id } => self.on_ack_deadline(route_id, packet_id),
            Timer::DiscoveryDone { sequence } => self.on_discovery_done(sequence),
            Timer::Rediscover => {
                if let Agent::Aps(a) = &mut self.agent {
                    a.rediscover_armed = false;
                }
                self.maybe_rediscover();
            }
            Timer::Decay => {
                if let Agent::Aps(a) = &mut self.agent {
                    a.weights.decay();
                }
                if let Some(p) = self.cfg.params.penalty.decay_period {
                    self.queue.schedule(self.now + p, EventKind::Timer(Timer::Decay));
                }
            }
        }
    }

    fn on_discovery_done(&mut self, sequence: u64) {
        let dst = self.cfg.traffic.destination;
        let src = self.cfg.traffic.source.0 as usize;
        match &mut self.agent {
            Agent::Aps(a) => {
                if a.discovering != Some(sequence) {
                    return;
                }
                a.discovering = None;
                self.reselect();
            }
            Agent::Nsp(n) => {
                if n.discovering != Some(sequence) {
                    return;
                }
                n.discovering = None;
                let best = self.nodes[src]
                    .discovery
                    .candidates(dst)
                    .iter()
                    .filter(|c| c.sequence_number == sequence)
                    .min_by(|a, b| a.path.len().cmp(&b.path.len()).then_with(|| a.path.nodes().cmp(b.path.nodes())))
                    .map(|c| c.path.clone());
                if let Some(path) = best {
                    n.route = Some(Arc::new(path));
                    n.last_heard = self.now;
                }
                let route = n.route.clone();
                self.selections.push(SelectionRecord { time: self.now, routes: route.into_iter().map(|r| (*r).clone()).collect() });
            }
        }
    }

    // ---- APS-SMT source

    fn reselect(&mut self) {
        let src = self.cfg.traffic.source;
        let dst = self.cfg.traffic.destination;
        let now = self.now;
        let params = self.cfg.params;
        let Agent::Aps(a) = &mut self.agent else { return };
        let active: BTreeSet<Path> = a.active.iter().map(|r| (*r.path).clone()).collect();
        let trust = &a.trust;
        let initial = params.trust.initial;
        let discovery = &mut self.nodes[src.0 as usize].discovery;
        discovery.retain_candidates(dst, |c| {
            let t = trust.get(&c.path).copied().unwrap_or(initial);
            t >= params.trust.threshold && (active.contains(&c.path) || now - c.timestamps.reply_received <= params.route_max_age)
        });
        let cands = discovery.candidates(dst).to_vec();
        let routes: Vec<Route> = cands
            .iter()
            .map(|c| {
                let t = a.trust.get(&c.path).copied().unwrap_or(initial);
                Route::rated(c.path.clone(), t, &a.weights, &RatioRater)
            })
            .collect();
        let selected: Vec<Path> = match select_aps(&routes, &params.selection, &a.weights) {
            Ok(aps) => aps.routes().iter().map(|r| r.path.clone()).collect(),
            Err(_) => Vec::new(),
        };
        let mut old = std::mem::take(&mut a.active);
        for path in &selected {
            if let Some(i) = old.iter().position(|r| *r.path == *path) {
                a.active.push(old.swap_remove(i));
                continue;
            }
            let found = cands.iter().find(|c| c.path == *path).expect("selected from candidates");
            let keys = establish_probe_keys(&self.crypto, path);
            let Ok(localizer) = FaultLocalizer::new(path.clone(), keys, params.localizer) else { continue };
            let reference = reference_time(&found.timestamps);
            a.trust.entry(path.clone()).or_insert(initial);
            let id = a.next_route_id;
            a.next_route_id += 1;
            a.active.push(ActiveRoute {
                id,
                path: Arc::new(path.clone()),
                localizer,
                reference,
                ack_timeout: ack_timeout(reference),
                pending: BTreeMap::new(),
                traffic: TrafficTable::new(),
                window: Vec::new(),
                windows_done: 0,
            });
        }
        self.selections.push(SelectionRecord { time: now, routes: selected });
        self.maybe_rediscover();
    }

    fn maybe_rediscover(&mut self) {
        let now = self.now;
        let p = self.cfg.params;
        let k = p.selection.k;
        let Agent::Aps(a) = &mut self.agent else { return };
        if a.discovering.is_some() {
            return;
        }
        let spacing = if a.active.is_empty() {
            p.empty_retry
        } else if a.active.len() < k {
            p.rediscovery_interval
        } else {
            return;
        };
        if now >= self.end - DRAIN {
            return;
        }
        let due = a.last_discovery + spacing;
        if now >= due {
            self.start_discovery();
        } else if !a.rediscover_armed {
            a.rediscover_armed = true;
            self.queue.schedule(due, EventKind::Timer(Timer::Rediscover));
        }
    }

    fn on_app_send(&mut self) {
        let t = self.cfg.traffic;
        let message_id = self.messages.len() as u64;
        self.messages.push(MessageOutcome { message_id, sent_at: self.now, delivered_at: None });
        self.log("app-send", Some(t.source), Some(t.destination), Some(message_id), "generated");
        match self.cfg.protocol {
            Protocol::ApsSmt => self.aps_send(message_id),
            Protocol::Nsp => self.nsp_send(message_id),
        }
        let next = t.start + (message_id + 1) as f64 / t.rate;
        if next < t.start + t.duration {
            self.queue.schedule(next, EventKind::AppSend);
        }
    }

    fn aps_send(&mut self, message_id: u64) {
        let size = self.cfg.traffic.packet_size;
        let now = self.now;
        let initial = self.cfg.params.trust.initial;
        let Agent::Aps(a) = &mut self.agent else { return };
        if a.active.is_empty() {
            self.maybe_rediscover();
            return;
        }
        let mut next_packet_id = self.next_packet_id;
        let trusts: Vec<f64> = a.active.iter().map(|r| a.trust.get(&r.path).copied().unwrap_or(initial)).collect();
        let shares = disperse(&payload(message_id, size), dispersion_for(&trusts), message_id)
            .expect("dispersal parameters are valid by construction");
        let mut sends = Vec::with_capacity(shares.len());
        for (route, share) in a.active.iter_mut().zip(shares) {
            let header = route.localizer.attach_probes().expect("probe keys established for every route node");
            let packet_id = next_packet_id;
            next_packet_id += 1;
            route.pending.insert(packet_id, PendingProbe { version: route.localizer.version(), acked: BTreeSet::new() });
            route.traffic.record_send(packet_id, now);
            let deadline = now + route.ack_timeout;
            sends.push((
                route.path.nodes()[1],
                deadline,
                Timer::AckDeadline { route_id: route.id, packet_id },
                DataPacket {
                    packet_id,
                    message_id,
                    message_sent_at: now,
                    route: route.path.clone(),
                    route_id: route.id,
                    probe_header: header,
                    share: share.to_bytes(),
                },
            ));
        }
        self.next_packet_id = next_packet_id;
        let src = self.cfg.traffic.source;
        for (next, deadline, timer, data) in sends {
            self.queue.schedule(deadline, EventKind::Timer(timer));
            self.transmit(src, next, Packet::Data(data), 0.0);
        }
    }

    fn on_data(&mut self, at: NodeId, d: DataPacket, disposition: Disposition) {
        let Some(pos) = d.route.position(at) else { return };
        let links = d.route.len();
        let Ok(probes) = ProbeList::decode(&d.probe_header, links) else { return };
        if probes.contains(pos) {
            let ack = AckPayload::new(&self.crypto, d.route.source(), at, d.packet_id);
            let prev = d.route.nodes()[pos - 1];
            let packet = Packet::Ack(AckPacket { route: d.route.clone(), route_id: d.route_id, payload: ack.to_bytes() });
            self.send_hop(at, prev, packet);
        }
        if pos == links {
            self.deliver_share(d);
            return;
        }
        let next = d.route.nodes()[pos + 1];
        match disposition {
            Disposition::Delay(s) => self.transmit(at, next, Packet::Data(d), s),
            _ => self.send_hop(at, next, Packet::Data(d)),
        }
    }

    fn deliver_share(&mut self, d: DataPacket) {
        let now = self.now;
        if let Agent::Aps(a) = &mut self.agent {
            if let Some(r) = a.active.iter_mut().find(|r| r.id == d.route_id) {
                if r.traffic.record_receive(d.packet_id, now).is_ok() {
                    self.trips.push(TripSample {
                        route: (*r.path).clone(),
                        sent_at: d.message_sent_at,
                        received_at: now,
                        reference_time: r.reference,
                    });
                }
            }
        }
        let Ok(share) = MessageShare::from_bytes(&d.share) else { return };
        let m = d.message_id as usize;
        if m >= self.messages.len() || self.messages[m].delivered_at.is_some() {
            return;
        }
        let shares = self.inbox.entry(d.message_id).or_default();
        shares.push(share);
        if let Ok(bytes) = reconstruct(shares.iter()) {
            if bytes == payload(d.message_id, self.cfg.traffic.packet_size) {
                self.messages[m].delivered_at = Some(now);
                self.inbox.remove(&d.message_id);
            }
        }
    }

    fn on_ack(&mut self, at: NodeId, ack: AckPacket) {
        let Some(pos) = ack.route.position(at) else { return };
        if pos > 0 {
            let prev = ack.route.nodes()[pos - 1];
            self.send_hop(at, prev, Packet::Ack(ack));
            return;
        }
        let Some(payload) = AckPayload::from_bytes(&ack.payload) else { return };
        let Agent::Aps(a) = &mut self.agent else { return };
        let Some(r) = a.active.iter_mut().find(|r| r.id == ack.route_id) else { return };
        if let Some(p) = r.localizer.verify_ack(&self.crypto, payload.packet_id, &payload) {
            if let Some(pending) = r.pending.get_mut(&payload.packet_id) {
                pending.acked.insert(p);
            }
        }
    }

    fn on_ack_deadline(&mut self, route_id: u64, packet_id: u64) {
        let now = self.now;
        let params = self.cfg.params;
        let rate = self.cfg.traffic.rate;
        let Agent::Aps(a) = &mut self.agent else { return };
        let Some(idx) = a.active.iter().position(|r| r.id == route_id) else { return };
        let r = &mut a.active[idx];
        let Some(pending) = r.pending.remove(&packet_id) else { return };
        let event = if pending.version == r.localizer.version() { r.localizer.record_ack(&pending.acked) } else { None };
        r.window.push(packet_id);
        let path = (*r.path).clone();

        let mut reselect = false;
        if r.window.len() >= params.trust.window {
            let records: Vec<TrafficRecord> = r.window.drain(..).filter_map(|id| r.traffic.remove(id)).collect();
            let inputs = AnomalyInputs::from_records(&records, r.reference, records.len() as f64 / rate);
            let score = anomaly(&inputs, &params.anomaly);
            let good = params.trust.is_well_behaved(score);
            r.windows_done += 1;
            let window = r.windows_done;
            let t = a.trust.entry(path.clone()).or_insert(params.trust.initial);
            *t = update_trust(*t, good, &params.trust);
            let trust = *t;
            if good {
                a.weights.reward(path.intermediates(), params.trust.up);
            }
            reselect |= trust < params.trust.threshold;
            self.metrics.push(MetricsSnapshot {
                route: path.to_string(),
                window,
                trip_variation: inputs.trip_variation,
                frequency_change: inputs.frequency_change,
                lost: inputs.lost,
                anomaly: score,
                trust,
            });
        }

        if let Some(LocalizerEvent::Verdict(v)) = event {
            let link = Link::new(v.faulty_link.0, v.faulty_link.1);
            a.weights.penalize_link(link, &params.penalty);
            a.trust.insert(path.clone(), 0.0);
            self.registrations += u64::from(v.registrations);
            self.verdicts.push(VerdictRecord { time: now, route: path, link: v.faulty_link, registrations: v.registrations });
            self.log("verdict", Some(v.faulty_link.0), Some(v.faulty_link.1), Some(route_id), "penalized");
            reselect = true;
        }
        if reselect {
            self.reselect();
        }
    }

    // ---- NSP source

    fn nsp_send(&mut self, message_id: u64) {
        let now = self.now;
        let p = self.cfg.params;
        let src = self.cfg.traffic.source;
        let size = self.cfg.traffic.packet_size;
        let draining = now >= self.end - DRAIN;
        let Agent::Nsp(n) = &mut self.agent else { return };
        let idle = n.discovering.is_none() && !draining;
        match n.route.clone() {
            Some(route) => {
                if idle && now - n.last_heard > p.nsp_silence_timeout && now - n.last_discovery > p.nsp_silence_timeout {
                    self.start_discovery();
                }
                let packet_id = self.next_packet_id;
                self.next_packet_id += 1;
                let next = route.nodes()[1];
                let plain = PlainPacket { packet_id, message_id, message_sent_at: now, route, size };
                self.transmit(src, next, Packet::Plain(plain), 0.0);
            }
            None => {
                if idle && now - n.last_discovery >= p.empty_retry {
                    self.start_discovery();
                }
            }
        }
    }

    fn on_plain(&mut self, at: NodeId, p: PlainPacket, disposition: Disposition) {
        let Some(pos) = p.route.position(at) else { return };
        if pos == p.route.len() {
            let m = p.message_id as usize;
            if m < self.messages.len() && self.messages[m].delivered_at.is_none() {
                self.messages[m].delivered_at = Some(self.now);
            }
            let prev = p.route.nodes()[pos - 1];
            self.send_hop(at, prev, Packet::PlainAck { message_id: p.message_id, route: p.route });
            return;
        }
        let next = p.route.nodes()[pos + 1];
        match disposition {
            Disposition::Delay(s) => self.transmit(at, next, Packet::Plain(p), s),
            _ => self.send_hop(at, next, Packet::Plain(p)),
        }
    }

    fn on_plain_ack(&mut self, at: NodeId, message_id: u64, route: Arc<Path>) {
        let Some(pos) = route.position(at) else { return };
        if pos > 0 {
            let prev = route.nodes()[pos - 1];
            self.send_hop(at, prev, Packet::PlainAck { message_id, route });
            return;
        }
        let now = self.now;
        if let Agent::Nsp(n) = &mut self.agent {
            if n.route.as_deref() == Some(&*route) {
                n.last_heard = now;
            }
        }
    }
}
