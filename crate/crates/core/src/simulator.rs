//! Discrete-event simulation of clients establishing TLS sessions and
//! uploading payloads through the gateway mesh.
//!
//! Each client is pinned to a random origin gateway and loops over
//! sessions: pick an output, SYN / SYN-ACK / ACK+ClientHello / ServerHello,
//! then stream the payload in MTU-sized packets to the output. Every
//! directed link is a FIFO store-and-forward resource: a packet holds it for
//! `bytes * 8 / rate` seconds and propagation is instantaneous. The WAN leg
//! is a flat `wan_delay` per client-to-server handshake message.
//!
//! The clock counts integer nanoseconds, so sums of delays are exact.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{bfs_levels, GatewayGraph, GraphError, NodeId, UNREACHED};
use crate::linkmodel::{builtin_profile, LinkProfile};
use crate::protocol::{init_client, ClientRoutingState, ProtocolConfig, ProtocolError};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("graph is empty")]
    EmptyGraph,
    #[error("no route from gateway {from} to gateway {to}")]
    NoRoute { from: NodeId, to: NodeId },
    #[error("link {a}-{b} has non-positive rate {rate}")]
    ZeroRate { a: NodeId, b: NodeId, rate: f64 },
}

/// Sizes of the four handshake flights in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandshakeSizes {
    pub syn: u64,
    pub synack: u64,
    pub ack_client_hello: u64,
    pub server_hello: u64,
}

impl Default for HandshakeSizes {
    fn default() -> Self {
        Self { syn: 40, synack: 40, ack_client_hello: 300, server_hello: 1200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub profile: LinkProfile,
    pub protocol: ProtocolConfig,
    pub client_count: usize,
    pub sim_duration_s: f64,
    pub wan_delay_s: f64,
    pub payload_bytes: u64,
    pub mtu_bytes: u64,
    pub handshake: HandshakeSizes,
    pub runs: usize,
    pub base_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            profile: builtin_profile("lora-subghz").expect("builtin profile"),
            protocol: ProtocolConfig::default(),
            client_count: 1,
            sim_duration_s: 3600.0,
            wan_delay_s: 0.100,
            payload_bytes: 200_000,
            mtu_bytes: 1500,
            handshake: HandshakeSizes::default(),
            runs: 30,
            base_seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_owned()));
        if !(self.sim_duration_s.is_finite() && self.sim_duration_s > 0.0) {
            return bad("simulation.duration_s must be positive");
        }
        if !(self.wan_delay_s.is_finite() && self.wan_delay_s >= 0.0) {
            return bad("simulation.wan_delay_s must be non-negative");
        }
        if self.mtu_bytes == 0 {
            return bad("simulation.mtu_bytes must be positive");
        }
        if self.client_count == 0 {
            return bad("simulation.clients must be at least 1");
        }
        if self.runs == 0 {
            return bad("simulation.runs must be at least 1");
        }
        self.protocol.validate()?;
        Ok(())
    }

    /// Number of data packets per upload.
    pub fn packets_per_upload(&self) -> u64 {
        self.payload_bytes.div_ceil(self.mtu_bytes)
    }
}

/// One completed TLS session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub client: usize,
    #[serde(skip)]
    pub session: u64,
    pub origin: NodeId,
    pub output: NodeId,
    pub hops: usize,
    pub tls_delay_s: f64,
    /// Present only when the whole payload reached the output before the
    /// simulation ended.
    pub upload_s: Option<f64>,
    #[serde(skip)]
    pub packets_delivered: u64,
    #[serde(skip)]
    pub bytes_delivered: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub seed: u64,
    pub client_count: usize,
    pub sessions: Vec<SessionRecord>,
    pub event_count: u64,
    pub mean_tls_s: Option<f64>,
    pub median_tls_s: Option<f64>,
    pub mean_upload_s: Option<f64>,
    pub median_upload_s: Option<f64>,
}

impl SimResult {
    fn new(seed: u64, client_count: usize, mut sessions: Vec<SessionRecord>, event_count: u64) -> Self {
        sessions.sort_by_key(|s| (s.client, s.session));
        let tls: Vec<f64> = sessions.iter().map(|s| s.tls_delay_s).collect();
        let up: Vec<f64> = sessions.iter().filter_map(|s| s.upload_s).collect();
        Self {
            seed,
            client_count,
            event_count,
            mean_tls_s: mean(&tls),
            median_tls_s: median(&tls),
            mean_upload_s: mean(&up),
            median_upload_s: median(&up),
            sessions,
        }
    }
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Flight {
    Syn,
    SynAck,
    AckClientHello,
    ServerHello,
    Data,
}

/// A message in flight: which session it belongs to, its size, and where
/// it is along its route (dense indices).
#[derive(Debug, Clone)]
struct Message {
    client: usize,
    flight: Flight,
    bytes: u64,
    route: Rc<[usize]>,
    hop: usize,
}

#[derive(Debug, Clone)]
enum EventKind {
    /// A message finished crossing a link.
    LinkDelivery(Message),
    /// The server's reply to a client message is ready at the output.
    WanReplyDue {
        client: usize,
        answer_to: Flight,
    },
    SessionStart {
        client: usize,
    },
    /// The origin hands the next data packet to the mesh.
    UploadPacketReady {
        client: usize,
    },
}

/// Simulated time in nanoseconds.
type Nanos = u64;

const NANOS_PER_S: f64 = 1e9;

fn to_nanos(seconds: f64) -> Nanos {
    (seconds * NANOS_PER_S).round() as Nanos
}

fn to_seconds(t: Nanos) -> f64 {
    t as f64 / NANOS_PER_S
}

#[derive(Debug)]
struct Event {
    time: Nanos,
    seq: u64,
    kind: EventKind,
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
    // Reversed: BinaryHeap pops the earliest time, then the lowest seq.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Hop-shortest routes; among equal-length routes the smallest next-hop id
/// wins at every step.
struct Router<'g> {
    graph: &'g GatewayGraph,
    levels: HashMap<usize, Vec<u32>>,
    routes: HashMap<(usize, usize), Rc<[usize]>>,
}

impl<'g> Router<'g> {
    fn new(graph: &'g GatewayGraph) -> Self {
        Self { graph, levels: HashMap::new(), routes: HashMap::new() }
    }

    fn route(&mut self, from: usize, to: usize) -> Result<Rc<[usize]>, SimError> {
        if let Some(r) = self.routes.get(&(from, to)) {
            return Ok(Rc::clone(r));
        }
        let g = self.graph;
        let levels = self.levels.entry(to).or_insert_with(|| bfs_levels(g, to, None));
        if levels[from] == UNREACHED {
            return Err(SimError::NoRoute { from: g.id_at(from), to: g.id_at(to) });
        }
        let mut path = vec![from];
        let mut cur = from;
        while cur != to {
            cur = g
                .neighbors_by_index(cur)
                .iter()
                .find(|n| levels[n.index] + 1 == levels[cur])
                .expect("BFS level has a predecessor")
                .index;
            path.push(cur);
        }
        let path: Rc<[usize]> = path.into();
        self.routes.insert((from, to), Rc::clone(&path));
        Ok(path)
    }
}

struct ActiveSession {
    index: u64,
    output: usize,
    forward: Rc<[usize]>,
    backward: Rc<[usize]>,
    tls_start: Nanos,
    upload_start: Nanos,
    packets_left_to_send: u64,
    record: Option<usize>,
}

struct Client {
    state: ClientRoutingState,
    origin: usize,
    rng: ChaCha8Rng,
    messages_sent: u64,
    sessions_started: u64,
    active: Option<ActiveSession>,
}

struct Engine<'g> {
    graph: &'g GatewayGraph,
    cfg: &'g SimConfig,
    router: Router<'g>,
    /// Per node, per adjacency slot: when the outgoing link becomes free.
    link_free_at: Vec<Vec<Nanos>>,
    wan_delay: Nanos,
    queue: BinaryHeap<Event>,
    seq: u64,
    now: Nanos,
    clients: Vec<Client>,
    records: Vec<SessionRecord>,
    processed: u64,
}

impl<'g> Engine<'g> {
    fn schedule(&mut self, time: Nanos, kind: EventKind) {
        debug_assert!(time >= self.now, "event scheduled in the past");
        self.queue.push(Event { time, seq: self.seq, kind });
        self.seq += 1;
    }

    /// Puts `msg` on the next link of its route, or handles its arrival if
    /// it is already at the end.
    fn forward(&mut self, msg: Message) {
        if msg.hop + 1 == msg.route.len() {
            self.arrive(msg);
            return;
        }
        let (u, v) = (msg.route[msg.hop], msg.route[msg.hop + 1]);
        let slot = self.graph.neighbors_by_index(u).binary_search_by_key(&v, |n| n.index).expect("route follows edges");
        let rate = self.graph.neighbors_by_index(u)[slot].rate_bps;
        let start = self.link_free_at[u][slot].max(self.now);
        let done = start + to_nanos((msg.bytes * 8) as f64 / rate);
        self.link_free_at[u][slot] = done;
        self.schedule(done, EventKind::LinkDelivery(Message { hop: msg.hop + 1, ..msg }));
    }

    fn send(&mut self, client: usize, flight: Flight, bytes: u64, outbound: bool) {
        let c = &mut self.clients[client];
        let s = c.active.as_ref().expect("message outside a session");
        let route = Rc::clone(if outbound { &s.forward } else { &s.backward });
        if outbound {
            c.messages_sent += 1;
        }
        self.forward(Message { client, flight, bytes, route, hop: 0 });
    }

    fn arrive(&mut self, msg: Message) {
        let hs = self.cfg.handshake;
        let now = self.now;
        match msg.flight {
            Flight::Syn | Flight::AckClientHello => {
                let due = now + self.wan_delay;
                self.schedule(due, EventKind::WanReplyDue { client: msg.client, answer_to: msg.flight });
            }
            Flight::SynAck => self.send(msg.client, Flight::AckClientHello, hs.ack_client_hello, true),
            Flight::ServerHello => self.tls_established(msg.client),
            Flight::Data => {
                let rec = self.clients[msg.client].active.as_ref().and_then(|s| s.record);
                let rec = &mut self.records[rec.expect("data after TLS")];
                rec.packets_delivered += 1;
                rec.bytes_delivered += msg.bytes;
                if rec.packets_delivered == self.cfg.packets_per_upload() {
                    self.upload_complete(msg.client);
                }
            }
        }
    }

    fn tls_established(&mut self, client: usize) {
        let now = self.now;
        let packets = self.cfg.packets_per_upload();
        let record_index = self.records.len();
        let c = &mut self.clients[client];
        let origin = c.state.origin();
        let s = c.active.as_mut().expect("active session");
        s.upload_start = now;
        s.packets_left_to_send = packets;
        s.record = Some(record_index);
        let record = SessionRecord {
            client,
            session: s.index,
            origin,
            output: self.graph.id_at(s.output),
            hops: s.forward.len() - 1,
            tls_delay_s: to_seconds(now - s.tls_start),
            upload_s: None,
            packets_delivered: 0,
            bytes_delivered: 0,
        };
        self.records.push(record);
        if packets == 0 {
            self.upload_complete(client);
        } else {
            for _ in 0..packets {
                self.schedule(now, EventKind::UploadPacketReady { client });
            }
        }
    }

    fn upload_complete(&mut self, client: usize) {
        let now = self.now;
        let s = self.clients[client].active.take().expect("active session");
        self.records[s.record.expect("recorded session")].upload_s = Some(to_seconds(now - s.upload_start));
        self.schedule(now, EventKind::SessionStart { client });
    }

    fn start_session(&mut self, client: usize) -> Result<(), SimError> {
        let now = self.now;
        let c = &mut self.clients[client];
        if c.sessions_started > 0 {
            c.state.maybe_rotate(to_seconds(now), c.messages_sent, true, &mut c.rng);
        }
        let output = self.graph.index_of(c.state.current_output()).expect("output in graph");
        let origin = c.origin;
        let forward = self.router.route(origin, output)?;
        let backward = self.router.route(output, origin)?;
        let c = &mut self.clients[client];
        c.active = Some(ActiveSession {
            index: c.sessions_started,
            output,
            forward,
            backward,
            tls_start: now,
            upload_start: 0,
            packets_left_to_send: 0,
            record: None,
        });
        c.sessions_started += 1;
        self.send(client, Flight::Syn, self.cfg.handshake.syn, true);
        Ok(())
    }

    fn step(&mut self, event: Event) -> Result<(), SimError> {
        self.now = event.time;
        self.processed += 1;
        match event.kind {
            EventKind::LinkDelivery(msg) => self.forward(msg),
            EventKind::WanReplyDue { client, answer_to } => {
                let hs = self.cfg.handshake;
                match answer_to {
                    Flight::Syn => self.send(client, Flight::SynAck, hs.synack, false),
                    Flight::AckClientHello => self.send(client, Flight::ServerHello, hs.server_hello, false),
                    other => unreachable!("no WAN reply to {other:?}"),
                }
            }
            EventKind::SessionStart { client } => self.start_session(client)?,
            EventKind::UploadPacketReady { client } => {
                let s = self.clients[client].active.as_mut().expect("upload in session");
                let remaining = s.packets_left_to_send;
                s.packets_left_to_send -= 1;
                let bytes = if remaining == 1 {
                    self.cfg.payload_bytes - (self.cfg.packets_per_upload() - 1) * self.cfg.mtu_bytes
                } else {
                    self.cfg.mtu_bytes
                };
                self.send(client, Flight::Data, bytes, true);
            }
        }
        Ok(())
    }
}

/// Per-client generator: stream `client` of the run seed, so a client's
/// draws do not depend on how many other clients exist.
fn client_rng(seed: u64, client: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(client as u64);
    rng
}

/// Runs one simulation of `cfg.client_count` clients for
/// `cfg.sim_duration_s` simulated seconds.
pub fn run_simulation(g: &GatewayGraph, cfg: &SimConfig, seed: u64) -> Result<SimResult, SimError> {
    cfg.validate()?;
    if g.is_empty() {
        return Err(SimError::EmptyGraph);
    }
    if let Some(e) = g.edges().find(|e| !(e.rate_bps.is_finite() && e.rate_bps > 0.0)) {
        return Err(SimError::ZeroRate { a: e.a, b: e.b, rate: e.rate_bps });
    }

    let mut clients = Vec::with_capacity(cfg.client_count);
    for client in 0..cfg.client_count {
        let mut rng = client_rng(seed, client);
        let origin = rng.random_range(0..g.node_count());
        let state = init_client(g, client, g.id_at(origin), &cfg.protocol, 0.0, &mut rng)?;
        clients.push(Client { state, origin, rng, messages_sent: 0, sessions_started: 0, active: None });
    }

    let mut engine = Engine {
        graph: g,
        cfg,
        router: Router::new(g),
        link_free_at: (0..g.node_count()).map(|i| vec![0; g.neighbors_by_index(i).len()]).collect(),
        wan_delay: to_nanos(cfg.wan_delay_s),
        queue: BinaryHeap::new(),
        seq: 0,
        now: 0,
        clients,
        records: Vec::new(),
        processed: 0,
    };
    for client in 0..cfg.client_count {
        engine.schedule(0, EventKind::SessionStart { client });
    }
    let end = to_nanos(cfg.sim_duration_s);
    while let Some(event) = engine.queue.pop() {
        if event.time > end {
            break;
        }
        if matches!(event.kind, EventKind::SessionStart { .. }) && event.time >= end {
            continue;
        }
        engine.step(event)?;
    }
    Ok(SimResult::new(seed, cfg.client_count, engine.records, engine.processed))
}

/// `cfg.runs` independent simulations with seeds `base_seed + i`, in run
/// order.
pub fn run_campaign(g: &GatewayGraph, cfg: &SimConfig) -> Result<Vec<SimResult>, SimError> {
    cfg.validate()?;
    (0..cfg.runs).into_par_iter().map(|i| run_simulation(g, cfg, cfg.base_seed.wrapping_add(i as u64))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::{build_graph, generate_synthetic, largest_component, Dataset, SyntheticKind};
    use crate::graph::hop_distances;
    use approx::assert_abs_diff_eq;

    fn two_nodes() -> GatewayGraph {
        let d = Dataset::from_coords("pair", [(0.0, 0.0), (0.0, 0.0)]).unwrap();
        build_graph(&d, &builtin_profile("lora-subghz").unwrap())
    }

    fn uniform(n: usize, extent: f64, seed: u64) -> GatewayGraph {
        let d = generate_synthetic(SyntheticKind::Uniform, n, extent, seed);
        largest_component(&build_graph(&d, &builtin_profile("lora-subghz").unwrap()))
    }

    #[test]
    fn hop_zero_tls_is_two_wan_delays() {
        let g = uniform(30, 8_000.0, 1);
        let cfg = SimConfig {
            protocol: ProtocolConfig { max_hops: 0, ..Default::default() },
            sim_duration_s: 60.0,
            ..Default::default()
        };
        let r = run_simulation(&g, &cfg, 3).unwrap();
        assert!(r.sessions.len() > 10);
        for s in &r.sessions {
            assert_eq!(s.hops, 0);
            assert_eq!(s.tls_delay_s, 0.2);
            assert_eq!(s.upload_s, Some(0.0));
        }
    }

    /// Forces the single client onto a one-hop output.
    fn forced_one_hop() -> SimConfig {
        SimConfig {
            protocol: ProtocolConfig { max_hops: 1, ..Default::default() },
            sim_duration_s: 200.0,
            ..Default::default()
        }
    }

    #[test]
    fn two_node_closed_form() {
        let g = two_nodes();
        let cfg = forced_one_hop();
        let mut checked = 0;
        for seed in 0..20 {
            let r = run_simulation(&g, &cfg, seed).unwrap();
            for s in r.sessions.iter().filter(|s| s.hops == 1) {
                assert_abs_diff_eq!(s.tls_delay_s, 0.4528, epsilon = 1e-9);
                if let Some(up) = s.upload_s {
                    assert_abs_diff_eq!(up, 32.0, epsilon = 1e-9);
                    assert_eq!(s.packets_delivered, 134);
                    assert_eq!(s.bytes_delivered, 200_000);
                }
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn conservation_and_partial_last_packet() {
        let g = uniform(40, 10_000.0, 4);
        let cfg = SimConfig {
            client_count: 5,
            payload_bytes: 10_001,
            mtu_bytes: 1000,
            sim_duration_s: 600.0,
            ..Default::default()
        };
        let r = run_simulation(&g, &cfg, 9).unwrap();
        assert_eq!(cfg.packets_per_upload(), 11);
        let done: Vec<_> = r.sessions.iter().filter(|s| s.upload_s.is_some()).collect();
        assert!(!done.is_empty());
        for s in done {
            assert_eq!(s.packets_delivered, 11);
            assert_eq!(s.bytes_delivered, 10_001);
        }
    }

    #[test]
    fn session_hops_are_shortest_and_bounded() {
        let g = uniform(60, 12_000.0, 5);
        let cfg = SimConfig { client_count: 4, sim_duration_s: 900.0, ..Default::default() };
        let r = run_simulation(&g, &cfg, 1).unwrap();
        for s in &r.sessions {
            let hops = hop_distances(&g, s.origin).unwrap();
            assert_eq!(Some(s.hops), hops.get(s.output));
            assert!(s.hops <= cfg.protocol.max_hops);
            assert!(s.tls_delay_s >= 2.0 * cfg.wan_delay_s);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let g = uniform(50, 10_000.0, 6);
        let cfg = SimConfig { client_count: 6, sim_duration_s: 900.0, ..Default::default() };
        let a = run_simulation(&g, &cfg, 11).unwrap();
        let b = run_simulation(&g, &cfg, 11).unwrap();
        assert_eq!(a, b);
        let c = run_simulation(&g, &cfg, 12).unwrap();
        assert_ne!(a.sessions, c.sessions);
    }

    #[test]
    fn campaign_uses_consecutive_seeds() {
        let g = uniform(40, 10_000.0, 2);
        let cfg = SimConfig { client_count: 3, sim_duration_s: 300.0, runs: 4, base_seed: 100, ..Default::default() };
        let runs = run_campaign(&g, &cfg).unwrap();
        assert_eq!(runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![100, 101, 102, 103]);
        assert_eq!(runs, run_campaign(&g, &cfg).unwrap());
        assert_eq!(runs[2], run_simulation(&g, &cfg, 102).unwrap());
        let single = SimConfig { runs: 1, ..cfg };
        assert_eq!(run_campaign(&g, &single).unwrap().len(), 1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = two_nodes();
        let bad = SimConfig { mtu_bytes: 0, ..Default::default() };
        assert!(matches!(run_simulation(&g, &bad, 0), Err(SimError::Config(_))));
        let bad = SimConfig { client_count: 0, ..Default::default() };
        assert!(matches!(run_simulation(&g, &bad, 0), Err(SimError::Config(_))));
        let empty = GatewayGraph::topology(0, &[]).unwrap();
        assert_eq!(run_simulation(&empty, &SimConfig::default(), 0), Err(SimError::EmptyGraph));

        let zero = GatewayGraph::from_edges(
            two_nodes().points().to_vec(),
            [crate::graph::Edge { a: 0, b: 1, distance_m: 0.0, rate_bps: 0.0 }],
        )
        .unwrap();
        assert!(matches!(run_simulation(&zero, &SimConfig::default(), 0), Err(SimError::ZeroRate { .. })));

        let split = GatewayGraph::topology(2, &[]).unwrap();
        let cfg = SimConfig {
            protocol: ProtocolConfig { max_hops: 0, ..Default::default() },
            sim_duration_s: 5.0,
            ..Default::default()
        };
        assert!(run_simulation(&split, &cfg, 0).is_ok());
    }

    #[test]
    fn statistics_helpers() {
        assert_eq!(mean(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(mean(&[1.0, 2.0]), Some(1.5));
    }
}
