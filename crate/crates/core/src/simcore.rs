//! Synchronous round engine for port-numbered (KT0) networks.
//!
//! Every message emitted in round `r` is delivered at the start of round
//! `r + 1`. A node addresses its neighbors only through local ports
//! `1..=degree`; the engine owns the port-to-neighbor mapping. Each inbox is
//! sorted by `(sender id, message)` and nodes are stepped in id order, so a
//! run is a pure function of its inputs.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::election::Priority;
use crate::graph::{Graph, NodeId};

/// Local port number, `1..=degree`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Port(pub u32);

impl fmt::Display for Port {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Per-node bijection between ports and neighbors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortMap {
    /// `targets[v][p - 1]` is the neighbor index behind port `p` of `v`.
    targets: Vec<Vec<usize>>,
    /// Neighbors of `v` ascending, paired with the port that reaches them.
    inverse: Vec<Vec<(usize, Port)>>,
}

impl PortMap {
    pub fn degree(&self, node: usize) -> usize {
        self.targets[node].len()
    }

    pub fn neighbor(&self, node: usize, port: Port) -> Option<usize> {
        let p = port.0 as usize;
        if p == 0 {
            return None;
        }
        self.targets[node].get(p - 1).copied()
    }

    pub fn port_to(&self, node: usize, neighbor: usize) -> Option<Port> {
        let inv = &self.inverse[node];
        inv.binary_search_by_key(&neighbor, |&(u, _)| u).ok().map(|i| inv[i].1)
    }

    /// Neighbor indices in port order.
    pub fn targets(&self, node: usize) -> &[usize] {
        &self.targets[node]
    }
}

/// Seeded uniform permutation of every node's neighbors.
pub fn assign_ports(g: &Graph, seed: u64) -> PortMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut targets = Vec::with_capacity(g.n());
    let mut inverse = Vec::with_capacity(g.n());
    for v in 0..g.n() {
        let mut perm = g.neighbors(v).to_vec();
        perm.shuffle(&mut rng);
        let mut inv: Vec<(usize, Port)> =
            perm.iter().enumerate().map(|(i, &u)| (u, Port(i as u32 + 1))).collect();
        inv.sort_unstable();
        targets.push(perm);
        inverse.push(inv);
    }
    PortMap { targets, inverse }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Message {
    Probe(Priority),
    Update(Priority),
    LeaderAnnounce(NodeId),
    Invite(Priority),
}

impl Message {
    pub fn tag(&self) -> &'static str {
        match self {
            Message::Probe(_) => "probe",
            Message::Update(_) => "update",
            Message::LeaderAnnounce(_) => "announce",
            Message::Invite(_) => "invite",
        }
    }

    /// Argument as rendered in the trace log: `degree/id` for priorities.
    pub fn arg(&self) -> String {
        match self {
            Message::Probe(p) | Message::Update(p) | Message::Invite(p) => format!("{}/{}", p.degree, p.id),
            Message::LeaderAnnounce(id) => id.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Envelope {
    pub src: NodeId,
    pub dst: NodeId,
    pub payload: Message,
    pub sent_round: u32,
}

impl Envelope {
    /// `round:src:dst:tag:arg`
    pub fn record(&self) -> String {
        format!(
            "{}:{}:{}:{}:{}",
            self.sent_round,
            self.src,
            self.dst,
            self.payload.tag(),
            self.payload.arg()
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MessageCounts {
    pub probe: u64,
    pub update: u64,
    pub announce: u64,
    pub invite: u64,
}

impl MessageCounts {
    pub fn total(&self) -> u64 {
        self.probe + self.update + self.announce + self.invite
    }

    pub fn add(&mut self, m: &Message) {
        match m {
            Message::Probe(_) => self.probe += 1,
            Message::Update(_) => self.update += 1,
            Message::LeaderAnnounce(_) => self.announce += 1,
            Message::Invite(_) => self.invite += 1,
        }
    }

    pub fn plus(&self, other: &MessageCounts) -> MessageCounts {
        MessageCounts {
            probe: self.probe + other.probe,
            update: self.update + other.update,
            announce: self.announce + other.announce,
            invite: self.invite + other.invite,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoundMetrics {
    pub round: u32,
    pub sent: MessageCounts,
    /// Candidate and active counts after the round.
    pub candidates: usize,
    pub active: usize,
    pub cumulative: MessageCounts,
    #[serde(skip)]
    pub candidate_ids: Vec<NodeId>,
}

#[derive(Debug, Clone)]
pub struct RunTrace<S> {
    pub per_round: Vec<RoundMetrics>,
    /// Final state per node, in index order.
    pub final_states: Vec<S>,
    pub rounds: u32,
    pub totals: MessageCounts,
    /// Every envelope, ordered by `(round, src, dst, message)`.
    pub log: Vec<Envelope>,
    pub digest: u64,
}

impl<S> RunTrace<S> {
    pub fn total_messages(&self) -> u64 {
        self.totals.total()
    }

    pub fn digest_hex(&self) -> String {
        format!("{:016x}", self.digest)
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over the log rendered as `round:src:dst:tag:arg\n` records.
pub fn trace_digest(log: &[Envelope]) -> u64 {
    let mut h = FNV_OFFSET;
    for env in log {
        for b in env.record().bytes().chain(std::iter::once(b'\n')) {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeInfo {
    pub index: usize,
    pub id: NodeId,
    pub degree: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeStatus {
    /// Takes a step every round.
    Running,
    /// Steps only when its inbox is non-empty.
    Waiting,
    /// Exited; further deliveries go to [`Protocol::on_discard`].
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct ProtocolViolation(pub String);

/// A per-node transition system driven by the engine.
pub trait Protocol {
    type State: Clone;

    fn init(&self, node: NodeInfo) -> Self::State;

    fn on_round(
        &self,
        state: &mut Self::State,
        round: u32,
        inbox: &[(Port, Message)],
    ) -> Result<Vec<(Port, Message)>, ProtocolViolation>;

    fn status(&self, state: &Self::State) -> NodeStatus;

    /// Sees messages delivered to a node that has already exited.
    fn on_discard(&self, _state: &Self::State, _inbox: &[(Port, Message)]) -> Result<(), ProtocolViolation> {
        Ok(())
    }

    fn is_candidate(&self, _state: &Self::State) -> bool {
        false
    }

    fn is_active(&self, _state: &Self::State) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub max_rounds: u32,
}

impl SimConfig {
    /// `64 + 8 * ceil(log2(Δ + 1))`
    pub fn for_max_degree(delta: usize) -> Self {
        let bits = usize::BITS - delta.leading_zeros();
        SimConfig { max_rounds: 64 + 8 * bits }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("round cap of {max_rounds} exceeded")]
    RoundCapExceeded { max_rounds: u32 },
    #[error("node {node} sent on port {port} which does not exist (round {round})")]
    EdgeViolation { node: NodeId, port: Port, round: u32 },
    #[error("node {node}, round {round}: {violation}")]
    Protocol { node: NodeId, round: u32, violation: ProtocolViolation },
}

/// Runs `protocol` on `g` with ports drawn from `seed`.
pub fn run<P: Protocol>(g: &Graph, protocol: &P, seed: u64, config: SimConfig) -> Result<RunTrace<P::State>, SimError> {
    let ports = assign_ports(g, seed);
    run_with_ports(g, &ports, protocol, config)
}

pub fn run_with_ports<P: Protocol>(
    g: &Graph,
    ports: &PortMap,
    protocol: &P,
    config: SimConfig,
) -> Result<RunTrace<P::State>, SimError> {
    let n = g.n();
    let mut states: Vec<P::State> = (0..n)
        .map(|index| protocol.init(NodeInfo { index, id: g.id(index), degree: g.degree(index) }))
        .collect();

    // (src, dst, message) sent in the previous round.
    let mut in_flight: Vec<(usize, usize, Message)> = Vec::new();
    let mut per_round = Vec::new();
    let mut log = Vec::new();
    let mut cumulative = MessageCounts::default();
    let mut round = 0u32;

    loop {
        let quiescent = states.iter().all(|s| protocol.status(s) != NodeStatus::Running);
        if in_flight.is_empty() && quiescent {
            break;
        }
        round += 1;
        if round > config.max_rounds {
            return Err(SimError::RoundCapExceeded { max_rounds: config.max_rounds });
        }

        let mut inboxes: Vec<Vec<(usize, Message)>> = vec![Vec::new(); n];
        for (src, dst, msg) in in_flight.drain(..) {
            inboxes[dst].push((src, msg));
        }

        let mut sent: Vec<(usize, usize, Message)> = Vec::new();
        for (v, inbox) in inboxes.iter_mut().enumerate() {
            inbox.sort_unstable();
            let ported: Vec<(Port, Message)> = inbox
                .iter()
                .map(|&(src, msg)| (ports.port_to(v, src).expect("delivery along an edge"), msg))
                .collect();
            let state = &mut states[v];
            let wrap = |violation| SimError::Protocol { node: g.id(v), round, violation };
            match protocol.status(state) {
                NodeStatus::Done => {
                    if !ported.is_empty() {
                        protocol.on_discard(state, &ported).map_err(wrap)?;
                    }
                    continue;
                }
                NodeStatus::Waiting if ported.is_empty() => continue,
                _ => {}
            }
            for (port, msg) in protocol.on_round(state, round, &ported).map_err(wrap)? {
                let dst = ports
                    .neighbor(v, port)
                    .ok_or(SimError::EdgeViolation { node: g.id(v), port, round })?;
                sent.push((v, dst, msg));
            }
        }

        sent.sort_unstable();
        let mut counts = MessageCounts::default();
        for &(src, dst, msg) in &sent {
            counts.add(&msg);
            log.push(Envelope { src: g.id(src), dst: g.id(dst), payload: msg, sent_round: round });
        }
        cumulative = cumulative.plus(&counts);
        let candidate_ids: Vec<NodeId> = (0..n)
            .filter(|&v| protocol.is_candidate(&states[v]))
            .map(|v| g.id(v))
            .collect();
        per_round.push(RoundMetrics {
            round,
            sent: counts,
            candidates: candidate_ids.len(),
            active: states.iter().filter(|s| protocol.is_active(s)).count(),
            cumulative,
            candidate_ids,
        });
        in_flight = sent;
    }

    let digest = trace_digest(&log);
    Ok(RunTrace {
        per_round,
        final_states: states,
        rounds: round,
        totals: cumulative,
        log,
        digest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, Family};

    /// Every node pings each neighbor once in round 1, then exits.
    struct PingOnce;

    #[derive(Clone)]
    struct PingState {
        id: NodeId,
        degree: usize,
        pinged: bool,
        heard: Vec<Port>,
    }

    impl Protocol for PingOnce {
        type State = PingState;

        fn init(&self, node: NodeInfo) -> PingState {
            PingState { id: node.id, degree: node.degree, pinged: false, heard: Vec::new() }
        }

        fn on_round(
            &self,
            s: &mut PingState,
            _round: u32,
            inbox: &[(Port, Message)],
        ) -> Result<Vec<(Port, Message)>, ProtocolViolation> {
            s.heard.extend(inbox.iter().map(|&(p, _)| p));
            if s.pinged {
                return Ok(Vec::new());
            }
            s.pinged = true;
            Ok((1..=s.degree as u32).map(|p| (Port(p), Message::LeaderAnnounce(s.id))).collect())
        }

        fn status(&self, s: &PingState) -> NodeStatus {
            if s.pinged {
                NodeStatus::Waiting
            } else {
                NodeStatus::Running
            }
        }
    }

    struct Forever;

    impl Protocol for Forever {
        type State = ();
        fn init(&self, _: NodeInfo) {}
        fn on_round(&self, _: &mut (), _: u32, _: &[(Port, Message)]) -> Result<Vec<(Port, Message)>, ProtocolViolation> {
            Ok(Vec::new())
        }
        fn status(&self, _: &()) -> NodeStatus {
            NodeStatus::Running
        }
    }

    struct BadPort;

    impl Protocol for BadPort {
        type State = bool;
        fn init(&self, _: NodeInfo) -> bool {
            false
        }
        fn on_round(&self, s: &mut bool, _: u32, _: &[(Port, Message)]) -> Result<Vec<(Port, Message)>, ProtocolViolation> {
            *s = true;
            Ok(vec![(Port(99), Message::LeaderAnnounce(NodeId(0)))])
        }
        fn status(&self, s: &bool) -> NodeStatus {
            if *s {
                NodeStatus::Done
            } else {
                NodeStatus::Running
            }
        }
    }

    #[test]
    fn ports_are_bijections() {
        let g = generate(Family::Gnp { n: 30, p: None }, 3).unwrap();
        let pm = assign_ports(&g, 11);
        for v in 0..g.n() {
            let mut t = pm.targets(v).to_vec();
            t.sort_unstable();
            assert_eq!(t, g.neighbors(v));
            for (i, &u) in pm.targets(v).iter().enumerate() {
                let port = Port(i as u32 + 1);
                assert_eq!(pm.port_to(v, u), Some(port));
                assert_eq!(pm.neighbor(v, port), Some(u));
            }
            assert_eq!(pm.neighbor(v, Port(0)), None);
            assert_eq!(pm.neighbor(v, Port(g.degree(v) as u32 + 1)), None);
        }
    }

    #[test]
    fn star3_center_and_leaf_ports() {
        let g = generate(Family::Star { n: 3 }, 0).unwrap();
        let pm = assign_ports(&g, 5);
        let mut center = pm.targets(0).to_vec();
        center.sort_unstable();
        assert_eq!(center, vec![1, 2]);
        assert_eq!(pm.neighbor(1, Port(1)), Some(0));
    }

    #[test]
    fn ports_deterministic_in_seed() {
        let g = generate(Family::Complete { n: 12 }, 0).unwrap();
        assert_eq!(assign_ports(&g, 4), assign_ports(&g, 4));
        assert_ne!(assign_ports(&g, 4), assign_ports(&g, 5));
    }

    #[test]
    fn delivery_is_exact_and_one_hop() {
        let g = generate(Family::Windmill { k: 3 }, 0).unwrap();
        let trace = run(&g, &PingOnce, 2, SimConfig { max_rounds: 10 }).unwrap();
        assert_eq!(trace.rounds, 2);
        assert_eq!(trace.total_messages(), 2 * g.edge_count() as u64);
        assert!(trace.log.iter().all(|e| e.sent_round == 1 && g.has_edge(e.src, e.dst)));
        for (v, s) in trace.final_states.iter().enumerate() {
            let mut heard = s.heard.clone();
            heard.sort_unstable();
            let all: Vec<Port> = (1..=g.degree(v) as u32).map(Port).collect();
            assert_eq!(heard, all);
        }
        let sum: u64 = trace.per_round.iter().map(|r| r.sent.total()).sum();
        assert_eq!(sum, trace.total_messages());
        assert_eq!(trace.per_round.last().unwrap().cumulative, trace.totals);
    }

    #[test]
    fn single_node_terminates() {
        let g = generate(Family::Complete { n: 1 }, 0).unwrap();
        let trace = run(&g, &PingOnce, 0, SimConfig { max_rounds: 5 }).unwrap();
        assert_eq!(trace.total_messages(), 0);
        assert_eq!(trace.rounds, 1);
    }

    #[test]
    fn determinism() {
        let g = generate(Family::Gnp { n: 20, p: None }, 1).unwrap();
        let a = run(&g, &PingOnce, 9, SimConfig { max_rounds: 5 }).unwrap();
        let b = run(&g, &PingOnce, 9, SimConfig { max_rounds: 5 }).unwrap();
        assert_eq!(a.digest, b.digest);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn round_cap() {
        let g = generate(Family::Star { n: 3 }, 0).unwrap();
        assert_eq!(
            run(&g, &Forever, 0, SimConfig { max_rounds: 7 }).unwrap_err(),
            SimError::RoundCapExceeded { max_rounds: 7 }
        );
    }

    #[test]
    fn edge_violation_aborts() {
        let g = generate(Family::Star { n: 3 }, 0).unwrap();
        assert!(matches!(
            run(&g, &BadPort, 0, SimConfig { max_rounds: 7 }),
            Err(SimError::EdgeViolation { port: Port(99), round: 1, .. })
        ));
    }

    #[test]
    fn default_cap() {
        assert_eq!(SimConfig::for_max_degree(0).max_rounds, 64);
        assert_eq!(SimConfig::for_max_degree(1).max_rounds, 72);
        assert_eq!(SimConfig::for_max_degree(4).max_rounds, 88);
    }

    #[test]
    fn digest_known_value() {
        // FNV-1a of the empty input is the offset basis.
        assert_eq!(trace_digest(&[]), 0xcbf29ce484222325);
        let env = Envelope {
            src: NodeId(1),
            dst: NodeId(2),
            payload: Message::LeaderAnnounce(NodeId(2)),
            sent_round: 3,
        };
        assert_eq!(env.record(), "3:1:2:announce:2");
        let mut h: u64 = 0xcbf29ce484222325;
        for b in b"3:1:2:announce:2\n" {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        assert_eq!(trace_digest(&[env]), h);
    }
}
