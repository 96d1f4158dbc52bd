//! Ground truth for tests and acceptance.
//!
//! [`reference_replay`] and [`reference_tree`] re-run both protocols from a
//! global view with plain arrays and linear scans. They share no code with
//! the engine, the election state machine or the tree builder; only the
//! graph and the port assignment are common inputs. The checkers turn
//! finished runs into [`BoundReport`]s.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::election::ElectionOutcome;
use crate::graph::{bfs_distances, Graph, NodeId};
use crate::simcore::{Message, Port, PortMap, RunTrace};

/// The node with the largest `(degree, id)`.
pub fn expected_leader(g: &Graph) -> NodeId {
    let mut best = (0usize, g.id(0));
    for v in 0..g.n() {
        let key = (g.degree(v), g.id(v));
        if key > best {
            best = key;
        }
    }
    best.1
}

/// `ceil(log2(delta + 1))`, by repeated doubling.
pub fn log_term(delta: usize) -> u32 {
    let mut l = 0u32;
    let mut cover: u128 = 0;
    while cover < delta as u128 {
        l += 1;
        cover = (1u128 << l) - 1;
    }
    l
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("diameter above 2")]
    Diameter,
    #[error("round cap of {0} exceeded")]
    RoundCap(u32),
    #[error("violation: {0}")]
    Violation(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayOutcome {
    pub leader: NodeId,
    pub views: Vec<Option<NodeId>>,
    pub rounds: u32,
    pub probes: u64,
    pub updates: u64,
    pub announces: u64,
    pub digest: u64,
    /// Per node: ports election traffic arrived on.
    pub psi: Vec<BTreeSet<Port>>,
    /// Per node: ports probed.
    pub phi: Vec<BTreeSet<Port>>,
}

impl ReplayOutcome {
    pub fn total_messages(&self) -> u64 {
        self.probes + self.updates + self.announces
    }
}

// Kinds, ordered as the engine orders message variants.
const PROBE: u8 = 0;
const UPDATE: u8 = 1;
const ANNOUNCE: u8 = 2;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Mail {
    src: usize,
    dst: usize,
    kind: u8,
    // (degree, id) for probe/update; (leader id, 0) for announce.
    a: u64,
    b: u64,
}

struct Node {
    id: u64,
    degree: usize,
    loop_rounds: u32,
    decide_round: u32,
    best: (u64, u64),
    informer: Option<usize>,
    active: bool,
    candidate: bool,
    elected: bool,
    leader: Option<u64>,
    done: bool,
    heard: BTreeSet<usize>,
    probed: BTreeSet<usize>,
}

fn fnv1a(bytes: &[u8], mut h: u64) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn record(round: u32, g: &Graph, m: &Mail) -> String {
    let (tag, arg) = match m.kind {
        PROBE => ("probe", format!("{}/{}", m.a, m.b)),
        UPDATE => ("update", format!("{}/{}", m.a, m.b)),
        _ => ("announce", m.a.to_string()),
    };
    format!("{}:{}:{}:{}:{}\n", round, g.id(m.src).0, g.id(m.dst).0, tag, arg)
}

/// Global-view replay of the election on `ports`.
pub fn reference_replay(g: &Graph, ports: &PortMap, slack: u32, max_rounds: u32) -> Result<ReplayOutcome, ReplayError> {
    let n = g.n();
    // Diameter by checking every pair for adjacency or a shared neighbor.
    for u in 0..n {
        for v in u + 1..n {
            let adjacent = g.neighbors(u).contains(&v);
            let shared = g.neighbors(u).iter().any(|w| g.neighbors(v).contains(w));
            if !adjacent && !shared {
                return Err(ReplayError::Diameter);
            }
        }
    }

    let mut nodes: Vec<Node> = (0..n)
        .map(|v| {
            let d = g.degree(v);
            let l = log_term(d);
            let wait = l + slack;
            Node {
                id: g.id(v).0,
                degree: d,
                loop_rounds: l,
                decide_round: l + wait.max(1),
                best: (d as u64, g.id(v).0),
                informer: None,
                active: true,
                candidate: true,
                elected: false,
                leader: None,
                done: false,
                heard: BTreeSet::new(),
                probed: BTreeSet::new(),
            }
        })
        .collect();

    let mut previous: Vec<Mail> = Vec::new();
    let mut digest: u64 = 0xcbf29ce484222325;
    let (mut probes, mut updates, mut announces) = (0u64, 0u64, 0u64);
    let mut round = 0u32;
    // Leaders announce in one round and exit in the next.
    let mut exit_next: Vec<usize> = Vec::new();

    while !(previous.is_empty() && nodes.iter().all(|x| x.done)) {
        round += 1;
        if round > max_rounds {
            return Err(ReplayError::RoundCap(max_rounds));
        }
        let mut sent: Vec<Mail> = Vec::new();
        for v in 0..n {
            let inbox: Vec<Mail> = {
                let mut m: Vec<Mail> = previous.iter().filter(|m| m.dst == v).copied().collect();
                m.sort();
                m
            };
            let node = &mut nodes[v];
            if node.done {
                for m in inbox.iter().filter(|m| m.kind == ANNOUNCE) {
                    if node.leader != Some(m.a) {
                        return Err(ReplayError::Violation(format!("{} exited but heard leader {}", node.id, m.a)));
                    }
                }
                continue;
            }

            let mut probers: Vec<usize> = Vec::new();
            let mut top: Option<((u64, u64), usize)> = None;
            for m in inbox.iter().filter(|m| m.kind != ANNOUNCE) {
                node.heard.insert(m.src);
                if m.kind == PROBE {
                    probers.push(m.src);
                }
                let pr = (m.a, m.b);
                match top {
                    Some((t, _)) if t >= pr => {}
                    _ => top = Some((pr, m.src)),
                }
            }
            if let Some((pr, from)) = top {
                if pr > node.best {
                    if let Some(old) = node.informer {
                        if old != from && !probers.contains(&old) {
                            sent.push(Mail { src: v, dst: old, kind: UPDATE, a: pr.0, b: pr.1 });
                        }
                    }
                    node.best = pr;
                    node.informer = Some(from);
                    node.active = false;
                    node.candidate = false;
                }
            }
            for &p in &probers {
                sent.push(Mail { src: v, dst: p, kind: UPDATE, a: node.best.0, b: node.best.1 });
            }

            let heard_leaders: Vec<&Mail> = inbox.iter().filter(|m| m.kind == ANNOUNCE).collect();
            if let Some(first) = heard_leaders.first() {
                if heard_leaders.iter().any(|m| m.a != first.a) {
                    return Err(ReplayError::Violation(format!("{} heard two leaders", node.id)));
                }
                if let Some(l) = node.leader {
                    if l != first.a {
                        return Err(ReplayError::Violation(format!("{} is leader {l} but heard {}", node.id, first.a)));
                    }
                } else {
                    node.leader = Some(first.a);
                    node.active = false;
                    node.candidate = false;
                    node.done = true;
                    let tellers: BTreeSet<usize> = heard_leaders.iter().map(|m| m.src).collect();
                    let targets: BTreeSet<usize> = node.heard.union(&node.probed).copied().collect();
                    for &u in targets.difference(&tellers) {
                        sent.push(Mail { src: v, dst: u, kind: ANNOUNCE, a: first.a, b: 0 });
                    }
                    continue;
                }
            }

            if exit_next.contains(&v) {
                node.done = true;
                continue;
            }
            if round <= node.loop_rounds {
                if node.active {
                    let lo = 1usize << (round - 1);
                    let hi = node.degree.min((1usize << round) - 1);
                    for k in lo..=hi {
                        let u = ports.targets(v)[k - 1];
                        node.probed.insert(u);
                        sent.push(Mail { src: v, dst: u, kind: PROBE, a: node.degree as u64, b: node.id });
                    }
                }
            } else if round >= node.decide_round && node.candidate && !node.elected {
                node.elected = true;
                node.leader = Some(node.id);
                for &u in g.neighbors(v) {
                    sent.push(Mail { src: v, dst: u, kind: ANNOUNCE, a: node.id, b: 0 });
                }
            }
        }
        exit_next = (0..n).filter(|&v| nodes[v].elected && !nodes[v].done).collect();

        sent.sort();
        for m in &sent {
            digest = fnv1a(record(round, g, m).as_bytes(), digest);
            match m.kind {
                PROBE => probes += 1,
                UPDATE => updates += 1,
                _ => announces += 1,
            }
        }
        previous = sent;
    }

    let elected: Vec<u64> = nodes.iter().filter(|x| x.elected).map(|x| x.id).collect();
    if elected.len() != 1 {
        return Err(ReplayError::Violation(format!("elected {elected:?}")));
    }
    let to_ports = |v: usize, set: &BTreeSet<usize>| -> BTreeSet<Port> {
        set.iter().map(|&u| ports.port_to(v, u).expect("neighbor")).collect()
    };
    Ok(ReplayOutcome {
        leader: NodeId(elected[0]),
        views: nodes.iter().map(|x| x.leader.map(NodeId)).collect(),
        rounds: round,
        probes,
        updates,
        announces,
        digest,
        psi: (0..n).map(|v| to_ports(v, &nodes[v].heard)).collect(),
        phi: (0..n).map(|v| to_ports(v, &nodes[v].probed)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceTree {
    pub parent: BTreeMap<NodeId, NodeId>,
    pub join_round: BTreeMap<NodeId, u32>,
    pub invites: u64,
    pub unreached: Vec<NodeId>,
}

/// Level-by-level replay of tree formation. `overlay[v]` lists the
/// neighbor ids `v` invites once it has joined; the root invites all of its
/// graph neighbors.
pub fn reference_tree(g: &Graph, root: NodeId, overlay: &[BTreeSet<NodeId>]) -> ReferenceTree {
    let n = g.n();
    let r = g.index_of(root).expect("root in graph");
    let mut level: Vec<Option<u32>> = vec![None; n];
    let mut parent = BTreeMap::new();
    level[r] = Some(0);
    let mut invites = g.degree(r) as u64;
    let mut frontier = vec![r];
    let mut k = 0u32;
    while !frontier.is_empty() {
        // Who invites whom this round.
        let mut offers: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &v in &frontier {
            let targets: Vec<usize> = if v == r {
                g.neighbors(v).to_vec()
            } else {
                overlay[v].iter().map(|&id| g.index_of(id).expect("overlay id")).collect()
            };
            for u in targets {
                offers.entry(u).or_default().push(v);
            }
        }
        let mut next = Vec::new();
        for (u, from) in offers {
            if level[u].is_some() {
                continue;
            }
            let chosen = *from.iter().max_by_key(|&&v| (g.degree(v), g.id(v))).expect("non-empty");
            level[u] = Some(k + 1);
            parent.insert(g.id(u), g.id(chosen));
            // The joiner skips everyone who invited it this round.
            let skip: BTreeSet<NodeId> = from.iter().map(|&v| g.id(v)).collect();
            invites += overlay[u].iter().filter(|id| !skip.contains(id)).count() as u64;
            next.push(u);
        }
        frontier = next;
        k += 1;
    }
    ReferenceTree {
        parent,
        join_round: (0..n).filter_map(|v| level[v].map(|l| (g.id(v), l))).collect(),
        invites,
        unreached: (0..n).filter(|&v| level[v].is_none()).map(|v| g.id(v)).collect(),
    }
}

/// Pass/fail of one measured quantity against its envelope.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub check: String,
    pub measured: f64,
    pub envelope: f64,
    /// Smallest leading constant that would still pass with the additive
    /// constant held fixed.
    pub fitted_constant: Option<f64>,
    pub pass: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

fn linear_bound(check: &str, measured: u64, scale: f64, log: u32, c: f64, c2: f64) -> BoundReport {
    let envelope = c * scale * log as f64 + c2 * scale;
    let fitted = (log > 0).then(|| ((measured as f64 - c2 * scale) / (scale * log as f64)).max(0.0));
    BoundReport {
        check: check.to_string(),
        measured: measured as f64,
        envelope,
        fitted_constant: fitted,
        pass: measured as f64 <= envelope,
        notes: Vec::new(),
    }
}

/// Election messages `<= c·n·ceil(log2(Δ+1)) + c2·n`.
pub fn check_message_bound<S>(trace: &RunTrace<S>, g: &Graph, c: f64, c2: f64) -> BoundReport {
    let total = trace.totals.probe + trace.totals.update + trace.totals.announce;
    linear_bound("message_bound", total, g.n() as f64, log_term(g.max_degree()), c, c2)
}

/// Probe and update messages `<= 3·n·ceil(log2(Δ+1)) + 3n`.
pub fn check_loop_messages<S>(trace: &RunTrace<S>, g: &Graph) -> BoundReport {
    let total = trace.totals.probe + trace.totals.update;
    linear_bound("loop_messages", total, g.n() as f64, log_term(g.max_degree()), 3.0, 3.0)
}

/// Rounds `<= c·ceil(log2(Δ+1)) + c2`.
pub fn check_round_bound<S>(trace: &RunTrace<S>, g: &Graph, c: f64, c2: f64) -> BoundReport {
    linear_bound("round_bound", trace.rounds as u64, 1.0, log_term(g.max_degree()), c, c2)
}

/// Invite plus announce messages `<= c·n·ceil(log2(Δ+1)) + c2·n`.
pub fn check_broadcast_messages(invites: u64, announces: u64, g: &Graph, c: f64, c2: f64) -> BoundReport {
    linear_bound("broadcast_messages", invites + announces, g.n() as f64, log_term(g.max_degree()), c, c2)
}

/// Tree height `<= 2·ceil(log2(Δ+1)) + 2`.
pub fn check_tree_height(height: u32, g: &Graph) -> BoundReport {
    linear_bound("tree_height", height as u64, 1.0, log_term(g.max_degree()), 2.0, 2.0)
}

/// A still-candidate node with the neighbors it probed by some iteration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Kingdom {
    pub owner: NodeId,
    pub members: BTreeSet<NodeId>,
    pub iteration: u32,
}

/// Kingdoms after probe iteration `i`, for every `i` whose replies have
/// been delivered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KingdomRow {
    pub iteration: u32,
    /// Engine round whose candidate set is used.
    pub observed_round: u32,
    pub candidates: usize,
    pub member_sum: usize,
    pub sizes_ok: bool,
    pub disjoint: bool,
    /// `Some` when every candidate has degree `>= 2^i - 1`.
    pub count_bound: Option<usize>,
    pub pass: bool,
}

/// Replies to a probe sent in round `i` reach the prober at the end of
/// round `i + 2`; only then must the kingdoms of iteration `i` be disjoint.
pub const REPLY_LAG: u32 = 2;

pub fn kingdoms<S>(trace: &RunTrace<S>, iteration: u32) -> Vec<Kingdom> {
    let round = iteration + REPLY_LAG;
    let Some(metrics) = trace.per_round.get(round as usize - 1) else {
        return Vec::new();
    };
    metrics
        .candidate_ids
        .iter()
        .map(|&owner| {
            let mut members: BTreeSet<NodeId> = trace
                .log
                .iter()
                .filter(|e| e.src == owner && e.sent_round <= iteration && matches!(e.payload, Message::Probe(_)))
                .map(|e| e.dst)
                .collect();
            members.insert(owner);
            Kingdom { owner, members, iteration }
        })
        .collect()
}

pub fn kingdom_rows<S>(trace: &RunTrace<S>, g: &Graph) -> Vec<KingdomRow> {
    let n = g.n();
    let mut rows = Vec::new();
    let mut i = 1u32;
    while i + REPLY_LAG <= trace.rounds && i < 60 {
        let ks = kingdoms(trace, i);
        let reach = (1usize << i) - 1;
        let sizes_ok = ks.iter().all(|k| {
            let d = g.degree(g.index_of(k.owner).expect("owner"));
            k.members.len() == d.min(reach) + 1
        });
        let member_sum: usize = ks.iter().map(|k| k.members.len()).sum();
        let union: BTreeSet<NodeId> = ks.iter().flat_map(|k| k.members.iter().copied()).collect();
        let disjoint = union.len() == member_sum;
        let all_wide = ks.iter().all(|k| g.degree(g.index_of(k.owner).expect("owner")) >= reach);
        let count_bound = all_wide.then(|| n.div_ceil(1 << i));
        let pass = sizes_ok && disjoint && member_sum <= n && count_bound.is_none_or(|b| ks.len() <= b);
        rows.push(KingdomRow {
            iteration: i,
            observed_round: i + REPLY_LAG,
            candidates: ks.len(),
            member_sum,
            sizes_ok,
            disjoint,
            count_bound,
            pass,
        });
        i += 1;
    }
    rows
}

pub fn check_kingdoms<S>(trace: &RunTrace<S>, g: &Graph) -> BoundReport {
    let rows = kingdom_rows(trace, g);
    let measured = rows.iter().map(|r| r.member_sum).max().unwrap_or(g.n());
    let notes = rows
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("iteration {}: {r:?}", r.iteration))
        .collect::<Vec<_>>();
    BoundReport {
        check: "kingdoms".into(),
        measured: measured as f64,
        envelope: g.n() as f64,
        fitted_constant: None,
        pass: notes.is_empty(),
        notes,
    }
}

/// The information graph: the leader's graph edges plus every overlay edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InfoGraph {
    pub leader: NodeId,
    pub edges: BTreeSet<(NodeId, NodeId)>,
    pub subgraph_ok: bool,
    pub connected: bool,
    pub diameter: Option<usize>,
    /// Largest distance from the leader.
    pub leader_eccentricity: Option<usize>,
}

impl InfoGraph {
    pub fn from_overlay(g: &Graph, leader: NodeId, overlay: &[BTreeSet<NodeId>]) -> InfoGraph {
        let n = g.n();
        let mut edges = BTreeSet::new();
        let l = g.index_of(leader).expect("leader in graph");
        for &u in g.neighbors(l) {
            let (a, b) = (leader, g.id(u));
            edges.insert((a.min(b), a.max(b)));
        }
        for (v, set) in overlay.iter().enumerate() {
            for &u in set {
                let a = g.id(v);
                edges.insert((a.min(u), a.max(u)));
            }
        }
        let subgraph_ok = edges.iter().all(|&(a, b)| g.has_edge(a, b));
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &edges {
            if let (Some(i), Some(j)) = (g.index_of(a), g.index_of(b)) {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        let from_leader = bfs_distances(&adj, l);
        let connected = from_leader.iter().all(Option::is_some);
        let leader_eccentricity = connected.then(|| from_leader.iter().flatten().copied().max().unwrap_or(0));
        let diameter = if connected {
            (0..n).map(|s| bfs_distances(&adj, s).into_iter().flatten().max().unwrap_or(0)).max()
        } else {
            None
        };
        InfoGraph { leader, edges, subgraph_ok, connected, diameter, leader_eccentricity }
    }
}

pub fn info_graph(g: &Graph, outcome: &ElectionOutcome, overlay: crate::broadcast::OverlayChoice) -> InfoGraph {
    let sets: Vec<BTreeSet<NodeId>> = overlay
        .ports(outcome)
        .iter()
        .enumerate()
        .map(|(v, ports)| {
            ports
                .iter()
                .map(|&p| g.id(outcome.ports.neighbor(v, p).expect("overlay port")))
                .collect()
        })
        .collect();
    InfoGraph::from_overlay(g, outcome.leader, &sets)
}
