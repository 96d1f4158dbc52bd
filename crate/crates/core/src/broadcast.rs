//! Broadcast-tree formation on top of a finished election, plus tree
//! validation and payload delivery over the resulting tree.
//!
//! The leader invites all of its graph neighbors in the first round. A node
//! that joins sends one round of invites over its overlay ports (the ports
//! it exchanged election traffic on) and then exits. A node hearing several
//! invites in the same round picks the inviter with the highest priority.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::election::{ElectionOutcome, Priority};
use crate::graph::{Graph, NodeId};
use crate::simcore::{
    run_with_ports, Message, NodeInfo, NodeStatus, Port, Protocol, ProtocolViolation, SimConfig, SimError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OverlayChoice {
    /// Ports election traffic arrived on.
    Psi,
    /// Those plus the ports the node probed.
    #[default]
    PsiUnionPhi,
}

impl OverlayChoice {
    pub fn ports(&self, outcome: &ElectionOutcome) -> Vec<BTreeSet<Port>> {
        match self {
            OverlayChoice::Psi => outcome.psi(),
            OverlayChoice::PsiUnionPhi => outcome.states().iter().map(|s| s.overlay()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BroadcastTree {
    pub root: NodeId,
    pub parent: BTreeMap<NodeId, NodeId>,
    pub join_round: BTreeMap<NodeId, u32>,
    pub height: u32,
}

impl BroadcastTree {
    pub fn children(&self) -> BTreeMap<NodeId, Vec<NodeId>> {
        let mut kids: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for (&child, &parent) in &self.parent {
            kids.entry(parent).or_default().push(child);
        }
        kids
    }

    /// `parent child` lines, one per tree edge.
    pub fn edge_list(&self) -> String {
        self.parent.iter().map(|(c, p)| format!("{p} {c}\n")).collect()
    }
}

/// A tree together with the cost of building it.
#[derive(Debug, Clone)]
pub struct TreeBuild {
    pub tree: BroadcastTree,
    pub overlay: OverlayChoice,
    pub invites: u64,
    pub rounds: u32,
    pub digest: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BroadcastError {
    #[error("tree does not reach {unreached:?}")]
    CoverageFailure { unreached: Vec<NodeId> },
    #[error("round cap of {max_rounds} exceeded")]
    RoundCapExceeded { max_rounds: u32 },
    #[error("protocol invariant violated: {0}")]
    ProtocolInvariantViolation(String),
    #[error("tree does not span the graph: {0}")]
    NonSpanningTree(String),
}

impl From<SimError> for BroadcastError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::RoundCapExceeded { max_rounds } => BroadcastError::RoundCapExceeded { max_rounds },
            other => BroadcastError::ProtocolInvariantViolation(other.to_string()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InviteState {
    pub me: Priority,
    is_root: bool,
    overlay: BTreeSet<Port>,
    /// `(parent, join round)`; the root joins at round 0 with no parent.
    pub joined: Option<(Option<NodeId>, u32)>,
    pub sent: bool,
}

struct InviteProtocol<'a> {
    root: NodeId,
    overlay: &'a [BTreeSet<Port>],
}

impl Protocol for InviteProtocol<'_> {
    type State = InviteState;

    fn init(&self, node: NodeInfo) -> InviteState {
        let is_root = node.id == self.root;
        InviteState {
            me: Priority::new(node.degree, node.id),
            is_root,
            overlay: if is_root {
                (1..=node.degree as u32).map(Port).collect()
            } else {
                self.overlay[node.index].clone()
            },
            joined: is_root.then_some((None, 0)),
            sent: false,
        }
    }

    fn on_round(
        &self,
        s: &mut InviteState,
        round: u32,
        inbox: &[(Port, Message)],
    ) -> Result<Vec<(Port, Message)>, ProtocolViolation> {
        let mut inviters = BTreeSet::new();
        let mut best: Option<Priority> = None;
        for &(port, msg) in inbox {
            let Message::Invite(p) = msg else {
                return Err(ProtocolViolation(format!("{} received {msg:?} while building the tree", s.me.id)));
            };
            inviters.insert(port);
            best = best.max(Some(p));
        }
        if s.joined.is_none() {
            let Some(parent) = best else { return Ok(Vec::new()) };
            s.joined = Some((Some(parent.id), round - 1));
        }
        if s.sent {
            return Ok(Vec::new());
        }
        s.sent = true;
        Ok(s
            .overlay
            .iter()
            .filter(|p| !inviters.contains(p))
            .map(|&p| (p, Message::Invite(s.me)))
            .collect())
    }

    fn status(&self, s: &InviteState) -> NodeStatus {
        match (s.is_root, s.sent) {
            (_, true) => NodeStatus::Done,
            (true, false) => NodeStatus::Running,
            (false, false) => NodeStatus::Waiting,
        }
    }
}

/// Grows the broadcast tree from the elected leader over `overlay`.
pub fn build_tree(
    g: &Graph,
    outcome: &ElectionOutcome,
    overlay: OverlayChoice,
    config: SimConfig,
) -> Result<TreeBuild, BroadcastError> {
    let ports = overlay.ports(outcome);
    let protocol = InviteProtocol { root: outcome.leader, overlay: &ports };
    let trace = run_with_ports(g, &outcome.ports, &protocol, config)?;

    let unreached: Vec<NodeId> = trace
        .final_states
        .iter()
        .filter(|s| s.joined.is_none())
        .map(|s| s.me.id)
        .collect();
    if !unreached.is_empty() {
        return Err(BroadcastError::CoverageFailure { unreached });
    }
    let mut parent = BTreeMap::new();
    let mut join_round = BTreeMap::new();
    for s in &trace.final_states {
        let (p, r) = s.joined.expect("all joined");
        if let Some(p) = p {
            parent.insert(s.me.id, p);
        }
        join_round.insert(s.me.id, r);
    }
    let height = join_round.values().copied().max().unwrap_or(0);
    Ok(TreeBuild {
        tree: BroadcastTree { root: outcome.leader, parent, join_round, height },
        overlay,
        invites: trace.totals.invite,
        rounds: trace.rounds,
        digest: trace.digest,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TreeReport {
    pub spanning: bool,
    pub missing: Vec<NodeId>,
    pub single_root: bool,
    pub acyclic: bool,
    pub parent_edges_ok: bool,
    pub bad_edges: Vec<(NodeId, NodeId)>,
    pub join_rounds_consistent: bool,
    /// Height recomputed by walking parent links.
    pub height: u32,
    pub height_matches: bool,
}

impl TreeReport {
    pub fn passed(&self) -> bool {
        self.spanning
            && self.single_root
            && self.acyclic
            && self.parent_edges_ok
            && self.join_rounds_consistent
            && self.height_matches
    }
}

pub fn validate_tree(t: &BroadcastTree, g: &Graph) -> TreeReport {
    let missing: Vec<NodeId> = g
        .ids()
        .iter()
        .copied()
        .filter(|&v| v != t.root && !t.parent.contains_key(&v))
        .collect();
    let bad_edges: Vec<(NodeId, NodeId)> = t
        .parent
        .iter()
        .filter(|&(&c, &p)| !g.has_edge(c, p))
        .map(|(&c, &p)| (p, c))
        .collect();

    // Depth of each node by walking up; a walk longer than n means a cycle.
    let limit = g.n() + 1;
    let mut acyclic = !t.parent.contains_key(&t.root);
    let mut height = 0u32;
    for &v in t.parent.keys() {
        let mut cur = v;
        let mut depth = 0u32;
        while cur != t.root {
            match t.parent.get(&cur) {
                Some(&p) if (depth as usize) < limit => {
                    cur = p;
                    depth += 1;
                }
                _ => {
                    acyclic = false;
                    break;
                }
            }
        }
        height = height.max(depth);
    }

    let join_rounds_consistent = t.join_round.get(&t.root) == Some(&0)
        && t.parent.iter().all(|(c, p)| match (t.join_round.get(c), t.join_round.get(p)) {
            (Some(&rc), Some(&rp)) => rc == rp + 1,
            _ => false,
        });

    TreeReport {
        spanning: missing.is_empty() && g.index_of(t.root).is_some(),
        missing,
        single_root: g.index_of(t.root).is_some(),
        acyclic,
        parent_edges_ok: bad_edges.is_empty(),
        bad_edges,
        join_rounds_consistent,
        height,
        height_matches: acyclic && height == t.height,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeliveryTrace {
    pub payload: String,
    pub messages: u64,
    pub rounds: u32,
    pub delivered_round: BTreeMap<NodeId, u32>,
}

/// Pushes `payload` down the tree, one level per round.
pub fn broadcast_payload(t: &BroadcastTree, g: &Graph, payload: &str) -> Result<DeliveryTrace, BroadcastError> {
    let report = validate_tree(t, g);
    if !(report.spanning && report.acyclic && report.parent_edges_ok) {
        return Err(BroadcastError::NonSpanningTree(format!(
            "missing {:?}, acyclic {}, bad edges {:?}",
            report.missing, report.acyclic, report.bad_edges
        )));
    }
    let children = t.children();
    let mut delivered = BTreeMap::from([(t.root, 0u32)]);
    let mut frontier = vec![t.root];
    let mut messages = 0u64;
    let mut rounds = 0u32;
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for v in &frontier {
            for &c in children.get(v).map(Vec::as_slice).unwrap_or(&[]) {
                messages += 1;
                delivered.insert(c, rounds + 1);
                next.push(c);
            }
        }
        if next.is_empty() {
            break;
        }
        rounds += 1;
        frontier = next;
    }
    Ok(DeliveryTrace { payload: payload.to_string(), messages, rounds, delivered_round: delivered })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::election::{elect, ElectionConfig};
    use crate::graph::{generate, Family};

    fn tree_for(g: &Graph, seed: u64, overlay: OverlayChoice) -> Result<TreeBuild, BroadcastError> {
        let out = elect(g, seed, ElectionConfig::default()).unwrap();
        build_tree(g, &out, overlay, SimConfig::for_max_degree(g.max_degree()))
    }

    #[test]
    fn star_tree_is_the_star() {
        let g = generate(Family::Star { n: 6 }, 0).unwrap();
        let b = tree_for(&g, 2, OverlayChoice::PsiUnionPhi).unwrap();
        assert_eq!(b.tree.root, NodeId(0));
        assert_eq!(b.tree.height, 1);
        assert!(b.tree.parent.values().all(|&p| p == NodeId(0)));
        assert_eq!(b.tree.parent.len(), 5);
        assert!(validate_tree(&b.tree, &g).passed());
    }

    #[test]
    fn path3_tree() {
        let ids = [NodeId(1), NodeId(2), NodeId(3)];
        let g = Graph::connected(&ids, &[(ids[0], ids[1]), (ids[1], ids[2])]).unwrap();
        let b = tree_for(&g, 0, OverlayChoice::PsiUnionPhi).unwrap();
        assert_eq!(b.tree.root, NodeId(2));
        assert_eq!(b.tree.height, 1);
        assert_eq!(b.tree.parent, BTreeMap::from([(NodeId(1), NodeId(2)), (NodeId(3), NodeId(2))]));
    }

    #[test]
    fn cycle5_tree() {
        let g = generate(Family::Cycle5, 0).unwrap();
        for seed in 0..10 {
            let b = tree_for(&g, seed, OverlayChoice::PsiUnionPhi).unwrap();
            assert_eq!(b.tree.root, NodeId(4));
            // Depth 3 happens when node 1 only ever talked to node 2.
            assert!(b.tree.height <= 3);
            assert_eq!(b.tree.join_round[&NodeId(0)], 1);
            assert_eq!(b.tree.join_round[&NodeId(3)], 1);
            assert!(validate_tree(&b.tree, &g).passed());
        }
    }

    #[test]
    fn single_node_tree() {
        let g = generate(Family::Complete { n: 1 }, 0).unwrap();
        let b = tree_for(&g, 0, OverlayChoice::Psi).unwrap();
        assert_eq!(b.tree.height, 0);
        assert_eq!(b.invites, 0);
        let d = broadcast_payload(&b.tree, &g, "x").unwrap();
        assert_eq!((d.messages, d.rounds), (0, 0));
    }

    #[test]
    fn validate_catches_non_edges_and_gaps() {
        let g = generate(Family::Star { n: 4 }, 0).unwrap();
        let good = BroadcastTree {
            root: NodeId(0),
            parent: BTreeMap::from([(NodeId(1), NodeId(0)), (NodeId(2), NodeId(0)), (NodeId(3), NodeId(0))]),
            join_round: BTreeMap::from([(NodeId(0), 0), (NodeId(1), 1), (NodeId(2), 1), (NodeId(3), 1)]),
            height: 1,
        };
        let r = validate_tree(&good, &g);
        assert!(r.passed() && r.height == 1);

        let mut bad = good.clone();
        bad.parent.insert(NodeId(3), NodeId(2));
        bad.join_round.insert(NodeId(3), 2);
        bad.height = 2;
        let r = validate_tree(&bad, &g);
        assert!(!r.parent_edges_ok && !r.passed());
        assert_eq!(r.bad_edges, vec![(NodeId(2), NodeId(3))]);

        let mut gap = good.clone();
        gap.parent.remove(&NodeId(2));
        gap.join_round.remove(&NodeId(2));
        let r = validate_tree(&gap, &g);
        assert!(!r.spanning && r.missing == vec![NodeId(2)]);
        assert!(matches!(broadcast_payload(&gap, &g, "x"), Err(BroadcastError::NonSpanningTree(_))));

        let mut cyc = good;
        cyc.parent.insert(NodeId(1), NodeId(3));
        cyc.parent.insert(NodeId(3), NodeId(1));
        assert!(!validate_tree(&cyc, &g).acyclic);
    }

    #[test]
    fn payload_uses_tree_edges() {
        let g = generate(Family::Star { n: 6 }, 0).unwrap();
        let b = tree_for(&g, 0, OverlayChoice::PsiUnionPhi).unwrap();
        let d = broadcast_payload(&b.tree, &g, "hello").unwrap();
        assert_eq!(d.messages, 5);
        assert_eq!(d.rounds, 1);
        assert_eq!(d.delivered_round.len(), 6);

        let g = generate(Family::Gnp { n: 60, p: None }, 3).unwrap();
        let b = tree_for(&g, 4, OverlayChoice::PsiUnionPhi).unwrap();
        let d = broadcast_payload(&b.tree, &g, "hello").unwrap();
        assert_eq!(d.messages, 59);
        assert_eq!(d.rounds, b.tree.height);
        assert_eq!(d.delivered_round, b.tree.join_round);
    }

    #[test]
    fn edge_list_export() {
        let g = generate(Family::Star { n: 3 }, 0).unwrap();
        let b = tree_for(&g, 0, OverlayChoice::PsiUnionPhi).unwrap();
        assert_eq!(b.tree.edge_list(), "0 1\n0 2\n");
    }
}
