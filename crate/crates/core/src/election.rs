//! Explicit leader election for diameter-two networks as a per-node state
//! machine.
//!
//! Nodes compare priorities `⟨degree, id⟩`. Each node probes its ports in
//! doubling batches (`1`, `2..3`, `4..7`, ...) while it is active, relays any
//! higher priority it hears to the neighbor that last informed it, and
//! answers every probe with the best priority it knows. A node that never
//! hears a higher priority waits out a short grace period, declares itself
//! leader and announces to all its ports. Every other node forwards the
//! leader id once over the ports it exchanged election traffic with.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{diameter, Graph, NodeId};
use crate::simcore::{
    assign_ports, run_with_ports, Message, NodeInfo, NodeStatus, PortMap, Port, Protocol, ProtocolViolation,
    RunTrace, SimConfig, SimError,
};

pub const DEFAULT_SLACK: u32 = 2;

/// Election order: degree first, id breaks ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Priority {
    pub degree: usize,
    pub id: NodeId,
}

impl Priority {
    pub fn new(degree: usize, id: NodeId) -> Self {
        Priority { degree, id }
    }
}

/// `ceil(log2(d + 1))`: the number of probe rounds needed to cover `d` ports.
pub fn loop_length(d: usize) -> u32 {
    usize::BITS - d.leading_zeros()
}

/// Ports probed in loop round `i`: `2^(i-1) ..= min(d, 2^i - 1)`.
pub fn probe_targets(i: u32, d: usize) -> Vec<Port> {
    if i == 0 || i > usize::BITS {
        return Vec::new();
    }
    let lo = 1usize << (i - 1);
    if lo > d {
        return Vec::new();
    }
    let hi = d.min(lo.saturating_mul(2) - 1);
    (lo..=hi).map(|p| Port(p as u32)).collect()
}

pub fn wait_length(d: usize, slack: u32) -> u32 {
    loop_length(d) + slack
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Phase {
    /// Probe round `i` of the doubling loop.
    Loop(u32),
    /// Rounds left before a still-candidate node declares itself. Nodes
    /// that lost stay at `Wait(0)` relaying until the leader is announced.
    Wait(u32),
    /// Declared leader; absorbs one more round, then exits.
    Announced,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NodeState {
    pub id: NodeId,
    pub degree: usize,
    pub slack: u32,
    pub my_priority: Priority,
    pub phase: Phase,
    pub active: bool,
    pub candidate: bool,
    pub elected: bool,
    /// Highest priority seen so far.
    pub best: Priority,
    /// Port that delivered `best`; `None` while `best` is our own.
    pub informer: Option<Port>,
    /// Ports `1..=probed_upto` have been probed.
    pub probed_upto: usize,
    /// Ports a probe or update arrived on.
    pub received_from: BTreeSet<Port>,
    pub leader: Option<NodeId>,
    pub learned_from: Option<Port>,
}

pub fn init_node(degree: usize, id: NodeId, slack: u32) -> NodeState {
    let me = Priority::new(degree, id);
    let phase = if loop_length(degree) == 0 {
        Phase::Wait(wait_length(degree, slack))
    } else {
        Phase::Loop(1)
    };
    NodeState {
        id,
        degree,
        slack,
        my_priority: me,
        phase,
        active: true,
        candidate: true,
        elected: false,
        best: me,
        informer: None,
        probed_upto: 0,
        received_from: BTreeSet::new(),
        leader: None,
        learned_from: None,
    }
}

impl NodeState {
    /// Ports that were probed.
    pub fn probed(&self) -> BTreeSet<Port> {
        (1..=self.probed_upto as u32).map(Port).collect()
    }

    /// Ports the leader id is forwarded over.
    pub fn overlay(&self) -> BTreeSet<Port> {
        let mut ports = self.probed();
        ports.extend(self.received_from.iter().copied());
        ports
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        if self.best < self.my_priority {
            return Err(format!("{}: best below own priority", self.id));
        }
        if self.active && !self.candidate {
            return Err(format!("{}: active but not candidate", self.id));
        }
        if self.informer.is_none() != (self.best == self.my_priority) {
            return Err(format!("{}: informer/best mismatch", self.id));
        }
        if self.probed_upto > self.degree {
            return Err(format!("{}: probed past degree", self.id));
        }
        if self.leader.is_some() && !matches!(self.phase, Phase::Announced | Phase::Done) {
            return Err(format!("{}: leader known in phase {:?}", self.id, self.phase));
        }
        Ok(())
    }

    /// Advances one round. `inbox` must be sorted by sender id.
    pub fn step(&mut self, inbox: &[(Port, Message)]) -> Result<Vec<(Port, Message)>, ProtocolViolation> {
        if self.phase == Phase::Done {
            return Err(ProtocolViolation(format!("{} stepped after exit", self.id)));
        }
        let mut out = Vec::new();
        let mut probers: Vec<Port> = Vec::new();
        let mut top: Option<(Priority, Port)> = None;
        let mut announces: Vec<(Port, NodeId)> = Vec::new();

        for &(port, msg) in inbox {
            let p = match msg {
                Message::Probe(p) => {
                    probers.push(port);
                    p
                }
                Message::Update(p) => p,
                Message::LeaderAnnounce(id) => {
                    announces.push((port, id));
                    continue;
                }
                Message::Invite(_) => {
                    return Err(ProtocolViolation(format!("{} received an invite during election", self.id)));
                }
            };
            self.received_from.insert(port);
            if top.is_none_or(|(best, _)| p > best) {
                top = Some((p, port));
            }
        }

        if let Some((p, src)) = top {
            if p > self.best {
                if let Some(old) = self.informer {
                    if old != src && !probers.contains(&old) {
                        out.push((old, Message::Update(p)));
                    }
                }
                self.informer = Some(src);
                self.best = p;
                self.active = false;
                self.candidate = false;
            }
        }
        for &port in &probers {
            out.push((port, Message::Update(self.best)));
        }

        if let Some(&(first_port, id)) = announces.first() {
            if let Some(&(_, other)) = announces.iter().find(|&&(_, x)| x != id) {
                return Err(ProtocolViolation(format!(
                    "{} heard conflicting leaders {id} and {other}",
                    self.id
                )));
            }
            match self.leader {
                Some(known) if known != id => {
                    return Err(ProtocolViolation(format!(
                        "{} knows leader {known} but heard {id}",
                        self.id
                    )));
                }
                Some(_) => {}
                None => {
                    self.leader = Some(id);
                    self.learned_from = Some(first_port);
                    self.active = false;
                    self.candidate = false;
                    let told: BTreeSet<Port> = announces.iter().map(|&(p, _)| p).collect();
                    out.extend(
                        self.overlay()
                            .into_iter()
                            .filter(|p| !told.contains(p))
                            .map(|p| (p, Message::LeaderAnnounce(id))),
                    );
                    self.phase = Phase::Done;
                    return Ok(out);
                }
            }
        }

        match self.phase {
            Phase::Loop(i) => {
                if self.active {
                    let targets = probe_targets(i, self.degree);
                    if let Some(last) = targets.last() {
                        self.probed_upto = last.0 as usize;
                    }
                    out.extend(targets.into_iter().map(|p| (p, Message::Probe(self.my_priority))));
                }
                self.phase = if i >= loop_length(self.degree) {
                    Phase::Wait(wait_length(self.degree, self.slack))
                } else {
                    Phase::Loop(i + 1)
                };
            }
            Phase::Wait(rem) => {
                let rem = rem.saturating_sub(1);
                self.phase = Phase::Wait(rem);
                if rem == 0 && self.candidate {
                    self.elected = true;
                    self.leader = Some(self.id);
                    self.phase = Phase::Announced;
                    out.extend((1..=self.degree as u32).map(|p| (Port(p), Message::LeaderAnnounce(self.id))));
                }
            }
            Phase::Announced => self.phase = Phase::Done,
            Phase::Done => unreachable!(),
        }
        Ok(out)
    }
}

/// Pure form of [`NodeState::step`].
pub fn on_round(
    state: &NodeState,
    inbox: &[(Port, Message)],
) -> Result<(NodeState, Vec<(Port, Message)>), ProtocolViolation> {
    let mut next = state.clone();
    let out = next.step(inbox)?;
    Ok((next, out))
}

/// Engine adapter.
#[derive(Debug, Clone, Copy)]
pub struct ElectionProtocol {
    pub slack: u32,
}

impl Protocol for ElectionProtocol {
    type State = NodeState;

    fn init(&self, node: NodeInfo) -> NodeState {
        init_node(node.degree, node.id, self.slack)
    }

    fn on_round(
        &self,
        state: &mut NodeState,
        _round: u32,
        inbox: &[(Port, Message)],
    ) -> Result<Vec<(Port, Message)>, ProtocolViolation> {
        state.step(inbox)
    }

    fn status(&self, state: &NodeState) -> NodeStatus {
        match state.phase {
            Phase::Done => NodeStatus::Done,
            _ => NodeStatus::Running,
        }
    }

    fn on_discard(&self, state: &NodeState, inbox: &[(Port, Message)]) -> Result<(), ProtocolViolation> {
        for (_, msg) in inbox {
            if let Message::LeaderAnnounce(id) = msg {
                if state.leader != Some(*id) {
                    return Err(ProtocolViolation(format!(
                        "{} exited with leader {:?} but heard {id}",
                        state.id, state.leader
                    )));
                }
            }
        }
        Ok(())
    }

    fn is_candidate(&self, state: &NodeState) -> bool {
        state.candidate
    }

    fn is_active(&self, state: &NodeState) -> bool {
        state.active
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ElectionConfig {
    pub slack: u32,
    /// Defaults to `64 + 8 * ceil(log2(Δ + 1))`.
    pub max_rounds: Option<u32>,
}

impl Default for ElectionConfig {
    fn default() -> Self {
        ElectionConfig { slack: DEFAULT_SLACK, max_rounds: None }
    }
}

impl ElectionConfig {
    pub fn sim_config(&self, g: &Graph) -> SimConfig {
        match self.max_rounds {
            Some(max_rounds) => SimConfig { max_rounds },
            None => SimConfig::for_max_degree(g.max_degree()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ElectionError {
    #[error("graph diameter {0:?} is not at most 2")]
    DiameterViolation(Option<usize>),
    #[error("round cap of {max_rounds} exceeded")]
    RoundCapExceeded { max_rounds: u32 },
    #[error("protocol invariant violated: {0}")]
    ProtocolInvariantViolation(String),
    #[error("election outcome invalid: {0}")]
    OutcomeViolation(String),
}

impl From<SimError> for ElectionError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::RoundCapExceeded { max_rounds } => ElectionError::RoundCapExceeded { max_rounds },
            other => ElectionError::ProtocolInvariantViolation(other.to_string()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ElectionOutcome {
    pub leader: NodeId,
    pub seed: u64,
    pub config: ElectionConfig,
    pub ports: PortMap,
    pub trace: RunTrace<NodeState>,
}

impl ElectionOutcome {
    pub fn rounds(&self) -> u32 {
        self.trace.rounds
    }

    pub fn states(&self) -> &[NodeState] {
        &self.trace.final_states
    }

    /// Leader as seen by each node, in index order.
    pub fn views(&self) -> Vec<Option<NodeId>> {
        self.states().iter().map(|s| s.leader).collect()
    }

    /// Ports each node received election traffic on.
    pub fn psi(&self) -> Vec<BTreeSet<Port>> {
        self.states().iter().map(|s| s.received_from.clone()).collect()
    }

    /// Ports each node probed.
    pub fn phi(&self) -> Vec<BTreeSet<Port>> {
        self.states().iter().map(NodeState::probed).collect()
    }
}

/// Runs the election and checks that it produced a unique, agreed leader
/// equal to the highest-priority node.
pub fn elect(g: &Graph, seed: u64, config: ElectionConfig) -> Result<ElectionOutcome, ElectionError> {
    match diameter(g) {
        Ok(d) if d <= 2 => {}
        Ok(d) => return Err(ElectionError::DiameterViolation(Some(d))),
        Err(_) => return Err(ElectionError::DiameterViolation(None)),
    }
    let ports = assign_ports(g, seed);
    let protocol = ElectionProtocol { slack: config.slack };
    let trace = run_with_ports(g, &ports, &protocol, config.sim_config(g))?;

    let elected: Vec<NodeId> = trace.final_states.iter().filter(|s| s.elected).map(|s| s.id).collect();
    let [leader] = elected[..] else {
        return Err(ElectionError::OutcomeViolation(format!("elected set is {elected:?}")));
    };
    if let Some(s) = trace.final_states.iter().find(|s| s.leader != Some(leader)) {
        return Err(ElectionError::OutcomeViolation(format!(
            "node {} sees leader {:?}, expected {leader}",
            s.id, s.leader
        )));
    }
    let top = trace.final_states.iter().map(|s| s.my_priority).max().expect("non-empty graph");
    if top.id != leader {
        return Err(ElectionError::OutcomeViolation(format!(
            "elected {leader} but the highest priority belongs to {}",
            top.id
        )));
    }
    Ok(ElectionOutcome { leader, seed, config, ports, trace })
}
