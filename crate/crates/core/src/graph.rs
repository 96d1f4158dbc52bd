//! Undirected simple graphs, the generator families used as the test corpus,
//! the edge-list file format, and structural checks for diameter-two graphs.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum number of G(n, p) samples drawn before giving up.
pub const GNP_MAX_ATTEMPTS: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("gnp rejection sampling exhausted after {attempts} attempts (n={n}, p={p})")]
    GnpRejectionExhausted { n: usize, p: f64, attempts: u32 },
    #[error("graph is disconnected")]
    DisconnectedGraph,
    #[error("line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("io error: {0}")]
    Io(String),
}

/// Immutable undirected simple graph.
///
/// Nodes are stored sorted by id; internally everything is addressed by the
/// node's index in that order, so index order and id order coincide.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    ids: Vec<NodeId>,
    adj: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from a node list and an edge list.
    ///
    /// Rejects duplicate ids, self-loops, duplicate edges (in either
    /// orientation) and endpoints that are not listed nodes. Connectivity is
    /// not required here; see [`Graph::connected`].
    pub fn from_edges(ids: &[NodeId], edges: &[(NodeId, NodeId)]) -> Result<Self, GraphError> {
        if ids.is_empty() {
            return Err(GraphError::InvariantViolation("graph has no nodes".into()));
        }
        let mut sorted = ids.to_vec();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(GraphError::InvariantViolation(format!("duplicate node id {}", w[0])));
        }
        let index = |id: NodeId| {
            sorted
                .binary_search(&id)
                .map_err(|_| GraphError::InvariantViolation(format!("edge endpoint {id} is not a node")))
        };
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); sorted.len()];
        for &(u, v) in edges {
            if u == v {
                return Err(GraphError::InvariantViolation(format!("self-loop at {u}")));
            }
            let (a, b) = (index(u)?, index(v)?);
            if !adj[a].insert(b) {
                return Err(GraphError::InvariantViolation(format!("duplicate edge {u}-{v}")));
            }
            adj[b].insert(a);
        }
        Ok(Self {
            ids: sorted,
            adj: adj.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    /// Like [`Graph::from_edges`] but additionally requires connectivity.
    pub fn connected(ids: &[NodeId], edges: &[(NodeId, NodeId)]) -> Result<Self, GraphError> {
        let g = Self::from_edges(ids, edges)?;
        if !g.is_connected() {
            return Err(GraphError::InvariantViolation("graph is disconnected".into()));
        }
        Ok(g)
    }

    /// Graph on ids `0..n` with edges given by index pairs.
    fn dense(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let ids: Vec<NodeId> = (0..n as u64).map(NodeId).collect();
        let edges: Vec<(NodeId, NodeId)> =
            edges.iter().map(|&(u, v)| (NodeId(u as u64), NodeId(v as u64))).collect();
        Self::connected(&ids, &edges)
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn id(&self, index: usize) -> NodeId {
        self.ids[index]
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    /// Neighbor indices of `index`, ascending.
    pub fn neighbors(&self, index: usize) -> &[usize] {
        &self.adj[index]
    }

    pub fn degree(&self, index: usize) -> usize {
        self.adj[index].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        match (self.index_of(a), self.index_of(b)) {
            (Some(i), Some(j)) => self.adj[i].binary_search(&j).is_ok(),
            _ => false,
        }
    }

    /// Edges as id pairs `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adj.iter().enumerate().flat_map(move |(i, ns)| {
            ns.iter().filter(move |&&j| j > i).map(move |&j| (self.ids[i], self.ids[j]))
        })
    }

    pub fn is_connected(&self) -> bool {
        bfs_distances(&self.adj, 0).iter().all(Option::is_some)
    }

    pub fn degree_profile(&self) -> DegreeProfile {
        let degrees: Vec<usize> = (0..self.n()).map(|i| self.degree(i)).collect();
        let locally_max = (0..self.n())
            .filter(|&v| self.adj[v].iter().all(|&u| degrees[u] <= degrees[v]))
            .map(|v| self.ids[v])
            .collect();
        DegreeProfile {
            max_degree: self.max_degree(),
            degrees,
            locally_max,
        }
    }
}

/// Breadth-first distances from `src` over an index adjacency list.
pub(crate) fn bfs_distances(adj: &[Vec<usize>], src: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    let mut queue = VecDeque::from([src]);
    dist[src] = Some(0);
    while let Some(v) = queue.pop_front() {
        let d = dist[v].unwrap_or(0);
        for &u in &adj[v] {
            if dist[u].is_none() {
                dist[u] = Some(d + 1);
                queue.push_back(u);
            }
        }
    }
    dist
}

/// Diameter of an index adjacency list, or `None` when disconnected.
///
/// Breadth-first search from every node with the frontier kept as a bitset,
/// so each level costs `O(n / 64)` words per frontier node.
pub(crate) fn adjacency_diameter(adj: &[Vec<usize>]) -> Option<usize> {
    let n = adj.len();
    let words = n.div_ceil(64);
    let rows: Vec<Vec<u64>> = adj
        .iter()
        .map(|ns| {
            let mut row = vec![0u64; words];
            for &u in ns {
                row[u / 64] |= 1 << (u % 64);
            }
            row
        })
        .collect();
    let mut diameter = 0;
    for src in 0..n {
        let mut seen = vec![0u64; words];
        seen[src / 64] |= 1 << (src % 64);
        let mut frontier = vec![src];
        let mut reached = 1;
        let mut depth = 0;
        while !frontier.is_empty() {
            let mut next = vec![0u64; words];
            for &v in &frontier {
                for (acc, w) in next.iter_mut().zip(&rows[v]) {
                    *acc |= w;
                }
            }
            frontier.clear();
            for (i, (acc, s)) in next.iter_mut().zip(seen.iter_mut()).enumerate() {
                *acc &= !*s;
                *s |= *acc;
                let mut bits = *acc;
                while bits != 0 {
                    frontier.push(i * 64 + bits.trailing_zeros() as usize);
                    bits &= bits - 1;
                }
            }
            if !frontier.is_empty() {
                depth += 1;
                reached += frontier.len();
            }
        }
        if reached < n {
            return None;
        }
        diameter = diameter.max(depth);
    }
    Some(diameter)
}

/// Exact diameter by breadth-first search from every node.
pub fn diameter(g: &Graph) -> Result<usize, GraphError> {
    adjacency_diameter(&g.adj).ok_or(GraphError::DisconnectedGraph)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DegreeProfile {
    /// Degree per node, in index order.
    pub degrees: Vec<usize>,
    pub max_degree: usize,
    /// Nodes whose degree is at least that of each of their neighbors.
    pub locally_max: Vec<NodeId>,
}

/// One locally-maximal node checked against `Δ < d_v²`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LocalMaxCheck {
    pub node: NodeId,
    pub degree: usize,
    pub degree_squared: usize,
    pub pass: bool,
}

/// Result of [`structure_check`].
///
/// The degree bound uses the count `n <= 1 + d_v + d_v(d_v - 1) = d_v² + 1`
/// around a locally-maximal node `v`. It gives `Δ < d_v²` whenever
/// `d_v >= 2`, and only `Δ² >= n - 1` for the maximum degree. The often
/// quoted `Δ >= √n` is false: the 5-cycle has `Δ = 2 < √5`, and it is the
/// tight case of `Δ² >= n - 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureReport {
    pub n: usize,
    pub max_degree: usize,
    pub diameter: Option<usize>,
    /// False when the graph is disconnected or has diameter above 2; the
    /// remaining checks are then not meaningful and are skipped.
    pub precondition_ok: bool,
    /// Whether the locally-max lemma applies (`n > 4`).
    pub lemma_applies: bool,
    pub local_max: Vec<LocalMaxCheck>,
    pub local_max_pass: bool,
    pub max_degree_squared: usize,
    pub min_degree_bound_pass: bool,
    /// `Δ² == n - 1`.
    pub min_degree_bound_tight: bool,
}

impl StructureReport {
    pub fn passed(&self) -> bool {
        self.precondition_ok && self.local_max_pass && self.min_degree_bound_pass
    }
}

pub fn structure_check(g: &Graph) -> StructureReport {
    let n = g.n();
    let profile = g.degree_profile();
    let delta = profile.max_degree;
    let diam = diameter(g).ok();
    let precondition_ok = matches!(diam, Some(d) if d <= 2);
    let lemma_applies = precondition_ok && n > 4;

    let mut local_max = Vec::new();
    if lemma_applies {
        for &v in &profile.locally_max {
            let d = g.degree(g.index_of(v).expect("profile node"));
            if d < 2 {
                continue;
            }
            local_max.push(LocalMaxCheck {
                node: v,
                degree: d,
                degree_squared: d * d,
                pass: delta < d * d,
            });
        }
    }
    let local_max_pass = local_max.iter().all(|c| c.pass);
    StructureReport {
        n,
        max_degree: delta,
        diameter: diam,
        precondition_ok,
        lemma_applies,
        local_max,
        local_max_pass,
        max_degree_squared: delta * delta,
        min_degree_bound_pass: precondition_ok && delta * delta + 1 >= n,
        min_degree_bound_tight: delta * delta + 1 == n,
    }
}

/// Generator families. Nodes are always numbered `0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// Center 0, leaves `1..n`.
    Star { n: usize },
    Cycle5,
    /// Side A is `0..a`, side B is `a..a+b`.
    CompleteBipartite { a: usize, b: usize },
    /// Friendship graph: hub 0 and `k` triangles `{0, 2i-1, 2i}`.
    Windmill { k: usize },
    /// Erdős–Rényi G(n, p), rejection-sampled until the diameter is at most 2.
    /// `p = None` selects `sqrt(4 ln(max(n, 2)) / n)` clamped to 1.
    Gnp { n: usize, p: Option<f64> },
    Complete { n: usize },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Star { .. } => "star",
            Family::Cycle5 => "cycle5",
            Family::CompleteBipartite { .. } => "complete_bipartite",
            Family::Windmill { .. } => "windmill",
            Family::Gnp { .. } => "gnp",
            Family::Complete { .. } => "complete",
        }
    }

    pub fn node_count(&self) -> usize {
        match *self {
            Family::Star { n } | Family::Gnp { n, .. } | Family::Complete { n } => n,
            Family::Cycle5 => 5,
            Family::CompleteBipartite { a, b } => a + b,
            Family::Windmill { k } => 2 * k + 1,
        }
    }

    /// Whether generated instances depend on the seed.
    pub fn is_random(&self) -> bool {
        matches!(self, Family::Gnp { .. })
    }

    /// The diameter every instance has by construction, when fixed.
    pub fn declared_diameter(&self) -> Option<usize> {
        let n = self.node_count();
        match self {
            Family::Gnp { .. } => None,
            _ if n == 1 => Some(0),
            _ if n == 2 => Some(1),
            Family::Complete { .. } | Family::Windmill { k: 1 } => Some(1),
            _ => Some(2),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Family::Star { n } => write!(f, "star({n})"),
            Family::Cycle5 => write!(f, "cycle5"),
            Family::CompleteBipartite { a, b } => write!(f, "complete_bipartite({a},{b})"),
            Family::Windmill { k } => write!(f, "windmill({k})"),
            Family::Gnp { n, p: Some(p) } => write!(f, "gnp({n},{p})"),
            Family::Gnp { n, p: None } => write!(f, "gnp({n})"),
            Family::Complete { n } => write!(f, "complete({n})"),
        }
    }
}

/// Default edge probability for G(n, p) sampling.
pub fn default_gnp_p(n: usize) -> f64 {
    let nf = n.max(1) as f64;
    ((4.0 * (n.max(2) as f64).ln()) / nf).sqrt().min(1.0)
}

pub fn generate(family: Family, seed: u64) -> Result<Graph, GraphError> {
    let bad = |msg: &str| Err(GraphError::InvalidParams(format!("{family}: {msg}")));
    match family {
        Family::Star { n } => {
            if n == 0 {
                return bad("n must be positive");
            }
            let edges: Vec<_> = (1..n).map(|leaf| (0, leaf)).collect();
            Graph::dense(n, &edges)
        }
        Family::Cycle5 => Graph::dense(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)]),
        Family::CompleteBipartite { a, b } => {
            if a == 0 || b == 0 {
                return bad("both sides must be non-empty");
            }
            let edges: Vec<_> = (0..a).flat_map(|u| (a..a + b).map(move |v| (u, v))).collect();
            Graph::dense(a + b, &edges)
        }
        Family::Windmill { k } => {
            if k == 0 {
                return bad("k must be positive");
            }
            let mut edges = Vec::with_capacity(3 * k);
            for blade in 1..=k {
                let (x, y) = (2 * blade - 1, 2 * blade);
                edges.extend([(0, x), (0, y), (x, y)]);
            }
            Graph::dense(2 * k + 1, &edges)
        }
        Family::Complete { n } => {
            if n == 0 {
                return bad("n must be positive");
            }
            let edges: Vec<_> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
            Graph::dense(n, &edges)
        }
        Family::Gnp { n, p } => {
            if n == 0 {
                return bad("n must be positive");
            }
            if let Some(p) = p {
                if !(p > 0.0 && p <= 1.0) {
                    return bad("p must lie in (0, 1]");
                }
            }
            let p = p.unwrap_or_else(|| default_gnp_p(n));
            sample_gnp(n, p, seed)
        }
    }
}

fn sample_gnp(n: usize, p: f64, seed: u64) -> Result<Graph, GraphError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..GNP_MAX_ATTEMPTS {
        let mut adj = vec![Vec::new(); n];
        for u in 0..n {
            for v in u + 1..n {
                if rng.random_bool(p) {
                    adj[u].push(v);
                    adj[v].push(u);
                }
            }
        }
        if matches!(adjacency_diameter(&adj), Some(d) if d <= 2) {
            let edges: Vec<_> = adj
                .iter()
                .enumerate()
                .flat_map(|(u, ns)| ns.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
                .collect();
            return Graph::dense(n, &edges);
        }
    }
    Err(GraphError::GnpRejectionExhausted { n, p, attempts: GNP_MAX_ATTEMPTS })
}

/// Renders the edge-list file format: `n <count>` then one `u v` line per
/// edge with `u < v`, in lexicographic order.
///
/// Only graphs whose ids are exactly `0..n` are representable.
pub fn to_edge_list(g: &Graph) -> Result<String, GraphError> {
    if g.ids.iter().enumerate().any(|(i, id)| id.0 != i as u64) {
        return Err(GraphError::InvalidParams("edge-list files require node ids 0..n".into()));
    }
    let mut out = format!("n {}\n", g.n());
    for (u, v) in g.edges() {
        out.push_str(&format!("{u} {v}\n"));
    }
    Ok(out)
}

pub fn parse_edge_list(text: &str) -> Result<Graph, GraphError> {
    let mut n: Option<usize> = None;
    let mut edges = Vec::new();
    let mut seen = BTreeSet::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let err = |msg: String| GraphError::ParseError { line, msg };
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        match n {
            None => match fields.as_slice() {
                ["n", count] => {
                    let count: usize = count.parse().map_err(|_| err(format!("bad node count {count:?}")))?;
                    if count == 0 {
                        return Err(err("node count must be positive".into()));
                    }
                    n = Some(count);
                }
                _ => return Err(err("expected header `n <count>`".into())),
            },
            Some(count) => {
                let [a, b] = fields.as_slice() else {
                    return Err(err(format!("expected `u v`, got {trimmed:?}")));
                };
                let u: u64 = a.parse().map_err(|_| err(format!("bad node id {a:?}")))?;
                let v: u64 = b.parse().map_err(|_| err(format!("bad node id {b:?}")))?;
                if u == v {
                    return Err(GraphError::InvariantViolation(format!("line {line}: self-loop at {u}")));
                }
                if u.max(v) >= count as u64 {
                    return Err(err(format!("node id out of range 0..{count}")));
                }
                if !seen.insert((u.min(v), u.max(v))) {
                    return Err(GraphError::InvariantViolation(format!("line {line}: duplicate edge {u}-{v}")));
                }
                edges.push((NodeId(u), NodeId(v)));
            }
        }
    }
    let count = n.ok_or(GraphError::ParseError { line: 1, msg: "missing header `n <count>`".into() })?;
    let ids: Vec<NodeId> = (0..count as u64).map(NodeId).collect();
    Graph::connected(&ids, &edges)
}

pub fn save(g: &Graph, path: &Path) -> Result<(), GraphError> {
    let text = to_edge_list(g)?;
    fs::write(path, text).map_err(|e| GraphError::Io(format!("{}: {e}", path.display())))
}

pub fn load(path: &Path) -> Result<Graph, GraphError> {
    let text = fs::read_to_string(path).map_err(|e| GraphError::Io(format!("{}: {e}", path.display())))?;
    parse_edge_list(&text)
}
