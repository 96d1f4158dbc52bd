//! Command-line front end: `gen`, `run`, `bench`, `verify` and `sweep`.
//!
//! Exit codes: 0 success, 2 invalid parameters or input, 3 G(n, p) rejection
//! sampling exhausted, 4 a check or tree coverage failed, 5 round cap hit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::broadcast::{broadcast_payload, build_tree, validate_tree, BroadcastError, OverlayChoice, TreeReport};
use crate::corpus::{builtin_corpus, family_by_name};
use crate::election::{elect, ElectionConfig, ElectionError, ElectionOutcome, DEFAULT_SLACK};
use crate::graph::{self, diameter, generate, structure_check, Family, Graph, GraphError, NodeId};
use crate::oracle::{self, expected_leader, log_term, reference_replay, BoundReport};
use crate::simcore::{MessageCounts, RoundMetrics, SimConfig};

pub const SCHEMA: u32 = 1;
pub const BENCH_HEADER: &str = "family,n,delta,seed,rounds,msgs,msgs_norm,height,pass";

#[derive(Debug, Parser)]
#[command(name = "d2le", version, about = "Leader election and broadcast trees in diameter-two networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a graph file.
    Gen(GenArgs),
    /// Run the election (and optionally the broadcast tree) on a graph file.
    Run(RunArgs),
    /// Measure complexity across a family and size range; CSV on stdout.
    Bench(BenchArgs),
    /// Structure checks and oracle equivalence over a corpus.
    Verify(VerifyArgs),
    /// Failure rate of the election for several wait slacks; CSV on stdout.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub family: String,
    #[arg(long)]
    pub n: Option<usize>,
    /// Side sizes for complete_bipartite.
    #[arg(long)]
    pub a: Option<usize>,
    #[arg(long)]
    pub b: Option<usize>,
    /// Blade count for windmill.
    #[arg(long)]
    pub k: Option<usize>,
    /// Edge probability for gnp.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Elect,
    Broadcast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OverlayArg {
    Psi,
    PsiUnionPhi,
}

impl From<OverlayArg> for OverlayChoice {
    fn from(o: OverlayArg) -> Self {
        match o {
            OverlayArg::Psi => OverlayChoice::Psi,
            OverlayArg::PsiUnionPhi => OverlayChoice::PsiUnionPhi,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Elect)]
    pub mode: Mode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_SLACK)]
    pub slack: u32,
    #[arg(long, value_enum, default_value_t = OverlayArg::PsiUnionPhi)]
    pub overlay: OverlayArg,
    #[arg(long)]
    pub max_rounds: Option<u32>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub family: String,
    /// Sizes as `lo..hi` (doubling from `lo`) or a single size.
    #[arg(long)]
    pub n: String,
    #[arg(long, default_value_t = 3)]
    pub trials: u64,
    /// First seed; trial `t` uses `seed + t`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_SLACK)]
    pub slack: u32,
    /// Also build the broadcast tree and report its height.
    #[arg(long)]
    pub broadcast: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Directory of graph files (`*.txt`). Uses the built-in corpus when absent.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Largest built-in corpus size.
    #[arg(long, default_value_t = 1024)]
    pub max_n: usize,
    /// Seeds per graph for the oracle comparison (graphs with n <= 64).
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 256)]
    pub max_n: usize,
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub slacks: Vec<u32>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    InvalidParams(String),
    #[error("{0}")]
    GnpExhausted(String),
    #[error("{0}")]
    CheckFailed(String),
    #[error("{0}")]
    RoundCap(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::InvalidParams(_) | CliError::Io(_) => 2,
            CliError::GnpExhausted(_) => 3,
            CliError::CheckFailed(_) => 4,
            CliError::RoundCap(_) => 5,
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::GnpRejectionExhausted { .. } => CliError::GnpExhausted(e.to_string()),
            other => CliError::InvalidParams(other.to_string()),
        }
    }
}

impl From<ElectionError> for CliError {
    fn from(e: ElectionError) -> Self {
        match e {
            ElectionError::RoundCapExceeded { .. } => CliError::RoundCap(e.to_string()),
            ElectionError::DiameterViolation(_) => CliError::InvalidParams(e.to_string()),
            other => CliError::CheckFailed(other.to_string()),
        }
    }
}

impl From<BroadcastError> for CliError {
    fn from(e: BroadcastError) -> Self {
        match e {
            BroadcastError::RoundCapExceeded { .. } => CliError::RoundCap(e.to_string()),
            other => CliError::CheckFailed(other.to_string()),
        }
    }
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a, out),
        Command::Run(a) => cmd_run(&a, out),
        Command::Bench(a) => cmd_bench(&a, out),
        Command::Verify(a) => cmd_verify(&a, out),
        Command::Sweep(a) => cmd_sweep(&a, out),
    }
}

fn gen_family(a: &GenArgs) -> Result<Family, CliError> {
    let need = |v: Option<usize>, flag: &str| {
        v.ok_or_else(|| CliError::InvalidParams(format!("--{flag} is required for {}", a.family)))
    };
    Ok(match a.family.as_str() {
        "star" => Family::Star { n: need(a.n, "n")? },
        "complete" => Family::Complete { n: need(a.n, "n")? },
        "cycle5" => Family::Cycle5,
        "windmill" => Family::Windmill { k: need(a.k, "k")? },
        "gnp" => Family::Gnp { n: need(a.n, "n")?, p: a.p },
        "complete_bipartite" | "complete-bipartite" => Family::CompleteBipartite {
            a: need(a.a, "a")?,
            b: need(a.b, "b")?,
        },
        other => return Err(CliError::InvalidParams(format!("unknown family {other:?}"))),
    })
}

pub fn cmd_gen(a: &GenArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let family = gen_family(a)?;
    let g = generate(family, a.seed)?;
    graph::save(&g, &a.out)?;
    let d = diameter(&g)?;
    writeln!(out, "{family} seed={} n={} delta={} diameter={d}", a.seed, g.n(), g.max_degree())?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphSummary {
    pub n: usize,
    pub edges: usize,
    pub max_degree: usize,
    pub diameter: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ElectionJson {
    pub leader: NodeId,
    pub expected_leader: NodeId,
    pub rounds: u32,
    pub elected: Vec<NodeId>,
    /// Leader as seen by each node.
    pub views: BTreeMap<NodeId, Option<NodeId>>,
    /// `|Ψ_v ∪ Φ_v|` per node.
    pub overlay_sizes: BTreeMap<NodeId, usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TreeJson {
    pub root: NodeId,
    pub parents: BTreeMap<NodeId, NodeId>,
    pub height: u32,
    pub join_rounds: BTreeMap<NodeId, u32>,
    pub overlay: OverlayChoice,
    pub invites: u64,
    pub rounds: u32,
    pub digest: String,
    pub validation: TreeReport,
    pub payload_messages: u64,
    pub payload_rounds: u32,
    pub info_graph_connected: bool,
    pub info_graph_diameter: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunJson {
    pub schema: u32,
    pub mode: Mode,
    pub seed: u64,
    pub slack: u32,
    pub graph: GraphSummary,
    pub rounds: u32,
    pub totals: MessageCounts,
    pub per_round: Vec<RoundMetrics>,
    pub leader: NodeId,
    pub digest: String,
    pub election: ElectionJson,
    pub checks: Vec<BoundReport>,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tree: Option<TreeJson>,
}

impl RunJson {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run json serializes")
    }
}

/// A yes/no check expressed as a report: `measured` counts violations.
fn flag(check: &str, ok: bool, note: String) -> BoundReport {
    BoundReport {
        check: check.to_string(),
        measured: if ok { 0.0 } else { 1.0 },
        envelope: 0.0,
        fitted_constant: None,
        pass: ok,
        notes: if ok { Vec::new() } else { vec![note] },
    }
}

/// Election-level checks at the default constants.
pub fn election_checks(g: &Graph, out: &ElectionOutcome) -> Vec<BoundReport> {
    let expected = expected_leader(g);
    vec![
        flag(
            "leader_is_expected",
            out.leader == expected,
            format!("elected {} but expected {expected}", out.leader),
        ),
        flag(
            "views_agree",
            out.views().iter().all(|v| *v == Some(out.leader)),
            "some node does not know the leader".into(),
        ),
        oracle::check_round_bound(&out.trace, g, 3.0, 6.0),
        oracle::check_message_bound(&out.trace, g, 12.0, 12.0),
        oracle::check_loop_messages(&out.trace, g),
        oracle::check_kingdoms(&out.trace, g),
    ]
}

/// Builds the run report for one graph. Fails only on errors that prevent
/// a report (bad input, round cap); check failures are recorded inside.
pub fn run_report(
    g: &Graph,
    mode: Mode,
    seed: u64,
    config: ElectionConfig,
    overlay: OverlayChoice,
) -> Result<RunJson, CliError> {
    let d = diameter(g)?;
    let out = elect(g, seed, config)?;
    let mut checks = election_checks(g, &out);
    let mut totals = out.trace.totals;

    let tree = if mode == Mode::Broadcast {
        let sim = match config.max_rounds {
            Some(max_rounds) => SimConfig { max_rounds },
            None => SimConfig::for_max_degree(g.max_degree()),
        };
        let info = oracle::info_graph(g, &out, overlay);
        checks.push(flag("info_graph_connected", info.connected, "information graph is disconnected".into()));
        let built = build_tree(g, &out, overlay, sim)?;
        totals.invite = built.invites;
        let validation = validate_tree(&built.tree, g);
        checks.push(flag("tree_valid", validation.passed(), format!("{validation:?}")));
        checks.push(oracle::check_tree_height(built.tree.height, g));
        checks.push(oracle::check_broadcast_messages(built.invites, out.trace.totals.announce, g, 12.0, 12.0));
        let delivery = broadcast_payload(&built.tree, g, "payload")?;
        checks.push(flag(
            "payload_delivery",
            delivery.messages + 1 == g.n() as u64 && delivery.rounds == built.tree.height,
            format!("{} messages in {} rounds", delivery.messages, delivery.rounds),
        ));
        Some(TreeJson {
            root: built.tree.root,
            parents: built.tree.parent.clone(),
            height: built.tree.height,
            join_rounds: built.tree.join_round.clone(),
            overlay,
            invites: built.invites,
            rounds: built.rounds,
            digest: format!("{:016x}", built.digest),
            validation,
            payload_messages: delivery.messages,
            payload_rounds: delivery.rounds,
            info_graph_connected: info.connected,
            info_graph_diameter: info.diameter,
        })
    } else {
        None
    };

    let states = out.states();
    let election = ElectionJson {
        leader: out.leader,
        expected_leader: expected_leader(g),
        rounds: out.rounds(),
        elected: states.iter().filter(|s| s.elected).map(|s| s.id).collect(),
        views: states.iter().map(|s| (s.id, s.leader)).collect(),
        overlay_sizes: states.iter().map(|s| (s.id, s.overlay().len())).collect(),
    };
    let pass = checks.iter().all(|c| c.pass);
    Ok(RunJson {
        schema: SCHEMA,
        mode,
        seed,
        slack: config.slack,
        graph: GraphSummary { n: g.n(), edges: g.edge_count(), max_degree: g.max_degree(), diameter: d },
        rounds: out.rounds(),
        totals,
        per_round: out.trace.per_round.clone(),
        leader: out.leader,
        digest: out.trace.digest_hex(),
        election,
        checks,
        pass,
        tree,
    })
}

pub fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let g = graph::load(&a.graph)?;
    let config = ElectionConfig { slack: a.slack, max_rounds: a.max_rounds };
    let report = run_report(&g, a.mode, a.seed, config, a.overlay.into())?;
    writeln!(out, "{}", report.to_json())?;
    if report.pass {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.check.as_str()).collect();
        Err(CliError::CheckFailed(format!("checks failed: {}", failed.join(", "))))
    }
}

/// Parses `lo..hi` into `lo, 2lo, 4lo, ... <= hi`, or a single size.
pub fn parse_sizes(spec: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::InvalidParams(format!("bad size range {spec:?}"));
    let (lo, hi) = match spec.split_once("..") {
        Some((lo, hi)) => (lo.trim().parse::<usize>().map_err(|_| bad())?, hi.trim().parse::<usize>().map_err(|_| bad())?),
        None => {
            let n = spec.trim().parse::<usize>().map_err(|_| bad())?;
            (n, n)
        }
    };
    if lo == 0 || lo > hi {
        return Err(CliError::InvalidParams(format!("empty size range {spec:?}")));
    }
    let mut sizes = Vec::new();
    let mut n = lo;
    while n <= hi {
        sizes.push(n);
        n *= 2;
    }
    Ok(sizes)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub family: String,
    pub n: usize,
    pub delta: usize,
    pub seed: u64,
    pub rounds: u32,
    pub msgs: u64,
    pub msgs_norm: f64,
    pub height: Option<u32>,
    pub pass: bool,
}

impl BenchRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.4},{},{}",
            self.family,
            self.n,
            self.delta,
            self.seed,
            self.rounds,
            self.msgs,
            self.msgs_norm,
            self.height.map(|h| h.to_string()).unwrap_or_default(),
            self.pass
        )
    }
}

/// One bench cell: generate, elect, optionally build the tree, check.
pub fn bench_cell(family: Family, seed: u64, slack: u32, broadcast: bool) -> Result<BenchRow, CliError> {
    let g = generate(family, seed)?;
    let mode = if broadcast { Mode::Broadcast } else { Mode::Elect };
    let report = run_report(&g, mode, seed, ElectionConfig { slack, max_rounds: None }, OverlayChoice::PsiUnionPhi)?;
    let msgs = report.totals.probe + report.totals.update + report.totals.announce;
    let scale = (g.n() as f64) * f64::from(log_term(g.max_degree()).max(1));
    Ok(BenchRow {
        family: family.name().to_string(),
        n: g.n(),
        delta: g.max_degree(),
        seed,
        rounds: report.rounds,
        msgs,
        msgs_norm: msgs as f64 / scale,
        height: report.tree.as_ref().map(|t| t.height),
        pass: report.pass,
    })
}

pub fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let sizes = parse_sizes(&a.n)?;
    if a.trials == 0 {
        return Err(CliError::InvalidParams("--trials must be positive".into()));
    }
    let mut cells = Vec::new();
    for &n in &sizes {
        let family = family_by_name(&a.family, n)
            .ok_or_else(|| CliError::InvalidParams(format!("family {:?} at n={n}", a.family)))?;
        for t in 0..a.trials {
            cells.push((family, a.seed + t));
        }
    }
    let results: Vec<Result<BenchRow, CliError>> = cells
        .par_iter()
        .map(|&(family, seed)| bench_cell(family, seed, a.slack, a.broadcast))
        .collect();
    writeln!(out, "{BENCH_HEADER}")?;
    let mut first_error = None;
    let mut failed = false;
    for r in results {
        match r {
            Ok(row) => {
                failed |= !row.pass;
                writeln!(out, "{}", row.csv())?;
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    match first_error {
        Some(e) => Err(e),
        None if failed => Err(CliError::CheckFailed("some bench cells failed their checks".into())),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyRow {
    pub graph: String,
    pub n: usize,
    pub delta: usize,
    pub diameter: Option<usize>,
    pub structure: bool,
    pub tight: bool,
    /// `None` when the graph is too large for the oracle.
    pub oracle: Option<bool>,
    pub note: String,
}

impl VerifyRow {
    pub fn pass(&self) -> bool {
        self.structure && self.oracle.unwrap_or(true)
    }
}

pub const ORACLE_MAX_N: usize = 64;

/// Compares the election with the reference replay on `seeds` seeds.
pub fn oracle_agrees(g: &Graph, seeds: u64) -> Result<(), String> {
    for seed in 0..seeds {
        let cfg = ElectionConfig::default();
        let out = elect(g, seed, cfg).map_err(|e| format!("seed {seed}: elect: {e}"))?;
        let r = reference_replay(g, &out.ports, cfg.slack, cfg.sim_config(g).max_rounds)
            .map_err(|e| format!("seed {seed}: replay: {e}"))?;
        let same = r.leader == out.leader
            && r.views == out.views()
            && r.rounds == out.rounds()
            && r.probes == out.trace.totals.probe
            && r.updates == out.trace.totals.update
            && r.announces == out.trace.totals.announce
            && r.digest == out.trace.digest
            && r.psi == out.psi()
            && r.phi == out.phi();
        if !same {
            return Err(format!("seed {seed}: replay differs from election"));
        }
    }
    Ok(())
}

pub fn verify_graph(name: &str, g: &Graph, seeds: u64) -> VerifyRow {
    let s = structure_check(g);
    let mut note = String::new();
    if !s.precondition_ok {
        let _ = write!(note, "diameter {:?} violates the diameter <= 2 precondition", s.diameter);
    } else if s.lemma_applies && s.min_degree_bound_tight {
        let _ = write!(note, "tight: delta^2 = n - 1");
    }
    let oracle = (s.precondition_ok && g.n() <= ORACLE_MAX_N).then(|| match oracle_agrees(g, seeds) {
        Ok(()) => true,
        Err(e) => {
            note = e;
            false
        }
    });
    VerifyRow {
        graph: name.to_string(),
        n: g.n(),
        delta: g.max_degree(),
        diameter: s.diameter,
        structure: s.passed(),
        tight: s.min_degree_bound_tight,
        oracle,
        note,
    }
}

fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut rows = Vec::new();
    match &a.corpus {
        Some(dir) => {
            for path in corpus_files(dir)? {
                let name = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
                match graph::load(&path) {
                    Ok(g) => rows.push(verify_graph(&name, &g, a.seeds)),
                    Err(e) => rows.push(VerifyRow {
                        graph: name,
                        n: 0,
                        delta: 0,
                        diameter: None,
                        structure: false,
                        tight: false,
                        oracle: None,
                        note: e.to_string(),
                    }),
                }
            }
        }
        None => {
            let corpus = builtin_corpus(a.max_n);
            rows = corpus
                .par_iter()
                .map(|&f| match generate(f, 0) {
                    Ok(g) => verify_graph(&f.to_string(), &g, a.seeds),
                    Err(e) => VerifyRow {
                        graph: f.to_string(),
                        n: f.node_count(),
                        delta: 0,
                        diameter: None,
                        structure: false,
                        tight: false,
                        oracle: None,
                        note: e.to_string(),
                    },
                })
                .collect();
        }
    }
    writeln!(out, "{:<28} {:>5} {:>5} {:>4} {:>9} {:>5} {:>6}  note", "graph", "n", "delta", "diam", "structure", "tight", "oracle")?;
    for r in &rows {
        let diam = r.diameter.map(|d| d.to_string()).unwrap_or_else(|| "-".into());
        let oracle = match r.oracle {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "-",
        };
        writeln!(
            out,
            "{:<28} {:>5} {:>5} {:>4} {:>9} {:>5} {:>6}  {}",
            r.graph,
            r.n,
            r.delta,
            diam,
            if r.structure { "pass" } else { "FAIL" },
            if r.tight { "yes" } else { "" },
            oracle,
            r.note
        )?;
    }
    let failures = rows.iter().filter(|r| !r.pass()).count();
    writeln!(out, "{} graphs, {failures} failed", rows.len())?;
    if failures > 0 {
        return Err(CliError::CheckFailed(format!("{failures} graphs failed verification")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub slack: u32,
    pub runs: usize,
    pub failures: usize,
}

impl SweepRow {
    pub fn failure_rate(&self) -> f64 {
        if self.runs == 0 {
            0.0
        } else {
            self.failures as f64 / self.runs as f64
        }
    }
}

/// Counts election failures of any kind per slack over the built-in corpus.
pub fn slack_sweep(max_n: usize, seeds: u64, slacks: &[u32]) -> Vec<SweepRow> {
    let corpus = builtin_corpus(max_n);
    let cells: Vec<(Family, u64)> = corpus.iter().flat_map(|&f| (0..seeds).map(move |s| (f, s))).collect();
    slacks
        .iter()
        .map(|&slack| {
            let failures = cells
                .par_iter()
                .filter(|&&(f, seed)| {
                    let Ok(g) = generate(f, seed) else { return false };
                    let cfg = ElectionConfig { slack, max_rounds: None };
                    match elect(&g, seed, cfg) {
                        Ok(out) => out.leader != expected_leader(&g),
                        Err(_) => true,
                    }
                })
                .count();
            SweepRow { slack, runs: cells.len(), failures }
        })
        .collect()
}

pub fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.slacks.is_empty() || a.seeds == 0 {
        return Err(CliError::InvalidParams("need at least one slack and one seed".into()));
    }
    writeln!(out, "slack,runs,failures,failure_rate")?;
    for r in slack_sweep(a.max_n, a.seeds, &a.slacks) {
        writeln!(out, "{},{},{},{:.4}", r.slack, r.runs, r.failures, r.failure_rate())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_ranges() {
        assert_eq!(parse_sizes("8..64").unwrap(), vec![8, 16, 32, 64]);
        assert_eq!(parse_sizes("8..100").unwrap(), vec![8, 16, 32, 64]);
        assert_eq!(parse_sizes("5").unwrap(), vec![5]);
        assert_eq!(parse_sizes("64..8").unwrap_err().exit_code(), 2);
        assert_eq!(parse_sizes("0..8").unwrap_err().exit_code(), 2);
        assert_eq!(parse_sizes("x").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(GraphError::GnpRejectionExhausted { n: 1, p: 0.1, attempts: 100 }).exit_code(), 3);
        assert_eq!(CliError::from(ElectionError::RoundCapExceeded { max_rounds: 3 }).exit_code(), 5);
        assert_eq!(CliError::from(BroadcastError::CoverageFailure { unreached: vec![] }).exit_code(), 4);
        assert_eq!(CliError::from(ElectionError::DiameterViolation(Some(3))).exit_code(), 2);
    }

    #[test]
    fn report_is_deterministic_and_passes() {
        let g = generate(Family::Gnp { n: 40, p: None }, 2).unwrap();
        let a = run_report(&g, Mode::Broadcast, 2, ElectionConfig::default(), OverlayChoice::PsiUnionPhi).unwrap();
        let b = run_report(&g, Mode::Broadcast, 2, ElectionConfig::default(), OverlayChoice::PsiUnionPhi).unwrap();
        assert!(a.pass, "{:?}", a.checks);
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.leader, expected_leader(&g));
    }

    #[test]
    fn bench_row_format() {
        let row = bench_cell(Family::Star { n: 8 }, 0, 2, true).unwrap();
        let csv = row.csv();
        assert!(csv.starts_with("star,8,7,0,"));
        assert!(csv.ends_with(",1,true"));
        assert_eq!(csv.split(',').count(), BENCH_HEADER.split(',').count());
    }

    #[test]
    fn verify_flags_diameter_three() {
        let ids: Vec<NodeId> = (0..4).map(NodeId).collect();
        let g = Graph::connected(&ids, &[(ids[0], ids[1]), (ids[1], ids[2]), (ids[2], ids[3])]).unwrap();
        let row = verify_graph("p4", &g, 1);
        assert!(!row.pass() && row.note.contains("precondition"));

        let row = verify_graph("c5", &generate(Family::Cycle5, 0).unwrap(), 2);
        assert!(row.pass() && row.tight && row.oracle == Some(true));
    }
}
