use std::path::Path;
use std::process::{Command, Output};

use d2le::graph::{self, generate, Family, Graph, NodeId};
use d2le::oracle::expected_leader;
use serde_json::Value;

fn d2le(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_d2le")).args(args).output().expect("spawn d2le")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf8")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_writes_requested_families() {
    let dir = tempfile::tempdir().unwrap();
    let star = dir.path().join("star.txt");
    let o = d2le(&["gen", "--family", "star", "--n", "16", "--out", p(&star)]);
    assert!(o.status.success());
    let g = graph::load(&star).unwrap();
    assert_eq!((g.n(), g.max_degree()), (16, 15));

    let wm = dir.path().join("wm.txt");
    assert!(d2le(&["gen", "--family", "windmill", "--k", "4", "--out", p(&wm)]).status.success());
    assert_eq!(graph::load(&wm).unwrap().n(), 9);

    let gnp = dir.path().join("gnp.txt");
    let o = d2le(&["gen", "--family", "gnp", "--n", "256", "--seed", "7", "--out", p(&gnp)]);
    match o.status.code() {
        Some(0) => assert!(graph::diameter(&graph::load(&gnp).unwrap()).unwrap() <= 2),
        Some(3) => {}
        other => panic!("unexpected exit {other:?}"),
    }
}

#[test]
fn gen_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.txt");
    assert_eq!(d2le(&["gen", "--family", "nope", "--n", "4", "--out", p(&out)]).status.code(), Some(2));
    assert_eq!(d2le(&["gen", "--family", "star", "--out", p(&out)]).status.code(), Some(2));
    assert_eq!(
        d2le(&["gen", "--family", "gnp", "--n", "60", "--p", "0.01", "--out", p(&out)]).status.code(),
        Some(3)
    );
}

#[test]
fn run_elect_reports_expected_leader() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.txt");
    let g = generate(Family::Gnp { n: 48, p: None }, 4).unwrap();
    graph::save(&g, &path).unwrap();
    let o = d2le(&["run", "--graph", p(&path), "--mode", "elect", "--seed", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let j: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(j["schema"], 1);
    assert_eq!(j["seed"], 1);
    assert_eq!(j["leader"], expected_leader(&g).0);
    assert!(j.get("tree").is_none());
    let per_round = j["per_round"].as_array().unwrap();
    assert_eq!(per_round.len() as u64, j["rounds"].as_u64().unwrap());
}

#[test]
fn run_broadcast_is_spanning_and_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.txt");
    let g = generate(Family::CompleteBipartite { a: 7, b: 20 }, 0).unwrap();
    graph::save(&g, &path).unwrap();
    let args = ["run", "--graph", p(&path), "--mode", "broadcast", "--seed", "1", "--overlay", "psi-union-phi"];
    let (a, b) = (d2le(&args), d2le(&args));
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let j: Value = serde_json::from_str(&stdout(&a)).unwrap();
    let tree = &j["tree"];
    assert_eq!(tree["parents"].as_object().unwrap().len(), g.n() - 1);
    assert_eq!(tree["root"], j["leader"]);
    assert_eq!(j["totals"]["invite"], tree["invites"]);
}

#[test]
fn run_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.txt");
    graph::save(&generate(Family::Complete { n: 64 }, 0).unwrap(), &path).unwrap();
    assert_eq!(d2le(&["run", "--graph", p(&path), "--max-rounds", "3"]).status.code(), Some(5));
    assert_eq!(d2le(&["run", "--graph", p(&dir.path().join("missing.txt"))]).status.code(), Some(2));

    // A path of four nodes has diameter three: rejected as invalid input.
    let ids: Vec<NodeId> = (0..4).map(NodeId).collect();
    let p4 = Graph::connected(&ids, &[(ids[0], ids[1]), (ids[1], ids[2]), (ids[2], ids[3])]).unwrap();
    let p4_path = dir.path().join("p4.txt");
    graph::save(&p4, &p4_path).unwrap();
    assert_eq!(d2le(&["run", "--graph", p(&p4_path)]).status.code(), Some(2));
}

#[test]
fn bench_csv_shape_and_order() {
    let o = d2le(&["bench", "--family", "complete", "--n", "8..64", "--trials", "2", "--broadcast"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("family,n,delta,seed,rounds,msgs,msgs_norm,height,pass"));
    let keys: Vec<(usize, u64)> = lines
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            assert_eq!(cols.len(), 9);
            assert_eq!(cols[7], "1", "complete graphs give height-1 trees");
            assert_eq!(cols[8], "true");
            (cols[1].parse().unwrap(), cols[3].parse().unwrap())
        })
        .collect();
    assert_eq!(keys, vec![(8, 0), (8, 1), (16, 0), (16, 1), (32, 0), (32, 1), (64, 0), (64, 1)]);

    let again = d2le(&["bench", "--family", "complete", "--n", "8..64", "--trials", "2", "--broadcast"]);
    assert_eq!(o.stdout, again.stdout);
}

#[test]
fn bench_rounds_grow_with_log_degree() {
    let o = d2le(&["bench", "--family", "star", "--n", "8..4096", "--trials", "1"]);
    assert!(o.status.success());
    for l in stdout(&o).lines().skip(1) {
        let cols: Vec<&str> = l.split(',').collect();
        let delta: usize = cols[2].parse().unwrap();
        let rounds: u32 = cols[4].parse().unwrap();
        let log = usize::BITS - delta.leading_zeros();
        assert!(rounds <= 3 * log + 6, "{l}");
        assert!(rounds >= log, "{l}");
    }
}

#[test]
fn bench_empty_range_is_invalid() {
    assert_eq!(d2le(&["bench", "--family", "star", "--n", "64..8"]).status.code(), Some(2));
    assert_eq!(d2le(&["bench", "--family", "star", "--n", "8..64", "--trials", "0"]).status.code(), Some(2));
}

#[test]
fn verify_corpus_directory() {
    let dir = tempfile::tempdir().unwrap();
    graph::save(&generate(Family::Cycle5, 0).unwrap(), &dir.path().join("c5.txt")).unwrap();
    graph::save(&generate(Family::Star { n: 9 }, 0).unwrap(), &dir.path().join("star.txt")).unwrap();
    let o = d2le(&["verify", "--corpus", p(dir.path())]);
    assert!(o.status.success(), "{}", stdout(&o));
    let c5 = stdout(&o).lines().find(|l| l.starts_with("c5.txt")).unwrap().to_string();
    assert!(c5.contains("yes") && c5.contains("tight"), "{c5}");

    let ids: Vec<NodeId> = (0..4).map(NodeId).collect();
    let p4 = Graph::connected(&ids, &[(ids[0], ids[1]), (ids[1], ids[2]), (ids[2], ids[3])]).unwrap();
    graph::save(&p4, &dir.path().join("p4.txt")).unwrap();
    let o = d2le(&["verify", "--corpus", p(dir.path())]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stdout(&o).contains("precondition"));
}

#[test]
fn verify_builtin_small() {
    let o = d2le(&["verify", "--max-n", "32", "--seeds", "2"]);
    assert!(o.status.success(), "{}", stdout(&o));
}

#[test]
fn sweep_reports_each_slack() {
    let o = d2le(&["sweep", "--max-n", "16", "--seeds", "2", "--slacks", "1,2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "slack,runs,failures,failure_rate");
    assert!(lines[1].starts_with("1,") && lines[2].starts_with("2,"));
    assert!(lines[2].ends_with(",0,0.0000"));
}
