use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use touchloc::codec::policy_from_json;
use touchloc::preprocess::PolicyDatabase;
use touchloc::scenario::{Scenario, W1_JSON};

struct Workspace {
    dir: TempDir,
    scenario: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let scenario = dir.path().join("w1.json");
        fs::write(&scenario, W1_JSON).unwrap();
        Workspace { dir, scenario }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_touchloc"))
            .args(args)
            .current_dir(self.dir.path())
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn err(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(!out.status.success(), "{args:?} should fail");
        String::from_utf8(out.stderr).unwrap()
    }

    fn scenario(&self) -> &str {
        self.scenario.to_str().unwrap()
    }
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap()
}

#[test]
fn preprocess_writes_database_and_stats() {
    let ws = Workspace::new();
    let db = ws.path("db.json");
    let stats = ws.path("stats.csv");
    ws.ok(&[
        "preprocess",
        "--scenario",
        ws.scenario(),
        "--out",
        db.to_str().unwrap(),
        "--stats",
        stats.to_str().unwrap(),
        "--oracle",
    ]);
    let database = PolicyDatabase::from_json(&read(&db)).unwrap();
    assert_eq!(database.len(), 2);
    assert!(database.get("w1-001").is_some());
    let stats = read(&stats);
    let mut lines = stats.lines();
    assert_eq!(
        lines.next(),
        Some("scenario_id,|H|,mode,epsilon,backups,wall_time_s,expected_cost,oracle_cost,success")
    );
    let w1_001: Vec<&str> = lines.nth(1).unwrap().split(',').collect();
    assert_eq!(&w1_001[..4], ["w1-001", "3", "experience", "2"]);
    assert_eq!(w1_001[5], "");
    assert!(w1_001[6].starts_with("5.666666"));
    assert_eq!(w1_001[6], w1_001[7]);
    assert_eq!(w1_001[8], "true");
}

#[test]
fn fixed_seed_runs_are_byte_identical() {
    let ws = Workspace::new();
    let run = |tag: &str| {
        let db = ws.path(&format!("db-{tag}.json"));
        let stats = ws.path(&format!("stats-{tag}.csv"));
        let policy = ws.path(&format!("policy-{tag}.json"));
        ws.ok(&[
            "--seed",
            "11",
            "preprocess",
            "--scenario",
            ws.scenario(),
            "--mode",
            "random-order",
            "--out",
            db.to_str().unwrap(),
            "--stats",
            stats.to_str().unwrap(),
        ]);
        ws.ok(&[
            "--seed",
            "11",
            "solve",
            "--scenario",
            ws.scenario(),
            "--set",
            "w1-001",
            "--experience",
            db.to_str().unwrap(),
            "--policy",
            policy.to_str().unwrap(),
            "--epsilon",
            "2",
        ]);
        let bench = ws.ok(&[
            "--seed",
            "11",
            "bench",
            "--scenario",
            ws.scenario(),
            "--methods",
            "rtdp:1,ertdp-random:2,tbl",
        ]);
        (read(&db), read(&stats), read(&policy), bench)
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn solve_reports_stats_and_writes_a_policy() {
    let ws = Workspace::new();
    let policy = ws.path("p.json");
    let out = ws.ok(&[
        "solve",
        "--scenario",
        ws.scenario(),
        "--set",
        "1",
        "--policy",
        policy.to_str().unwrap(),
    ]);
    let stats: serde_json::Value = serde_json::from_str(&out).unwrap();
    for key in [
        "scenario_id",
        "solver",
        "epsilon",
        "backups",
        "rollouts",
        "wall_time_s",
        "converged",
        "v_start",
    ] {
        assert!(stats.get(key).is_some(), "missing {key}");
    }
    assert_eq!(stats["scenario_id"], "w1-001");
    assert_eq!(stats["solver"], "rtdp-bel");
    assert_eq!(stats["converged"], true);
    assert!((stats["v_start"].as_f64().unwrap() - 17.0 / 3.0).abs() < 1e-9);
    let policy = policy_from_json(&read(&policy)).unwrap();
    assert_eq!(policy.scenario_id, "w1-001");
    assert_eq!(policy.start.hypotheses.len(), 3);
}

#[test]
fn solve_with_experience_uses_the_experience_solver() {
    let ws = Workspace::new();
    let db = ws.path("db.json");
    ws.ok(&[
        "preprocess",
        "--scenario",
        ws.scenario(),
        "--out",
        db.to_str().unwrap(),
    ]);
    let out = ws.ok(&[
        "solve",
        "--scenario",
        ws.scenario(),
        "--set",
        "w1-001",
        "--epsilon",
        "2",
        "--experience",
        db.to_str().unwrap(),
    ]);
    let stats: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(stats["solver"], "e-rtdp-bel");
    assert!(stats["v_start"].as_f64().unwrap() <= 2.0 * 17.0 / 3.0 + 1e-9);
}

#[test]
fn solve_rejects_a_budget_too_small_to_converge() {
    let ws = Workspace::new();
    let err = ws.err(&[
        "solve",
        "--scenario",
        ws.scenario(),
        "--set",
        "1",
        "--backup-budget",
        "3",
    ]);
    assert!(err.contains("budget"), "{err}");
}

#[test]
fn execute_traces_and_rejects_unrealizable_groundtruths() {
    let ws = Workspace::new();
    let policy = ws.path("p.json");
    ws.ok(&[
        "solve",
        "--scenario",
        ws.scenario(),
        "--set",
        "1",
        "--policy",
        policy.to_str().unwrap(),
    ]);
    let p = policy.to_str().unwrap();
    let csv = ws.ok(&[
        "execute",
        "--scenario",
        ws.scenario(),
        "--policy",
        p,
        "--groundtruth",
        "6,0,0",
    ]);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("step,robot,action,next,contact,cost,|H|")
    );
    assert!(lines.count() >= 1);
    let summary = ws.ok(&[
        "--format",
        "json",
        "execute",
        "--scenario",
        ws.scenario(),
        "--policy",
        p,
        "--groundtruth",
        "6,0,0",
    ]);
    let summary: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(summary["localized"], true);
    assert_eq!(summary["final_belief"], "r=5,0|H=6,0,0");
    let err = ws.err(&[
        "execute",
        "--scenario",
        ws.scenario(),
        "--policy",
        p,
        "--groundtruth",
        "9,0,0",
    ]);
    assert!(err.contains("unrealizable"), "{err}");
}

#[test]
fn tbl_runs_once_or_evaluates_the_set() {
    let ws = Workspace::new();
    let trace = ws.ok(&[
        "tbl",
        "--scenario",
        ws.scenario(),
        "--set",
        "1",
        "--groundtruth",
        "7,0,0",
    ]);
    assert!(trace.starts_with("step,robot,action,next,contact,cost,|H|"));
    let stats = ws.path("tbl.csv");
    let eval = ws.ok(&[
        "tbl",
        "--scenario",
        ws.scenario(),
        "--set",
        "1",
        "--stats",
        stats.to_str().unwrap(),
    ]);
    assert!(
        eval.lines()
            .nth(1)
            .unwrap()
            .starts_with("w1-001,3,tbl,5.666666"),
        "{eval}"
    );
    assert!(read(&stats).lines().count() > 3);
}

#[test]
fn oracle_prints_exact_costs() {
    let ws = Workspace::new();
    let out = ws.ok(&["oracle", "--scenario", ws.scenario()]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(
        lines[0],
        "scenario_id,|H|,oracle_cost_exact,oracle_cost,beliefs"
    );
    assert!(lines[1].starts_with("w1-000,2,5,5.0"));
    assert!(lines[2].starts_with("w1-001,3,17/3,5.666666"));
    let err = ws.err(&["oracle", "--scenario", ws.scenario(), "--cap", "2"]);
    assert!(err.contains("cap"), "{err}");
}

#[test]
fn bench_writes_csv_and_json() {
    let ws = Workspace::new();
    let csv = ws.ok(&[
        "bench",
        "--scenario",
        ws.scenario(),
        "--methods",
        "rtdp:1,ertdp:2,tbl",
    ]);
    assert!(csv.starts_with(
        "scenario_id,|H|,method,epsilon,success,backups,wall_time_s,expected_cost,oracle_cost,relative_speedup,relative_cost"
    ));
    assert_eq!(csv.lines().count(), 7);
    let out = ws.path("bench.json");
    ws.ok(&[
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
        "bench",
        "--scenario",
        ws.scenario(),
        "--methods",
        "rtdp:1,tbl",
    ]);
    let rows: serde_json::Value = serde_json::from_str(&read(&out)).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 4);
    assert_eq!(rows[0]["|H|"], 2);
    let err = ws.err(&["bench", "--scenario", ws.scenario(), "--methods", "astar"]);
    assert!(err.contains("astar"), "{err}");
}

#[test]
fn gen_scenarios_builds_nested_sets() {
    let ws = Workspace::new();
    let out = ws.path("nested.json");
    ws.ok(&[
        "--out",
        out.to_str().unwrap(),
        "gen-scenarios",
        "--base",
        ws.scenario(),
        "--nominal",
        "6,0,0",
        "--extents",
        "1,2,3",
        "--name",
        "w1n",
    ]);
    let scenario = Scenario::from_path(&out).unwrap();
    let sizes: Vec<usize> = scenario.sets.iter().map(|(_, h)| h.len()).collect();
    assert_eq!(sizes, [3, 5, 7]);
    assert_eq!(scenario.sets[0].0, "w1n-000");
    let err = ws.err(&[
        "gen-scenarios",
        "--base",
        ws.scenario(),
        "--nominal",
        "6,0,0",
        "--extents",
        "7",
    ]);
    assert!(
        err.contains("out of bounds") || err.contains("bounds"),
        "{err}"
    );
}

#[test]
fn malformed_scenarios_report_the_field() {
    let ws = Workspace::new();
    let bad = ws.path("bad.json");
    fs::write(&bad, W1_JSON.replace("\"width\": 10", "\"width\": -1")).unwrap();
    let err = ws.err(&["oracle", "--scenario", bad.to_str().unwrap()]);
    assert!(err.starts_with("error:"), "{err}");
    let missing = ws.err(&["oracle", "--scenario", "nope.json"]);
    assert!(missing.contains("nope.json"), "{missing}");
}
