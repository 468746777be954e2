use std::path::Path;
use std::process::{Command, Output};
use std::sync::atomic::AtomicBool;

use qnar_core::cli::{run, Io};
use qnar_core::snapshot::Snapshot;

fn fixture(name: &str) -> String {
    format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn qnar(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qnar"));
    cmd.args(args).env_clear();
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

/// In-process run, for cases that need a pre-set stop flag.
fn run_in_process(args: &[&str], stop: bool) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = {
        let mut io = Io { stdout: &mut out, stderr: &mut err };
        let argv = std::iter::once("qnar").chain(args.iter().copied());
        run(argv, Vec::new(), &AtomicBool::new(stop), &mut io)
    };
    (code, text(&out), text(&err))
}

#[test]
fn score_prints_courselet_transition() {
    let out = qnar(&["score", &fixture("one_courselet.jsonl")], &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(text(&out.stderr).contains("transition courselet:CL0 -> user:alice: 0.89 (0.888888888889)"));
    assert!(text(&out.stdout).starts_with("period,node_id,s_star,s_normalized\n"));
}

#[test]
fn empty_event_log_is_an_input_error() {
    let out = qnar(&["score", &fixture("empty.jsonl")], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("no events"));
}

#[test]
fn missing_file_and_bad_flags_are_input_errors() {
    assert_eq!(qnar(&["score", "/nonexistent/events.jsonl"], &[]).status.code(), Some(2));
    assert_eq!(qnar(&["score"], &[]).status.code(), Some(2));
    assert_eq!(qnar(&["simulate", "--set", "sim.f=2"], &[]).status.code(), Some(2));
    assert_eq!(qnar(&["simulate", "--set", "nope=1"], &[]).status.code(), Some(2));
}

#[test]
fn resolved_config_is_logged_with_sources() {
    let out = qnar(&["simulate", "--set", "sim.reps=1", "--seed", "4"], &[("QNAR_SIM_N", "3")]);
    let err = text(&out.stderr);
    assert!(err.contains("# resolved config"));
    assert!(err.contains("sim.seed = 4  # flag"), "{err}");
    assert!(err.contains("sim.n = 3  # env"));
    assert!(err.contains("score.alpha = 0.15  # default"));
}

#[test]
fn simulate_is_deterministic_across_thread_counts() {
    let args = |t: &'static str| ["simulate", "--seed", "7", "--set", "sim.reps=2", "--threads", t];
    let one = qnar(&args("1"), &[]);
    let two = qnar(&args("2"), &[]);
    assert_eq!(one.status.code(), Some(0));
    let csv = text(&one.stdout);
    assert_eq!(csv.lines().count(), 3, "{csv}");
    assert!(csv.starts_with("n,rounds,dist,replication,exp_return,std,sharpe,survivors\n"));
    assert_eq!(one.stdout, two.stdout);
    assert_eq!(one.stdout, qnar(&args("1"), &[]).stdout);
}

#[test]
fn precedence_is_file_then_env_then_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[sim]\nn = 4\nrounds = 3\nreps = 1\nseed = 1\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let n_of = |out: &Output| text(&out.stdout).lines().nth(1).unwrap().split(',').next().unwrap().to_string();

    let file_only = qnar(&["simulate", "--config", cfg], &[]);
    assert_eq!(n_of(&file_only), "4");
    let env = qnar(&["simulate", "--config", cfg], &[("QNAR_SIM_N", "6")]);
    assert_eq!(n_of(&env), "6");
    let flag = qnar(&["simulate", "--config", cfg, "--set", "sim.n=8"], &[("QNAR_SIM_N", "6")]);
    assert_eq!(n_of(&flag), "8");
}

#[test]
fn unknown_env_key_is_rejected() {
    let out = qnar(&["simulate"], &[("QNAR_BOGUS", "1")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("QNAR_BOGUS"));
}

#[test]
fn auction_replay_reports_settlement() {
    let out = qnar(&["auction-replay", &fixture("worked_example.jsonl")], &[]);
    assert_eq!(out.status.code(), Some(0));
    let report = text(&out.stdout);
    for line in ["outcome: accepted", "S1: +2/3", "S2: +4/3", "S3: -2", "burned: 0"] {
        assert!(report.contains(line), "missing {line:?} in\n{report}");
    }
}

#[test]
fn tampered_reveal_forfeits_the_stake() {
    let out = qnar(&["auction-replay", &fixture("tampered_reveal.jsonl")], &[]);
    assert_eq!(out.status.code(), Some(0));
    let report = text(&out.stdout);
    assert!(report.contains("S3: forfeit 2"), "{report}");
    assert!(report.contains("does not match its commitment"));
    assert!(report.contains("burned: 2"));
}

#[test]
fn empty_journal_is_a_protocol_error_and_garbage_an_input_error() {
    let out = qnar(&["auction-replay", &fixture("empty.jsonl")], &[]);
    assert_eq!(out.status.code(), Some(4));
    assert!(text(&out.stderr).contains("line 0: empty journal"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"action\": \"teleport\"}\n").unwrap();
    assert_eq!(qnar(&["auction-replay", bad.to_str().unwrap()], &[]).status.code(), Some(2));
}

#[test]
fn validate_reports_each_file() {
    let dir = tempfile::tempdir().unwrap();
    let weights = dir.path().join("neg.weights");
    std::fs::write(&weights, "edge.user.review = -1\n").unwrap();
    let dangling = dir.path().join("dangling.jsonl");
    std::fs::write(&dangling, "{\"kind\":\"order\",\"actor\":\"a\",\"target\":\"CLX\",\"ts\":0}\n").unwrap();

    let ok = qnar(&["validate", &fixture("one_courselet.jsonl"), &fixture("worked_example.jsonl")], &[]);
    assert_eq!(ok.status.code(), Some(0), "{}", text(&ok.stdout));
    let report = text(&ok.stdout);
    assert!(report.contains("ok (event log, events: 4, nodes: 7)"));
    assert!(report.contains("ok (auction journal"));

    let bad = qnar(&["validate", weights.to_str().unwrap(), dangling.to_str().unwrap()], &[]);
    assert_eq!(bad.status.code(), Some(2));
    let report = text(&bad.stdout);
    assert!(report.contains("negative-weight"), "{report}");
    assert!(report.contains("dangling-target"), "{report}");
}

#[test]
fn score_out_dir_round_trips_through_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = qnar(&["score", &fixture("two_epoch.jsonl"), "--out", out_dir.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    for f in ["scores.csv", "ledger.csv", "ledger.jsonl", "snapshot.qnar"] {
        assert!(out_dir.join(f).is_file(), "{f} missing");
    }
    let snap = std::fs::read(out_dir.join("snapshot.qnar")).unwrap();
    let restored = Snapshot::from_bytes(&snap).unwrap();
    assert_eq!(restored.scores.len(), 2);
    assert_eq!(restored.to_bytes(), snap);
    assert_eq!(
        std::fs::read_to_string(out_dir.join("scores.csv")).unwrap(),
        include_str!("fixtures/two_epoch.golden.csv")
    );

    let snap_path = out_dir.join("snapshot.qnar");
    let valid = qnar(&["validate", snap_path.to_str().unwrap()], &[]);
    assert_eq!(valid.status.code(), Some(0));
    assert!(text(&valid.stdout).contains("ok (snapshot, periods: 2, scored periods: 2)"));

    let mut corrupt = snap.clone();
    let mid = corrupt.len() / 2;
    corrupt[mid] ^= 0x40;
    let corrupt_path = out_dir.join("corrupt.qnar");
    std::fs::write(&corrupt_path, corrupt).unwrap();
    let bad = qnar(&["validate", corrupt_path.to_str().unwrap()], &[]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(text(&bad.stdout).contains("checksum-mismatch"));
}

#[test]
fn interrupted_simulation_keeps_partial_output_and_exits_130() {
    let (code, stdout, _) = run_in_process(&["simulate", "--set", "sim.rounds=600", "--set", "sim.reps=3"], true);
    assert_eq!(code, 130);
    assert!(stdout.starts_with("n,rounds,dist"));
    assert!(stdout.ends_with("# truncated: interrupted at n=5 dist=uniform after 0 of 3 replications\n"), "{stdout}");
}

#[test]
fn in_process_and_binary_agree() {
    let (code, stdout, _) = run_in_process(&["score", &fixture("two_epoch.jsonl")], false);
    assert_eq!(code, 0);
    let out = qnar(&["score", &fixture("two_epoch.jsonl")], &[]);
    assert_eq!(stdout.as_bytes(), &out.stdout[..]);
}

#[test]
fn simulate_writes_output_file_atomically() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.csv");
    let out = qnar(&["simulate", "--set", "sim.reps=2", "--set", "sim.paths=true", "--out", path.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let report = std::fs::read_to_string(&path).unwrap();
    assert_eq!(report.lines().count(), 3);
    let leftovers: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert!(leftovers.iter().all(|n| !n.to_string_lossy().starts_with(".tmp")), "{leftovers:?}");
    assert!(Path::new(&dir.path().join("report.n5.uniform.paths.csv")).is_file(), "{leftovers:?}");
}
