use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hearth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hearth")).args(args).output().unwrap()
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/scenarios")
        .join(format!("{name}.json"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hearth-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_reports_matched_golden() {
    let trace = scratch("humid.jsonl");
    let out = hearth(&[
        "run",
        s(&scenario("independent_2_humidity")),
        "--golden",
        "--trace",
        s(&trace),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(metrics["milestones"]["verdict"], "matched");
    assert_eq!(metrics["completed"], 1);
    let lines = std::fs::read_to_string(&trace).unwrap();
    assert!(lines
        .lines()
        .all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
}

#[test]
fn divergence_exits_one() {
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(scenario("independent_2_humidity")).unwrap()).unwrap();
    doc["golden"] = serde_json::json!(["task_failed(label=dehumidify)"]);
    let path = scratch("diverge.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    let out = hearth(&["run", s(&path), "--golden"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
}

#[test]
fn invalid_scenario_exits_two() {
    let path = scratch("invalid.json");
    std::fs::write(
        &path,
        r#"{"name": "bad", "world": {"rooms": ["lab"], "robot_room": "garage"}}"#,
    )
    .unwrap();
    let out = hearth(&["run", s(&path)]);
    assert_eq!(out.status.code(), Some(2));
    let out = hearth(&["run", s(&scratch("missing.json"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn replay_of_a_transcript_is_stable() {
    let transcript = scratch("session.txt");
    std::fs::write(&transcript, "say \"It's too humid in the room\"\nstep 5\n").unwrap();
    let sc = scenario("independent_2_humidity");
    let a = hearth(&["replay", s(&sc), s(&transcript)]);
    let b = hearth(&["replay", s(&sc), s(&transcript)]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(String::from_utf8_lossy(&a.stdout).contains("\"kind\":\"command_issued\""));
}

#[test]
fn score_with_exact_judge() {
    let pred = scratch("pred.json");
    let gold = scratch("gold.json");
    std::fs::write(
        &pred,
        r#"[{"id": "a", "proposals": [{"category": "clean_debris", "description": "Throw the paper in the trash"}]},
            {"id": "b", "proposals": []}]"#,
    )
    .unwrap();
    std::fs::write(
        &gold,
        r#"[{"id": "a", "tasks": [{"category": "clean_debris", "description": "throw the paper in the trash"}]},
            {"id": "b", "negative": true}]"#,
    )
    .unwrap();
    let out = hearth(&["score", "--pred", s(&pred), "--gold", s(&gold)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["overall"], 1.0);
    let out = hearth(&["score", "--pred", s(&pred), "--gold", s(&gold), "--judge", "remote"]);
    assert_eq!(out.status.code(), Some(2));
}
