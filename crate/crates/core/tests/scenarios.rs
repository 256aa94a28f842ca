use std::path::PathBuf;

use hearth_core::harness::{compare_golden, run_scenario, run_to_end, ScenarioDoc, Verdict};
use hearth_core::runtime::{EventKind, Trace};
use hearth_core::tasks::TaskKind;

fn load(name: &str) -> ScenarioDoc {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.json"));
    ScenarioDoc::from_path(&path).unwrap()
}

fn all_names() -> Vec<String> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .map(|p| p.file_stem().unwrap().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn every_shipped_scenario_validates_and_matches() {
    let names = all_names();
    assert_eq!(names.len(), 12);
    for name in names {
        let doc = load(&name);
        assert_eq!(doc.name, name);
        assert!(doc.validate().is_empty(), "{name}: {:?}", doc.validate());
        let out = run_scenario(&doc).unwrap();
        if let Some(v) = &out.metrics.milestones {
            assert!(v.is_match(), "{name}: {v}");
        }
        assert_eq!(out.metrics.failed, 0, "{name}");
        assert_eq!(out.metrics.commands_rejected, 0, "{name}");
    }
}

#[test]
fn margin_of_exactly_twenty_preempts() {
    let (trace, rt) = run_to_end(&load("competing_5_spill_during_photo")).unwrap();
    let e = trace
        .of_kind(EventKind::TaskInterrupted)
        .next()
        .expect("photo was interrupted");
    let by = e.payload["by"].as_str().unwrap();
    let winner = rt.tasks().all().find(|t| t.id.to_string() == by).unwrap();
    assert_eq!(winner.priority, 90);
    assert_eq!(e.payload["priority"], 70);
}

#[test]
fn margin_of_nineteen_waits_instead() {
    let mut doc = load("competing_2_lights_interrupt");
    let lights = doc
        .intents
        .iter_mut()
        .find(|i| i.template.label == "lights_on")
        .unwrap();
    lights.template.priority = Some(69);
    let (trace, _) = run_to_end(&doc).unwrap();
    assert_eq!(trace.count(EventKind::TaskInterrupted), 0);
    let done: Vec<&str> = trace
        .of_kind(EventKind::TaskCompleted)
        .map(|e| e.payload["label"].as_str().unwrap())
        .collect();
    let fetch = done.iter().position(|l| *l == "fetch_medicine").unwrap();
    let lights = done.iter().position(|l| *l == "lights_on").unwrap();
    assert!(lights > fetch, "lights ran before the fetch finished: {done:?}");
}

#[test]
fn reordered_golden_diverges() {
    let mut doc = load("independent_1_waste_paper");
    doc.golden.reverse();
    let (trace, _) = run_to_end(&doc).unwrap();
    match compare_golden(&trace, &doc.milestones().unwrap()) {
        Verdict::Diverged { index, .. } => assert_eq!(index, 1),
        v => panic!("expected divergence, got {v}"),
    }
}

#[test]
fn milestone_naming_unknown_room_is_invalid() {
    let mut doc = load("independent_3_office_check");
    doc.golden.push("command_issued(args.room=attic)".into());
    let issues = doc.validate();
    assert!(issues.iter().any(|i| i.contains("attic")), "{issues:?}");
}

#[test]
fn trace_round_trips_through_jsonl() {
    let (trace, _) = run_to_end(&load("competing_3_pickup_photo_weather")).unwrap();
    let text = trace.to_jsonl();
    let back = Trace::parse_jsonl(&text).unwrap();
    assert_eq!(back.to_jsonl(), text);
    assert!(back.is_totally_ordered());
}

#[test]
fn other_seeds_keep_the_tidy_scene_silent() {
    for seed in [1, 7, 1234] {
        let (trace, rt) = run_to_end(&load("tidy_lab").with_seed(seed)).unwrap();
        assert_eq!(trace.count(EventKind::ProposalEmitted), 0);
        assert_eq!(rt.tasks().all().filter(|t| t.kind == TaskKind::Active).count(), 0);
    }
}

#[test]
fn daily_schedule_fires_once_within_the_horizon() {
    let (trace, rt) = run_to_end(&load("independent_5_medicine_daily")).unwrap();
    assert_eq!(trace.count(EventKind::TimerFired), 1);
    assert_eq!(rt.tasks().scheduled().count(), 1, "recurring template stays registered");
}
