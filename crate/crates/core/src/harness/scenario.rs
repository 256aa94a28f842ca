use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::milestone::{compare_golden, Milestone, Verdict};
use crate::ids::Tick;
use crate::perception::{PerceiverScript, ScriptedPerceiver, TRIGGER_ATTRIBUTES};
use crate::planner::{ScoreRule, ScriptedEvaluator};
use crate::runtime::{
    EventKind, Intent, Runtime, RuntimeBuilder, RuntimeConfig, RuntimeError, ScriptedInterpreter, TaskTemplate, Trace,
};
use crate::tasks::{ScheduleMode, ScheduleSpec, TaskKind, TaskStatus};
use crate::tools::{ArgValue, Mutation, ToolRegistry, ToolSpec, WorldDef, WorldState};

fn default_horizon() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCommand {
    pub tool: String,
    pub op: String,
    #[serde(default)]
    pub args: BTreeMap<String, ArgValue>,
}

/// One timed injection. Exactly one payload field is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimelineEntry {
    pub at: Tick,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<Mutation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<RawCommand>,
}

impl TimelineEntry {
    fn payload_count(&self) -> usize {
        self.instruction.is_some() as usize + self.disturbance.is_some() as usize + self.command.is_some() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub template: TaskTemplate,
    pub mode: ScheduleMode,
}

/// A complete, self-describing run: world, tools, adapter scripts, timed
/// injections and, optionally, the milestones the trace must contain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    /// End the run early once nothing is left to do.
    #[serde(default)]
    pub stop_at_quiescence: bool,
    /// Declares the scene tidy: nothing in it may warrant a proposal.
    #[serde(default)]
    pub tidy: bool,
    pub world: WorldDef,
    #[serde(default)]
    pub tools: Vec<ToolSpec>,
    #[serde(default)]
    pub intents: Vec<Intent>,
    #[serde(default)]
    pub schedules: Vec<ScheduleEntry>,
    #[serde(default)]
    pub perceiver: PerceiverScript,
    #[serde(default)]
    pub evaluator: Vec<ScoreRule>,
    #[serde(default)]
    pub config: RuntimeConfig,
    #[serde(default)]
    pub timeline: Vec<TimelineEntry>,
    #[serde(default)]
    pub golden: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

impl ScenarioError {
    pub fn is_validation(&self) -> bool {
        matches!(self, ScenarioError::Parse(_) | ScenarioError::Invalid(_))
    }
}

fn has_trigger(attrs: &BTreeMap<String, String>) -> Option<&str> {
    TRIGGER_ATTRIBUTES.iter().copied().find(|k| attrs.contains_key(*k))
}

/// Payload keys whose milestone values must name a declared entity.
const ENTITY_KEYS: [&str; 7] = [
    "room",
    "args.room",
    "args.object",
    "args.target",
    "args.device",
    "object",
    "device",
];

impl ScenarioDoc {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ScenarioError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ScenarioError::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn milestones(&self) -> Result<Vec<Milestone>, ScenarioError> {
        self.golden
            .iter()
            .map(|s| s.parse::<Milestone>())
            .collect::<Result<_, _>>()
            .map_err(|e| ScenarioError::Invalid(vec![format!("golden: {e}")]))
    }

    fn registry(&self) -> Result<ToolRegistry, Vec<String>> {
        let mut reg = ToolRegistry::with_builtins();
        let mut issues = Vec::new();
        for t in &self.tools {
            if let Err(e) = reg.register(t.clone()) {
                issues.push(format!("tools: {e}"));
            }
        }
        if let Err(e) = reg.check_mandatory() {
            issues.push(format!("tools: {e}"));
        }
        if issues.is_empty() {
            Ok(reg)
        } else {
            Err(issues)
        }
    }

    /// Every problem with the document, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.horizon == 0 {
            issues.push("horizon must be at least 1".into());
        }
        issues.extend(self.config.validate());
        issues.extend(self.perceiver.validate());
        if let Err(e) = WorldState::from_def(&self.world) {
            issues.push(format!("world: {e}"));
        }
        let registry = self.registry().map_err(|e| issues.extend(e)).ok();

        for (i, s) in self.schedules.iter().enumerate() {
            if let Err(e) = ScheduleSpec::new(s.mode, Tick::ZERO).validate() {
                issues.push(format!("schedules[{i}]: {e}"));
            }
        }
        for (i, intent) in self.intents.iter().enumerate() {
            if intent.patterns.iter().all(|p| p.trim().is_empty()) {
                issues.push(format!("intents[{i}]: needs at least one non-empty match pattern"));
            }
            if let Some(mode) = intent.schedule {
                if let Err(e) = ScheduleSpec::new(mode, Tick::ZERO).validate() {
                    issues.push(format!("intents[{i}].schedule: {e}"));
                }
            }
        }

        let rooms: BTreeSet<&str> = self.world.rooms.iter().map(String::as_str).collect();
        let devices: BTreeSet<&str> = self.world.devices.iter().map(|d| d.id.as_str()).collect();
        let mut objects: BTreeSet<String> = self.world.objects.iter().map(|o| o.id.clone()).collect();
        let mut last = Tick::ZERO;
        for (i, e) in self.timeline.iter().enumerate() {
            let at = format!("timeline[{i}] (at {})", e.at);
            if e.at < last {
                issues.push(format!("{at}: timeline is not sorted by tick"));
            }
            last = last.max(e.at);
            if e.at.0 > self.horizon {
                issues.push(format!("{at}: beyond horizon {}", self.horizon));
            }
            if e.payload_count() != 1 {
                issues.push(format!(
                    "{at}: exactly one of instruction, disturbance, command must be set"
                ));
            }
            if e.instruction.as_deref().is_some_and(|t| t.trim().is_empty()) {
                issues.push(format!("{at}: instruction is empty"));
            }
            if let (Some(c), Some(reg)) = (&e.command, &registry) {
                if reg.get(&c.tool).is_none() {
                    issues.push(format!("{at}: command uses unregistered tool `{}`", c.tool));
                }
            }
            if let Some(m) = &e.disturbance {
                let need_obj = |o: &str, issues: &mut Vec<String>| {
                    if !objects.contains(o) {
                        issues.push(format!("{at}: disturbance references unknown object `{o}`"));
                    }
                };
                match m {
                    Mutation::MoveObject { object, room, .. } => {
                        need_obj(object, &mut issues);
                        if !rooms.contains(room.as_str()) {
                            issues.push(format!("{at}: disturbance references unknown room `{room}`"));
                        }
                    }
                    Mutation::AddObject(def) => {
                        if !rooms.contains(def.room.as_str()) {
                            issues.push(format!("{at}: disturbance references unknown room `{}`", def.room));
                        }
                        if !objects.insert(def.id.clone()) {
                            issues.push(format!("{at}: object `{}` already exists", def.id));
                        }
                        if self.tidy {
                            if let Some(k) = has_trigger(&def.attributes) {
                                issues.push(format!("{at}: tidy scenario adds `{}` with attribute `{k}`", def.id));
                            }
                        }
                    }
                    Mutation::RemoveObject { object } => {
                        need_obj(object, &mut issues);
                        objects.remove(object);
                    }
                    Mutation::SetDevice { device, .. } => {
                        if !devices.contains(device.as_str()) {
                            issues.push(format!("{at}: disturbance references unknown device `{device}`"));
                        }
                    }
                    Mutation::KnockOver { object } => {
                        need_obj(object, &mut issues);
                        if self.tidy {
                            issues.push(format!("{at}: tidy scenario knocks over `{object}`"));
                        }
                    }
                    Mutation::SetAttribute { object, key, .. } => {
                        need_obj(object, &mut issues);
                        if self.tidy && TRIGGER_ATTRIBUTES.contains(&key.as_str()) {
                            issues.push(format!("{at}: tidy scenario sets attribute `{key}` on `{object}`"));
                        }
                    }
                }
            }
        }

        if self.tidy {
            for o in &self.world.objects {
                if let Some(k) = has_trigger(&o.attributes) {
                    issues.push(format!("world: tidy scenario has `{}` with attribute `{k}`", o.id));
                }
                for r in &self.perceiver.rules {
                    let hit = o
                        .attributes
                        .get(&r.when.key)
                        .is_some_and(|v| r.when.value.as_ref().is_none_or(|want| want == v));
                    if hit {
                        issues.push(format!(
                            "world: tidy scenario object `{}` triggers rule `{}`",
                            o.id, r.name
                        ));
                    }
                }
            }
            if !self.perceiver.proposals.is_empty() {
                issues.push("perceiver: tidy scenario scripts proposals".into());
            }
        }

        let tools: BTreeSet<&str> = registry
            .as_ref()
            .map(|r| r.names().map(String::as_str).collect())
            .unwrap_or_default();
        for (i, g) in self.golden.iter().enumerate() {
            match g.parse::<Milestone>() {
                Err(e) => issues.push(format!("golden[{i}]: {e}")),
                Ok(m) => {
                    for mt in &m.matchers {
                        let v = mt.value.as_str();
                        let ok = if mt.op != super::milestone::MatchOp::Equals {
                            true
                        } else if mt.path == "tool" {
                            registry.is_none() || tools.contains(v)
                        } else if ENTITY_KEYS.contains(&mt.path.as_str()) {
                            rooms.contains(v) || devices.contains(v) || objects.contains(v)
                        } else {
                            true
                        };
                        if !ok {
                            issues.push(format!("golden[{i}]: `{}` names undeclared entity `{v}`", mt.path));
                        }
                    }
                }
            }
        }
        issues
    }

    /// A runtime loaded with everything the document declares: schedules
    /// registered at tick 0 and every timeline entry queued.
    pub fn build_runtime(&self) -> Result<Runtime, ScenarioError> {
        let issues = self.validate();
        if !issues.is_empty() {
            return Err(ScenarioError::Invalid(issues));
        }
        let mut config = self.config.clone();
        config.seed = self.seed;
        let evaluator = ScriptedEvaluator {
            rules: self.evaluator.clone(),
            rubric: config.planner.rubric.clone(),
        };
        let mut rt = RuntimeBuilder::new(self.world.clone())
            .config(config)
            .registry(self.registry().map_err(ScenarioError::Invalid)?)
            .perceiver(Box::new(ScriptedPerceiver::new(self.seed, &self.perceiver)))
            .evaluator(Box::new(evaluator))
            .interpreter(Box::new(ScriptedInterpreter::new(self.intents.clone())))
            .build()?;
        for s in &self.schedules {
            rt.register_schedule(s.template.clone(), s.mode)?;
        }
        for e in &self.timeline {
            if let Some(text) = &e.instruction {
                rt.submit_instruction(text, e.at)?;
            } else if let Some(m) = &e.disturbance {
                rt.inject_disturbance(m.clone(), e.at)?;
            } else if let Some(c) = &e.command {
                rt.inject_command(&c.tool, &c.op, c.args.clone(), e.at)?;
            }
        }
        Ok(rt)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub seed: u64,
    pub ticks: u64,
    pub events: usize,
    pub tasks_created: usize,
    pub completed: usize,
    pub failed: usize,
    pub cancelled: usize,
    pub interruptions: usize,
    pub resumptions: usize,
    pub proposals: usize,
    pub active_tasks: usize,
    pub commands_issued: usize,
    pub commands_rejected: usize,
    pub history_len: usize,
    pub live_at_end: usize,
    pub milestones: Option<Verdict>,
}

impl MetricsReport {
    pub fn collect(name: &str, rt: &Runtime, trace: &Trace, milestones: Option<Verdict>) -> Self {
        let failed_with = |outcome: &str| {
            trace
                .of_kind(EventKind::TaskFailed)
                .filter(|e| e.payload.get("outcome").and_then(|v| v.as_str()) == Some(outcome))
                .count()
        };
        MetricsReport {
            scenario: name.to_string(),
            seed: rt.config().seed,
            ticks: rt.now().0,
            events: trace.len(),
            tasks_created: rt.tasks().created(),
            completed: trace.count(EventKind::TaskCompleted),
            failed: failed_with(TaskStatus::Failed.as_str()),
            cancelled: failed_with(TaskStatus::Cancelled.as_str()),
            interruptions: trace.count(EventKind::TaskInterrupted),
            resumptions: trace.count(EventKind::TaskResumed),
            proposals: trace.count(EventKind::ProposalEmitted),
            active_tasks: rt.tasks().all().filter(|t| t.kind == TaskKind::Active).count(),
            commands_issued: trace.count(EventKind::CommandIssued),
            commands_rejected: trace.count(EventKind::CommandRejected),
            history_len: rt.history().len(),
            live_at_end: rt.tasks().live_work(),
            milestones,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: Trace,
    pub metrics: MetricsReport,
}

/// Runs to the horizon, or to quiescence when the document asks for it,
/// then checks the golden milestones if any are declared.
pub fn run_scenario(doc: &ScenarioDoc) -> Result<RunOutcome, ScenarioError> {
    let (trace, rt) = run_to_end(doc)?;
    let verdict = if doc.golden.is_empty() {
        None
    } else {
        Some(compare_golden(&trace, &doc.milestones()?))
    };
    let metrics = MetricsReport::collect(&doc.name, &rt, &trace, verdict);
    Ok(RunOutcome { trace, metrics })
}

/// Like [`run_scenario`] but hands back the halted runtime for inspection.
pub fn run_to_end(doc: &ScenarioDoc) -> Result<(Trace, Runtime), ScenarioError> {
    let mut rt = doc.build_runtime()?;
    while rt.now().0 < doc.horizon {
        rt.advance(1)?;
        if doc.stop_at_quiescence && rt.is_quiescent() {
            break;
        }
    }
    let trace = rt.halt();
    Ok((trace, rt))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> serde_json::Value {
        serde_json::json!({
            "name": "t",
            "seed": 42,
            "horizon": 20,
            "world": {"rooms": ["lab", "office"], "robot_room": "lab",
                      "objects": [{"id": "table", "class": "table", "room": "lab"}]}
        })
    }

    #[test]
    fn unknown_fields_are_errors() {
        let mut v = minimal();
        v["colour"] = "blue".into();
        assert!(matches!(
            ScenarioDoc::parse(&v.to_string()),
            Err(ScenarioError::Parse(_))
        ));
    }

    #[test]
    fn validation_lists_every_issue() {
        let mut v = minimal();
        v["tidy"] = true.into();
        v["timeline"] = serde_json::json!([
            {"at": 10, "disturbance": {"knock_over": {"object": "ghost"}}},
            {"at": 5, "instruction": "hi"},
            {"at": 30, "instruction": "late"},
        ]);
        v["golden"] = serde_json::json!(["task_done"]);
        let issues = ScenarioDoc::parse(&v.to_string()).unwrap().validate();
        let joined = issues.join("\n");
        for needle in [
            "unknown object `ghost`",
            "knocks over",
            "not sorted",
            "beyond horizon",
            "golden[0]",
        ] {
            assert!(joined.contains(needle), "missing `{needle}` in:\n{joined}");
        }
    }

    #[test]
    fn empty_tidy_run_only_perceives() {
        let doc = ScenarioDoc::parse(&minimal().to_string()).unwrap();
        let out = run_scenario(&doc).unwrap();
        assert!(out
            .trace
            .events()
            .iter()
            .all(|e| matches!(e.kind, EventKind::FrameReady | EventKind::CaptionRecorded)));
        assert_eq!(out.metrics.ticks, 20);
    }
}
