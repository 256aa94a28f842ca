use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ids::{CommandId, TaskId, Tick};
use crate::memory::Predicate;
use crate::tools::ArgValue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Passive,
    Active,
    Scheduled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    CleanDebris,
    OrganizeItem,
    SafetyCheck,
    #[default]
    Other,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::CleanDebris => "clean_debris",
            Category::OrganizeItem => "organize_item",
            Category::SafetyCheck => "safety_check",
            Category::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Ready,
    Executing,
    Interrupted,
    Completed,
    Failed,
    Cancelled,
}

impl TaskStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, TaskStatus::Completed | TaskStatus::Failed | TaskStatus::Cancelled)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskStatus::Pending => "pending",
            TaskStatus::Ready => "ready",
            TaskStatus::Executing => "executing",
            TaskStatus::Interrupted => "interrupted",
            TaskStatus::Completed => "completed",
            TaskStatus::Failed => "failed",
            TaskStatus::Cancelled => "cancelled",
        }
    }
}

impl fmt::Display for TaskStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Failed,
    Cancelled,
}

impl From<Outcome> for TaskStatus {
    fn from(o: Outcome) -> Self {
        match o {
            Outcome::Completed => TaskStatus::Completed,
            Outcome::Failed => TaskStatus::Failed,
            Outcome::Cancelled => TaskStatus::Cancelled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleMode {
    /// Fires once at an absolute tick.
    At { tick: Tick },
    /// Fires once, `delay` ticks after registration.
    After { delay: u64 },
    /// Fires at `start`, `start + period`, ... up to and including `end`.
    /// `start` defaults to the registration tick.
    Every {
        period: u64,
        #[serde(default)]
        start: Option<Tick>,
        #[serde(default)]
        end: Option<Tick>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub mode: ScheduleMode,
    pub registered_at: Tick,
    pub last_fired: Option<Tick>,
    pub fired: u64,
}

impl ScheduleSpec {
    pub fn new(mode: ScheduleMode, registered_at: Tick) -> Self {
        ScheduleSpec {
            mode,
            registered_at,
            last_fired: None,
            fired: 0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self.mode {
            ScheduleMode::Every { period: 0, .. } => Err("period must be at least 1".into()),
            ScheduleMode::Every {
                start: Some(s),
                end: Some(e),
                ..
            } if e < s => Err(format!("end {e} precedes start {s}")),
            _ => Ok(()),
        }
    }

    /// The next tick this spec is due, or `None` once exhausted.
    pub fn next_due(&self) -> Option<Tick> {
        match self.mode {
            ScheduleMode::At { tick } => (self.fired == 0).then_some(tick),
            ScheduleMode::After { delay } => (self.fired == 0).then(|| self.registered_at.plus(delay)),
            ScheduleMode::Every { period, start, end } => {
                let first = start.unwrap_or(self.registered_at);
                let next = first.plus(self.fired * period);
                match end {
                    Some(e) if next > e => None,
                    _ => Some(next),
                }
            }
        }
    }
}

/// One executable sub-step of a task: a tool command plus an optional guard
/// (`when`) and an optional override of how completion is observed (`until`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub id: String,
    pub tool: String,
    pub op: String,
    #[serde(default)]
    pub args: BTreeMap<String, ArgValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<Predicate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub until: Option<Predicate>,
}

/// The command currently in flight for an executing task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Outstanding {
    pub step: usize,
    pub command: CommandId,
    pub issued_at: Tick,
    /// First tick at which the step's effect should be visible.
    pub settle_at: Tick,
    pub attempts: u32,
    pub body: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Execution {
    pub outstanding: Option<Outstanding>,
    pub started_at: Option<Tick>,
    /// Executing ticks accumulated before the most recent interruption.
    pub elapsed_before: u64,
    pub first_dispatched_at: Option<Tick>,
}

impl Execution {
    pub fn elapsed(&self, now: Tick) -> u64 {
        self.elapsed_before + self.started_at.map(|s| now.since(s)).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaskRecord {
    pub id: TaskId,
    pub kind: TaskKind,
    /// Short scenario-authored name, used by milestone matchers.
    pub label: String,
    pub description: String,
    pub situation: Option<String>,
    pub category: Category,
    pub priority: u8,
    /// Set by the author; the evaluator is not consulted.
    pub priority_pinned: bool,
    pub evaluated: bool,
    pub deps: BTreeSet<TaskId>,
    pub status: TaskStatus,
    pub created_at: Tick,
    pub schedule: Option<ScheduleSpec>,
    pub template: Option<TaskId>,
    pub interruptible: bool,
    pub resume_context: Vec<String>,
    pub postcondition: Option<Predicate>,
    pub deadline_ticks: Option<u64>,
    pub steps: Vec<Step>,
    pub resources: BTreeSet<String>,
    pub exec: Execution,
    pub ended_at: Option<Tick>,
}

pub const DEFAULT_DEADLINE: u64 = 120;

impl TaskRecord {
    pub fn new(id: TaskId, kind: TaskKind, description: impl Into<String>, created_at: Tick) -> Self {
        let description = description.into();
        TaskRecord {
            id,
            kind,
            label: String::new(),
            description,
            situation: None,
            category: Category::Other,
            priority: 50,
            priority_pinned: false,
            evaluated: false,
            deps: BTreeSet::new(),
            status: TaskStatus::Pending,
            created_at,
            schedule: None,
            template: None,
            interruptible: true,
            resume_context: Vec::new(),
            postcondition: None,
            deadline_ticks: None,
            steps: Vec::new(),
            resources: BTreeSet::new(),
            exec: Execution::default(),
            ended_at: None,
        }
    }

    pub fn with_priority(mut self, p: u8) -> Self {
        self.priority = p;
        self.priority_pinned = true;
        self
    }

    pub fn with_deps(mut self, deps: impl IntoIterator<Item = TaskId>) -> Self {
        self.deps = deps.into_iter().collect();
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_postcondition(mut self, p: Predicate) -> Self {
        self.deadline_ticks.get_or_insert(DEFAULT_DEADLINE);
        self.postcondition = Some(p);
        self
    }

    pub fn is_template(&self) -> bool {
        self.schedule.is_some()
    }

    pub fn needs(&self, tag: &str) -> bool {
        self.resources.contains(tag)
    }

    /// Dispatch order: priority descending, then creation time, then id.
    pub fn dispatch_key(&self) -> (std::cmp::Reverse<u8>, Tick, TaskId) {
        (std::cmp::Reverse(self.priority), self.created_at, self.id)
    }
}
