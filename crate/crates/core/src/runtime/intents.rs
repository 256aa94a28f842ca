use serde::{Deserialize, Serialize};

use crate::memory::Predicate;
use crate::tasks::{Category, ScheduleMode, Step};
use crate::tools::{ArgValue, SPEAKER};

fn yes() -> bool {
    true
}

/// Everything needed to build a task record except its identity and time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskTemplate {
    pub label: String,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub category: Category,
    #[serde(default)]
    pub situation: Option<String>,
    #[serde(default)]
    pub steps: Vec<Step>,
    #[serde(default)]
    pub postcondition: Option<Predicate>,
    #[serde(default = "yes")]
    pub interruptible: bool,
    /// Pins the priority; the evaluator is skipped.
    #[serde(default)]
    pub priority: Option<u8>,
    #[serde(default)]
    pub deadline: Option<u64>,
}

impl TaskTemplate {
    pub fn new(label: impl Into<String>) -> Self {
        TaskTemplate {
            label: label.into(),
            description: None,
            category: Category::Other,
            situation: None,
            steps: Vec::new(),
            postcondition: None,
            interruptible: true,
            priority: None,
            deadline: None,
        }
    }

    pub fn say(label: &str, text: &str) -> Self {
        let mut t = TaskTemplate::new(label);
        t.steps.push(Step {
            id: "say".into(),
            tool: SPEAKER.into(),
            op: "say".into(),
            args: [("text".to_string(), ArgValue::Text(text.into()))].into(),
            when: None,
            until: None,
        });
        t
    }
}

/// Maps instruction text to a task. When `schedule` is set, the instruction
/// itself only acknowledges, and the template is registered with the timer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intent {
    /// Case-insensitive substrings; any one matching selects the intent.
    #[serde(rename = "match")]
    pub patterns: Vec<String>,
    pub template: TaskTemplate,
    #[serde(default)]
    pub schedule: Option<ScheduleMode>,
    /// Acknowledgement spoken for scheduled intents.
    #[serde(default)]
    pub reply: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interpretation {
    /// The task to run now.
    pub task: TaskTemplate,
    /// A timer template to register alongside, if any.
    pub scheduled: Option<(TaskTemplate, ScheduleMode)>,
    pub matched: bool,
}

pub trait InstructionInterpreter {
    fn interpret(&mut self, text: &str) -> Interpretation;
}

pub const FALLBACK_REPLY: &str = "Sorry, I cannot help with that yet.";

/// First matching intent wins; unmatched text gets an apology.
#[derive(Debug, Clone, Default)]
pub struct ScriptedInterpreter {
    pub intents: Vec<Intent>,
}

impl ScriptedInterpreter {
    pub fn new(intents: Vec<Intent>) -> Self {
        ScriptedInterpreter { intents }
    }
}

impl InstructionInterpreter for ScriptedInterpreter {
    fn interpret(&mut self, text: &str) -> Interpretation {
        let lower = text.to_lowercase();
        let Some(intent) = self
            .intents
            .iter()
            .find(|i| i.patterns.iter().any(|p| lower.contains(&p.to_lowercase())))
        else {
            return Interpretation {
                task: TaskTemplate::say("unrecognized", FALLBACK_REPLY),
                scheduled: None,
                matched: false,
            };
        };
        match intent.schedule {
            None => Interpretation {
                task: intent.template.clone(),
                scheduled: None,
                matched: true,
            },
            Some(mode) => {
                let reply = intent
                    .reply
                    .clone()
                    .unwrap_or_else(|| format!("Okay, {} is scheduled.", intent.template.label));
                Interpretation {
                    task: TaskTemplate::say(&format!("{}_ack", intent.template.label), &reply),
                    scheduled: Some((intent.template.clone(), mode)),
                    matched: true,
                }
            }
        }
    }
}
