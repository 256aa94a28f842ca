use std::rc::Rc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::PriorityRubric;
use crate::ids::TaskId;
use crate::memory::ContextBundle;
use crate::tasks::{MemorySnapshot, TaskRecord};
use crate::transport::Transport;

pub struct EvalRequest<'a> {
    pub task: &'a TaskRecord,
    pub context: &'a ContextBundle,
    pub snapshot: &'a MemorySnapshot,
}

impl EvalRequest<'_> {
    /// Wire form shared by every evaluator that leaves the process.
    pub fn to_json(&self) -> Value {
        let t = self.task;
        json!({
            "task": {
                "id": t.id.0,
                "kind": t.kind,
                "label": t.label,
                "description": t.description,
                "category": t.category,
                "situation": t.situation,
                "created_at": t.created_at.0,
                "deps": t.deps.iter().map(|d| d.0).collect::<Vec<_>>(),
            },
            "context": self.context.to_json(),
            "live_tasks": self.snapshot
                .pending.iter()
                .chain(self.snapshot.interrupted.iter())
                .chain(self.snapshot.executing.iter())
                .map(|t| json!({"id": t.id.0, "description": t.description, "priority": t.priority}))
                .collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DependencyEdge {
    pub task: TaskId,
    pub depends_on: TaskId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalResponse {
    pub score: f64,
    #[serde(default)]
    pub dependency_edges: Vec<DependencyEdge>,
    #[serde(default)]
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("evaluator unavailable: {0}")]
    Unavailable(String),
    #[error("malformed evaluator output: {0}")]
    Malformed(String),
}

pub trait Evaluator {
    fn evaluate(&mut self, req: &EvalRequest<'_>) -> Result<EvalResponse, EvalError>;
}

/// What the planner stores for a task after evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub task: TaskId,
    pub score: u8,
    pub dependency_edges: Vec<DependencyEdge>,
    pub rationale: String,
    pub fallback: bool,
}

/// Clamps adapter scores into range; anything unusable falls back to the
/// rubric.
pub fn evaluate_priority(evaluator: &mut dyn Evaluator, rubric: &PriorityRubric, req: &EvalRequest<'_>) -> Evaluation {
    match evaluator.evaluate(req) {
        Ok(r) if r.score.is_finite() => Evaluation {
            task: req.task.id,
            score: r.score.round().clamp(0.0, 100.0) as u8,
            dependency_edges: r.dependency_edges,
            rationale: r.rationale,
            fallback: false,
        },
        Ok(_) => fallback(rubric, req, "non-finite score".into()),
        Err(e) => fallback(rubric, req, e.to_string()),
    }
}

fn fallback(rubric: &PriorityRubric, req: &EvalRequest<'_>, why: String) -> Evaluation {
    Evaluation {
        task: req.task.id,
        score: rubric.score(req.task),
        dependency_edges: Vec::new(),
        rationale: format!("rubric fallback: {why}"),
        fallback: true,
    }
}

#[derive(Debug, Clone, Default)]
pub struct RubricEvaluator {
    pub rubric: PriorityRubric,
}

impl Evaluator for RubricEvaluator {
    fn evaluate(&mut self, req: &EvalRequest<'_>) -> Result<EvalResponse, EvalError> {
        Ok(EvalResponse {
            score: f64::from(self.rubric.score(req.task)),
            dependency_edges: Vec::new(),
            rationale: "rubric".into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRule {
    /// Case-insensitive substring of the task description.
    #[serde(rename = "match")]
    pub pattern: String,
    pub score: f64,
    /// The matched task waits for the newest live task with this label.
    #[serde(default)]
    pub after_label: Option<String>,
}

/// Substring-scripted scores, rubric for everything unmatched.
#[derive(Debug, Clone, Default)]
pub struct ScriptedEvaluator {
    pub rules: Vec<ScoreRule>,
    pub rubric: PriorityRubric,
}

impl Evaluator for ScriptedEvaluator {
    fn evaluate(&mut self, req: &EvalRequest<'_>) -> Result<EvalResponse, EvalError> {
        let text = req.task.description.to_lowercase();
        let Some(rule) = self.rules.iter().find(|r| text.contains(&r.pattern.to_lowercase())) else {
            return RubricEvaluator {
                rubric: self.rubric.clone(),
            }
            .evaluate(req);
        };
        let mut edges = Vec::new();
        if let Some(label) = &rule.after_label {
            let s = req.snapshot;
            let dep = s
                .pending
                .iter()
                .chain(s.interrupted.iter())
                .chain(s.executing.iter())
                .filter(|t| &t.label == label && t.id != req.task.id)
                .map(|t| t.id)
                .max();
            if let Some(d) = dep {
                edges.push(DependencyEdge {
                    task: req.task.id,
                    depends_on: d,
                });
            }
        }
        Ok(EvalResponse {
            score: rule.score,
            dependency_edges: edges,
            rationale: format!("scripted: `{}`", rule.pattern),
        })
    }
}

pub struct RemoteEvaluator {
    pub transport: Rc<dyn Transport>,
    pub endpoint: String,
}

impl Evaluator for RemoteEvaluator {
    fn evaluate(&mut self, req: &EvalRequest<'_>) -> Result<EvalResponse, EvalError> {
        let reply = self
            .transport
            .post_json(&self.endpoint, &req.to_json())
            .map_err(|e| EvalError::Unavailable(e.to_string()))?;
        serde_json::from_value(reply).map_err(|e| EvalError::Malformed(e.to_string()))
    }
}
