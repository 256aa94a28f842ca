//! Proposal-benchmark scoring: per-category accuracy over gold task
//! instances, negative-sample accuracy, and their averages.

use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::memory::tokenize;
use crate::tasks::Category;
use crate::transport::Transport;

pub const SCORED_CATEGORIES: [Category; 3] = [Category::CleanDebris, Category::OrganizeItem, Category::SafetyCheck];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldTask {
    pub category: Category,
    pub description: String,
}

/// Ground truth for one snapshot. A negative snapshot has no gold tasks and
/// the right answer is to propose nothing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub id: String,
    #[serde(default)]
    pub negative: bool,
    #[serde(default)]
    pub tasks: Vec<GoldTask>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictedTask {
    pub category: Category,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prediction {
    pub id: String,
    #[serde(default)]
    pub proposals: Vec<PredictedTask>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchError {
    #[error("input error: {0}")]
    Input(String),
    #[error("judge contract violated: score {score} for snapshot `{id}` is not 0, 0.5 or 1")]
    JudgeContract { id: String, score: f64 },
    #[error("judge failed: {0}")]
    Judge(String),
}

/// Scores one gold task against a snapshot's proposals.
pub trait Judge {
    fn judge(&mut self, gold: &GoldTask, proposals: &[PredictedTask]) -> Result<f64, BenchError>;
}

fn normalized(s: &str) -> String {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Deterministic string judge: 1 for the same category and the same
/// normalized description, 0.5 for the same category when at least half of
/// the gold description's words appear in the proposal, else 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactJudge;

impl Judge for ExactJudge {
    fn judge(&mut self, gold: &GoldTask, proposals: &[PredictedTask]) -> Result<f64, BenchError> {
        let g_norm = normalized(&gold.description);
        let g_tokens = tokenize(&gold.description);
        let mut best: f64 = 0.0;
        for p in proposals.iter().filter(|p| p.category == gold.category) {
            if normalized(&p.description) == g_norm {
                return Ok(1.0);
            }
            let p_tokens = tokenize(&p.description);
            let shared = g_tokens.intersection(&p_tokens).count();
            if !g_tokens.is_empty() && shared * 2 >= g_tokens.len() {
                best = best.max(0.5);
            }
        }
        Ok(best)
    }
}

/// Delegates to an external judging service that answers `{"score": x}`.
pub struct RemoteJudge {
    pub transport: Rc<dyn Transport>,
    pub endpoint: String,
}

impl Judge for RemoteJudge {
    fn judge(&mut self, gold: &GoldTask, proposals: &[PredictedTask]) -> Result<f64, BenchError> {
        let body = json!({"gold": gold, "proposals": proposals});
        let reply = self
            .transport
            .post_json(&self.endpoint, &body)
            .map_err(|e| BenchError::Judge(e.to_string()))?;
        reply
            .get("score")
            .and_then(|v| v.as_f64())
            .ok_or_else(|| BenchError::Judge(format!("reply has no numeric `score`: {reply}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    /// Accuracy per category; absent when the category has no gold tasks.
    pub categories: BTreeMap<Category, f64>,
    pub gold_counts: BTreeMap<Category, usize>,
    pub positive_average: Option<f64>,
    pub negative_accuracy: Option<f64>,
    pub negative_mean_proposals: Option<f64>,
    pub negative_count: usize,
    pub overall: Option<f64>,
}

/// Mean of the three category accuracies.
pub fn positive_average(categories: [f64; 3]) -> f64 {
    categories.iter().sum::<f64>() / 3.0
}

/// Mean of the positive average and the negative accuracy.
pub fn overall(positive_average: f64, negative_accuracy: f64) -> f64 {
    (positive_average + negative_accuracy) / 2.0
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

pub fn score_benchmark(
    predictions: &[Prediction],
    annotations: &[Annotation],
    judge: &mut dyn Judge,
) -> Result<BenchResult, BenchError> {
    let mut by_id: BTreeMap<&str, &Prediction> = BTreeMap::new();
    for p in predictions {
        if by_id.insert(&p.id, p).is_some() {
            return Err(BenchError::Input(format!("duplicate prediction id `{}`", p.id)));
        }
    }
    let mut seen = BTreeSet::new();
    for a in annotations {
        if !seen.insert(a.id.as_str()) {
            return Err(BenchError::Input(format!("duplicate annotation id `{}`", a.id)));
        }
        if !by_id.contains_key(a.id.as_str()) {
            return Err(BenchError::Input(format!("annotation `{}` has no prediction", a.id)));
        }
        if a.negative && !a.tasks.is_empty() {
            return Err(BenchError::Input(format!(
                "negative snapshot `{}` lists gold tasks",
                a.id
            )));
        }
        if let Some(t) = a.tasks.iter().find(|t| !SCORED_CATEGORIES.contains(&t.category)) {
            return Err(BenchError::Input(format!(
                "snapshot `{}` has gold task in unscored category `{}`",
                a.id,
                t.category.as_str()
            )));
        }
    }
    if let Some(extra) = by_id.keys().find(|id| !seen.contains(*id)) {
        return Err(BenchError::Input(format!("prediction `{extra}` has no annotation")));
    }

    let mut sums: BTreeMap<Category, f64> = BTreeMap::new();
    let mut counts: BTreeMap<Category, usize> = BTreeMap::new();
    let (mut neg, mut neg_clean, mut neg_props) = (0usize, 0usize, 0usize);
    for a in annotations {
        let pred = by_id[a.id.as_str()];
        if a.negative {
            neg += 1;
            neg_props += pred.proposals.len();
            if pred.proposals.is_empty() {
                neg_clean += 1;
            }
            continue;
        }
        for g in &a.tasks {
            let s = judge.judge(g, &pred.proposals)?;
            if s != 0.0 && s != 0.5 && s != 1.0 {
                return Err(BenchError::JudgeContract {
                    id: a.id.clone(),
                    score: s,
                });
            }
            *sums.entry(g.category).or_default() += s;
            *counts.entry(g.category).or_default() += 1;
        }
    }
    let categories: BTreeMap<Category, f64> = counts.iter().map(|(c, n)| (*c, sums[c] / *n as f64)).collect();
    let positive_average = mean(&categories.values().copied().collect::<Vec<_>>());
    let negative_accuracy = (neg > 0).then(|| neg_clean as f64 / neg as f64);
    let overall = mean(
        &[positive_average, negative_accuracy]
            .into_iter()
            .flatten()
            .collect::<Vec<_>>(),
    );
    Ok(BenchResult {
        categories,
        gold_counts: counts,
        positive_average,
        negative_accuracy,
        negative_mean_proposals: (neg > 0).then(|| neg_props as f64 / neg as f64),
        negative_count: neg,
        overall,
    })
}
