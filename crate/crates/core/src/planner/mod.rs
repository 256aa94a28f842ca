//! Priority evaluation and dispatch decisions. Everything here is a pure
//! function of snapshots; the runtime applies the decisions.

mod evaluator;
mod rubric;

pub use evaluator::{
    evaluate_priority, DependencyEdge, EvalError, EvalRequest, EvalResponse, Evaluation, Evaluator, RemoteEvaluator,
    RubricEvaluator, ScoreRule, ScriptedEvaluator,
};
pub use rubric::{Band, PriorityRubric};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ids::{TaskId, Tick};
use crate::tasks::TaskRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aging {
    /// Ticks of waiting per point of priority gained.
    pub every: u64,
}

/// Exact positive rational applied to every score and to the margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rescale {
    pub numerator: u64,
    pub denominator: u64,
}

impl Default for Rescale {
    fn default() -> Self {
        Rescale {
            numerator: 1,
            denominator: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub margin: u8,
    pub exclusive: BTreeSet<String>,
    /// Off by default; with it on, equal-priority FIFO no longer holds.
    pub aging: Option<Aging>,
    pub reevaluate_on_resume: bool,
    pub rescale: Rescale,
    pub rubric: PriorityRubric,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            margin: 20,
            exclusive: ["body".to_string()].into(),
            aging: None,
            reevaluate_on_resume: false,
            rescale: Rescale::default(),
            rubric: PriorityRubric::default(),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.rescale.numerator == 0 || self.rescale.denominator == 0 {
            return Err("rescale must be a positive fraction".into());
        }
        if self.aging.is_some_and(|a| a.every == 0) {
            return Err("aging.every must be at least 1".into());
        }
        self.rubric.validate()
    }

    /// Priority after aging, capped at the ceiling of the task's band.
    pub fn effective_priority(&self, t: &TaskRecord, now: Tick) -> u8 {
        match self.aging {
            None => t.priority,
            Some(a) => {
                let gained = now.since(t.created_at) / a.every;
                let ceiling = Band::of(t.priority).ceiling() as u64;
                (t.priority as u64 + gained).min(ceiling) as u8
            }
        }
    }

    /// Score in rescaled units, as a numerator over the common denominator.
    fn scaled(&self, p: u8) -> u128 {
        p as u128 * self.rescale.numerator as u128
    }

    fn clears_margin(&self, candidate: u8, running: u8) -> bool {
        let (c, r, m) = (self.scaled(candidate), self.scaled(running), self.scaled(self.margin));
        c >= r + m
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Dispatch {
    pub task: TaskId,
    pub priority: u8,
    pub tools: Vec<String>,
    pub resume: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Preemption {
    pub task: TaskId,
    pub by: TaskId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlanDecision {
    pub dispatch: Vec<Dispatch>,
    pub preempted: Vec<Preemption>,
    pub rationale: String,
    pub decided_at: Tick,
}

impl PlanDecision {
    pub fn is_empty(&self) -> bool {
        self.dispatch.is_empty() && self.preempted.is_empty()
    }
}

fn tools_of(t: &TaskRecord) -> Vec<String> {
    let set: BTreeSet<&str> = t.steps.iter().map(|s| s.tool.as_str()).collect();
    set.into_iter().map(str::to_string).collect()
}

fn ordered<'a>(config: &PlannerConfig, tasks: &[&'a TaskRecord], now: Tick) -> Vec<&'a TaskRecord> {
    let mut v = tasks.to_vec();
    v.sort_by_key(|t| {
        (
            std::cmp::Reverse(config.scaled(config.effective_priority(t, now))),
            t.created_at,
            t.id,
        )
    });
    v
}

fn decide(
    config: &PlannerConfig,
    candidates: &[&TaskRecord],
    executing: &[&TaskRecord],
    now: Tick,
    allow_preemption: bool,
) -> PlanDecision {
    let mut holders: BTreeMap<&str, &TaskRecord> = BTreeMap::new();
    for t in executing {
        for r in t.resources.iter().filter(|r| config.exclusive.contains(*r)) {
            holders.insert(r.as_str(), t);
        }
    }
    let mut taken: BTreeSet<&str> = BTreeSet::new();
    let mut decision = PlanDecision {
        dispatch: Vec::new(),
        preempted: Vec::new(),
        rationale: String::new(),
        decided_at: now,
    };
    for cand in ordered(config, candidates, now) {
        let prio = config.effective_priority(cand, now);
        let need: Vec<&str> = cand
            .resources
            .iter()
            .map(String::as_str)
            .filter(|r| config.exclusive.contains(*r))
            .collect();
        if need.iter().any(|r| taken.contains(r)) {
            let _ = write!(decision.rationale, "{} waits; ", cand.id);
            continue;
        }
        let mut blockers: Vec<&TaskRecord> = need.iter().filter_map(|r| holders.get(r).copied()).collect();
        blockers.sort_by_key(|t| t.id);
        blockers.dedup_by_key(|t| t.id);
        if !blockers.is_empty() {
            let can_preempt = allow_preemption
                && blockers
                    .iter()
                    .all(|b| b.interruptible && config.clears_margin(prio, config.effective_priority(b, now)));
            if !can_preempt {
                let _ = write!(decision.rationale, "{} blocked by {}; ", cand.id, blockers[0].id);
                continue;
            }
            for b in blockers {
                holders.retain(|_, h| h.id != b.id);
                decision.preempted.push(Preemption {
                    task: b.id,
                    by: cand.id,
                });
                let _ = write!(
                    decision.rationale,
                    "{} ({}) preempts {} ({}); ",
                    cand.id,
                    prio,
                    b.id,
                    config.effective_priority(b, now)
                );
            }
        }
        taken.extend(need);
        let _ = write!(decision.rationale, "dispatch {} ({}); ", cand.id, prio);
        decision.dispatch.push(Dispatch {
            task: cand.id,
            priority: prio,
            tools: tools_of(cand),
            resume: cand.status == crate::tasks::TaskStatus::Interrupted,
        });
    }
    let trimmed = decision.rationale.trim_end_matches("; ").len();
    decision.rationale.truncate(trimmed);
    decision
}

/// Greedy dispatch over executable tasks, preempting an executing task only
/// when it blocks an exclusive resource, is interruptible, and the candidate
/// outranks it by at least the margin.
pub fn plan(config: &PlannerConfig, executable: &[&TaskRecord], executing: &[&TaskRecord], now: Tick) -> PlanDecision {
    decide(config, executable, executing, now, true)
}

/// Re-dispatches interrupted tasks whose resources are free. Never preempts.
pub fn resume_pass(
    config: &PlannerConfig,
    interrupted: &[&TaskRecord],
    executing: &[&TaskRecord],
    now: Tick,
) -> PlanDecision {
    let only: Vec<&TaskRecord> = interrupted
        .iter()
        .copied()
        .filter(|t| t.status == crate::tasks::TaskStatus::Interrupted)
        .collect();
    decide(config, &only, executing, now, false)
}
