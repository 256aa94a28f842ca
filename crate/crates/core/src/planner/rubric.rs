use serde::{Deserialize, Serialize};

use crate::memory::tokenize;
use crate::tasks::{Category, TaskKind, TaskRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Background,
    Normal,
    Urgent,
    Emergency,
}

impl Band {
    pub fn of(score: u8) -> Band {
        match score {
            0..=29 => Band::Background,
            30..=59 => Band::Normal,
            60..=79 => Band::Urgent,
            _ => Band::Emergency,
        }
    }

    pub fn range(self) -> (u8, u8) {
        match self {
            Band::Background => (0, 29),
            Band::Normal => (30, 59),
            Band::Urgent => (60, 79),
            Band::Emergency => (80, 100),
        }
    }

    pub fn ceiling(self) -> u8 {
        self.range().1
    }
}

/// Deterministic reference evaluator. Model-backed evaluators report on the
/// same 0-100 scale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorityRubric {
    pub safety_check: u8,
    pub organize_item: u8,
    pub clean_debris: u8,
    pub scheduled: u8,
    pub passive: u8,
    pub passive_urgent: u8,
    pub emergency: u8,
    pub urgency_cues: Vec<String>,
    pub emergency_keywords: Vec<String>,
}

impl Default for PriorityRubric {
    fn default() -> Self {
        let words = |w: &[&str]| w.iter().map(|s| s.to_string()).collect();
        PriorityRubric {
            safety_check: 85,
            organize_item: 30,
            clean_debris: 30,
            scheduled: 55,
            passive: 50,
            passive_urgent: 70,
            emergency: 90,
            urgency_cues: words(&["now", "immediately", "urgent", "urgently", "asap"]),
            emergency_keywords: words(&["fire", "smoke", "emergency", "danger", "leak", "hazard", "spill"]),
        }
    }
}

impl PriorityRubric {
    pub fn validate(&self) -> Result<(), String> {
        let all = [
            self.safety_check,
            self.organize_item,
            self.clean_debris,
            self.scheduled,
            self.passive,
            self.passive_urgent,
            self.emergency,
        ];
        match all.iter().find(|s| **s > 100) {
            Some(s) => Err(format!("rubric score {s} is above 100")),
            None => Ok(()),
        }
    }

    pub fn score_parts(&self, kind: TaskKind, category: Category, text: &str) -> u8 {
        let tokens = tokenize(text);
        let has = |list: &[String]| list.iter().any(|w| tokens.contains(&w.to_lowercase()));
        let base = match category {
            Category::SafetyCheck => self.safety_check,
            Category::OrganizeItem => self.organize_item,
            Category::CleanDebris => self.clean_debris,
            Category::Other => match kind {
                TaskKind::Scheduled => self.scheduled,
                _ if has(&self.urgency_cues) => self.passive_urgent,
                _ => self.passive,
            },
        };
        if has(&self.emergency_keywords) {
            base.max(self.emergency)
        } else {
            base
        }
    }

    pub fn score(&self, task: &TaskRecord) -> u8 {
        self.score_parts(task.kind, task.category, &task.description)
    }
}
