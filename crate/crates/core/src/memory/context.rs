use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{EventHistory, EventRecord, Retriever};
use crate::ids::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContextConfig {
    /// Character budget for the rendered bundle.
    pub budget: usize,
    /// How far back urgent events are carried verbatim.
    pub urgent_horizon: u64,
    pub top_k: usize,
}

impl Default for ContextConfig {
    fn default() -> Self {
        ContextConfig {
            budget: 4000,
            urgent_horizon: 500,
            top_k: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextItem {
    pub record: EventRecord,
    pub score: Option<f64>,
}

/// Query, then urgent events newest first, then retrieved events by score.
/// Items are whole records; the rendered form never exceeds the budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextBundle {
    pub query: String,
    pub urgent: Vec<ContextItem>,
    pub retrieved: Vec<ContextItem>,
    pub budget: usize,
    pub size: usize,
    /// Set when urgent events alone overflowed the budget and the oldest
    /// ones had to be left out.
    pub truncated: bool,
}

impl ContextBundle {
    pub fn render(&self) -> String {
        let mut out = self.query.clone();
        for item in self.urgent.iter().chain(self.retrieved.iter()) {
            out.push('\n');
            out.push_str(&item.record.context_line());
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "query": self.query,
            "urgent": self.urgent.iter().map(|i| i.record.context_line()).collect::<Vec<_>>(),
            "retrieved": self.retrieved.iter().map(|i| i.record.context_line()).collect::<Vec<_>>(),
            "truncated": self.truncated,
            "size": self.size,
        })
    }
}

fn item_cost(r: &EventRecord) -> usize {
    1 + r.context_line().chars().count()
}

pub fn assemble_context(
    query: &str,
    history: &EventHistory,
    now: Tick,
    config: &ContextConfig,
    retriever: &dyn Retriever,
) -> ContextBundle {
    let mut size = query.chars().count();
    let mut bundle = ContextBundle {
        query: query.to_string(),
        urgent: Vec::new(),
        retrieved: Vec::new(),
        budget: config.budget,
        size,
        truncated: false,
    };

    // Urgent events inside the horizon, newest first. If they do not all
    // fit, the oldest are dropped.
    let cutoff = now.0.saturating_sub(config.urgent_horizon);
    let urgent: Vec<&EventRecord> = history
        .records()
        .iter()
        .rev()
        .filter(|r| r.urgent && r.end.0 >= cutoff)
        .collect();
    for r in &urgent {
        let cost = item_cost(r);
        if size + cost > config.budget {
            bundle.truncated = true;
            break;
        }
        size += cost;
        bundle.urgent.push(ContextItem {
            record: (*r).clone(),
            score: None,
        });
    }

    if !bundle.truncated {
        let taken: Vec<u64> = bundle.urgent.iter().map(|i| i.record.seq).collect();
        let candidates = retriever.retrieve(history, query, config.top_k + taken.len());
        for s in candidates
            .into_iter()
            .filter(|s| !taken.contains(&s.record.seq))
            .take(config.top_k)
        {
            let cost = item_cost(&s.record);
            if size + cost > config.budget {
                break;
            }
            size += cost;
            bundle.retrieved.push(ContextItem {
                record: s.record,
                score: Some(s.score),
            });
        }
    }
    bundle.size = size;
    bundle
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::{EventSource, LexicalRetriever};

    fn cfg(budget: usize) -> ContextConfig {
        ContextConfig {
            budget,
            ..ContextConfig::default()
        }
    }

    #[test]
    fn empty_history_is_query_only() {
        let b = assemble_context("humid", &EventHistory::new(), Tick(10), &cfg(100), &LexicalRetriever);
        assert_eq!(b.render(), "humid");
        assert_eq!(b.size, 5);
        assert!(b.urgent.is_empty() && b.retrieved.is_empty());
    }

    #[test]
    fn urgent_items_come_first_newest_first() {
        let mut h = EventHistory::new();
        h.push(Tick(1), Tick(1), "humid lab", false, EventSource::CaptionEviction)
            .unwrap();
        for t in 2..5 {
            h.push(
                Tick(t),
                Tick(t),
                format!("alarm {t}"),
                true,
                EventSource::CaptionEviction,
            )
            .unwrap();
        }
        let b = assemble_context("humid", &h, Tick(10), &cfg(4000), &LexicalRetriever);
        let urgent: Vec<u64> = b.urgent.iter().map(|i| i.record.seq).collect();
        assert_eq!(urgent, vec![3, 2, 1]);
        assert_eq!(b.retrieved[0].record.seq, 0);
        assert_eq!(b.render().chars().count(), b.size);
    }

    #[test]
    fn retrieval_stops_at_first_item_that_does_not_fit() {
        let mut h = EventHistory::new();
        h.push(Tick(1), Tick(1), "cup on table", false, EventSource::CaptionEviction)
            .unwrap();
        h.push(Tick(2), Tick(2), "cup", false, EventSource::CaptionEviction)
            .unwrap();
        h.push(
            Tick(3),
            Tick(3),
            "cup near the old wooden table in lab",
            false,
            EventSource::CaptionEviction,
        )
        .unwrap();
        // Hand-ranked for query "cup": "cup" scores 1, "cup on table" 1/3,
        // the long caption 1/8. Costs: "[2-2] cup" = 9+1, "[1-1] cup on table" = 18+1.
        // Budget 3 + 10 + 19 = 32 fits the first two exactly.
        let b = assemble_context("cup", &h, Tick(5), &cfg(32), &LexicalRetriever);
        let got: Vec<u64> = b.retrieved.iter().map(|i| i.record.seq).collect();
        assert_eq!(got, vec![1, 0]);
        assert_eq!(b.size, 32);
        let b = assemble_context("cup", &h, Tick(5), &cfg(31), &LexicalRetriever);
        let got: Vec<u64> = b.retrieved.iter().map(|i| i.record.seq).collect();
        assert_eq!(got, vec![1]);
    }

    #[test]
    fn overflowing_urgent_items_set_the_marker() {
        let mut h = EventHistory::new();
        for t in 0..10 {
            h.push(
                Tick(t),
                Tick(t),
                "fire alarm in the lab",
                true,
                EventSource::CaptionEviction,
            )
            .unwrap();
        }
        let b = assemble_context("q", &h, Tick(10), &cfg(60), &LexicalRetriever);
        assert!(b.truncated);
        assert!(b.size <= 60);
        assert_eq!(b.urgent[0].record.seq, 9);
    }
}
