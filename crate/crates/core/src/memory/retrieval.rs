use std::cmp::Ordering;
use std::collections::BTreeSet;

use super::{EventHistory, EventRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredEvent {
    pub record: EventRecord,
    pub score: f64,
}

/// Ranks history entries against a query. Lexical by default; an embedding
/// backed retriever only needs to honour the same ordering contract.
pub trait Retriever {
    fn retrieve(&self, history: &EventHistory, query: &str, k: usize) -> Vec<ScoredEvent>;
}

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Token-set Jaccard; ties go to the newer record (later end tick, then
/// higher sequence number).
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalRetriever;

impl Retriever for LexicalRetriever {
    fn retrieve(&self, history: &EventHistory, query: &str, k: usize) -> Vec<ScoredEvent> {
        if k == 0 || history.is_empty() {
            return Vec::new();
        }
        let q = tokenize(query);
        let mut scored: Vec<(f64, &EventRecord)> = history
            .records()
            .iter()
            .map(|r| (jaccard(&q, history.tokens(r.seq)), r))
            .collect();
        let rank = |a: &(f64, &EventRecord), b: &(f64, &EventRecord)| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then(b.1.end.cmp(&a.1.end))
                .then(b.1.seq.cmp(&a.1.seq))
        };
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, rank);
            scored.truncate(k);
        }
        scored.sort_by(rank);
        scored
            .into_iter()
            .map(|(score, r)| ScoredEvent {
                record: r.clone(),
                score,
            })
            .collect()
    }
}

pub fn retrieve_events(history: &EventHistory, query: &str, k: usize) -> Vec<ScoredEvent> {
    LexicalRetriever.retrieve(history, query, k)
}
