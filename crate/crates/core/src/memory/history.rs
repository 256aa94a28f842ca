use std::collections::BTreeSet;

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use super::retrieval::tokenize;
use crate::ids::Tick;
use crate::json;

/// Where a history entry came from. Safety-validation outcomes have no
/// variant here: they are never written to memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventSource {
    CaptionEviction,
    PlannerNote,
    InstructionEcho,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRecord {
    pub seq: u64,
    pub start: Tick,
    pub end: Tick,
    pub caption: String,
    pub urgent: bool,
    pub source: EventSource,
}

impl EventRecord {
    /// The line this record occupies inside a context bundle.
    pub fn context_line(&self) -> String {
        let tag = if self.urgent { "!" } else { "" };
        format!("[{}-{}]{} {}", self.start, self.end, tag, self.caption)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HistoryError {
    #[error("event span is inverted: start {start} > end {end}")]
    InvertedSpan { start: Tick, end: Tick },
    #[error("event caption is empty")]
    EmptyCaption,
}

#[derive(Debug, Clone, Default)]
pub struct EventHistory {
    records: Vec<EventRecord>,
    tokens: Vec<BTreeSet<String>>,
}

impl EventHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(
        &mut self,
        start: Tick,
        end: Tick,
        caption: impl Into<String>,
        urgent: bool,
        source: EventSource,
    ) -> Result<&EventRecord, HistoryError> {
        let caption = caption.into();
        if start > end {
            return Err(HistoryError::InvertedSpan { start, end });
        }
        if caption.trim().is_empty() {
            return Err(HistoryError::EmptyCaption);
        }
        let seq = self.records.len() as u64;
        self.tokens.push(tokenize(&caption));
        self.records.push(EventRecord {
            seq,
            start,
            end,
            caption,
            urgent,
            source,
        });
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub(crate) fn tokens(&self, seq: u64) -> &BTreeSet<String> {
        &self.tokens[seq as usize]
    }

    pub fn get(&self, seq: u64) -> Option<&EventRecord> {
        self.records.get(seq as usize)
    }

    pub fn dump_lines(&self) -> Vec<String> {
        self.records
            .iter()
            .map(|r| {
                json::render(&json!({
                    "seq": r.seq,
                    "start": r.start.0,
                    "end": r.end.0,
                    "caption": r.caption,
                    "urgent": r.urgent,
                    "source": r.source,
                }))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_records() {
        let mut h = EventHistory::new();
        assert_eq!(
            h.push(Tick(5), Tick(4), "x", false, EventSource::PlannerNote)
                .unwrap_err(),
            HistoryError::InvertedSpan {
                start: Tick(5),
                end: Tick(4)
            }
        );
        assert_eq!(
            h.push(Tick(1), Tick(1), "  ", false, EventSource::PlannerNote)
                .unwrap_err(),
            HistoryError::EmptyCaption
        );
        assert!(h.is_empty());
    }
}
