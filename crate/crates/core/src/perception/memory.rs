use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VisualMemoryConfig {
    /// Short-term capacity, in frames.
    pub short_capacity: usize,
    /// Long-term capacity, in frames.
    pub long_capacity: usize,
    /// Evicted frames whose index is a multiple of this enter long-term.
    pub modulus: u64,
    /// Frames per captioner call.
    pub caption_batch: usize,
    /// Failed caption attempts tolerated before a placeholder is recorded.
    pub caption_retries: u32,
}

impl Default for VisualMemoryConfig {
    fn default() -> Self {
        VisualMemoryConfig {
            short_capacity: 30,
            long_capacity: 100,
            modulus: 10,
            caption_batch: 5,
            caption_retries: 3,
        }
    }
}

impl VisualMemoryConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.short_capacity == 0 || self.long_capacity == 0 {
            return Err("memory capacities must be at least 1".into());
        }
        if self.modulus == 0 {
            return Err("thinning modulus must be at least 1".into());
        }
        if self.caption_batch == 0 {
            return Err("caption batch must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SequenceError {
    #[error("frame {got} arrived out of order; expected {expected}")]
    OutOfOrder { expected: u64, got: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredFrame {
    pub frame: Frame,
    /// Seen while something urgent was going on.
    pub urgent: bool,
}

/// An evicted frame waiting for its caption.
#[derive(Debug, Clone, PartialEq)]
pub struct Parked {
    pub stored: StoredFrame,
    pub attempts: u32,
}

/// Two-tier frame store: a full-rate short-term window and a thinned
/// long-term buffer. Everything else survives only as a caption.
#[derive(Debug, Clone)]
pub struct VisualMemory {
    config: VisualMemoryConfig,
    short_term: VecDeque<StoredFrame>,
    long_term: VecDeque<Frame>,
    parked: VecDeque<Parked>,
    last_index: Option<u64>,
    first_index: Option<u64>,
    captioned: BTreeMap<u64, u64>,
}

impl VisualMemory {
    pub fn new(config: VisualMemoryConfig) -> Self {
        VisualMemory {
            config,
            short_term: VecDeque::new(),
            long_term: VecDeque::new(),
            parked: VecDeque::new(),
            last_index: None,
            first_index: None,
            captioned: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &VisualMemoryConfig {
        &self.config
    }

    pub fn short_term(&self) -> impl ExactSizeIterator<Item = &Frame> {
        self.short_term.iter().map(|s| &s.frame)
    }

    pub fn long_term(&self) -> impl ExactSizeIterator<Item = &Frame> {
        self.long_term.iter()
    }

    pub fn parked(&self) -> impl ExactSizeIterator<Item = &Parked> {
        self.parked.iter()
    }

    pub fn last_index(&self) -> Option<u64> {
        self.last_index
    }

    /// Contiguous copy of the short-term window, oldest first.
    pub fn window(&self) -> Vec<Frame> {
        self.short_term.iter().map(|s| s.frame.clone()).collect()
    }

    pub fn mark_latest_urgent(&mut self) {
        if let Some(s) = self.short_term.back_mut() {
            s.urgent = true;
        }
    }

    /// Appends a frame. Returns frames pushed out of short-term, oldest
    /// first; they still need captions.
    pub fn push(&mut self, frame: Frame, urgent: bool) -> Result<Vec<StoredFrame>, SequenceError> {
        if let Some(last) = self.last_index {
            if frame.frame_index != last + 1 {
                return Err(SequenceError::OutOfOrder {
                    expected: last + 1,
                    got: frame.frame_index,
                });
            }
        }
        self.last_index = Some(frame.frame_index);
        self.first_index.get_or_insert(frame.frame_index);
        self.short_term.push_back(StoredFrame { frame, urgent });
        let mut evicted = Vec::new();
        while self.short_term.len() > self.config.short_capacity {
            let s = self.short_term.pop_front().expect("over capacity");
            if s.frame.frame_index.is_multiple_of(self.config.modulus) {
                self.long_term.push_back(s.frame.clone());
                if self.long_term.len() > self.config.long_capacity {
                    self.long_term.pop_front();
                }
            }
            evicted.push(s);
        }
        Ok(evicted)
    }

    pub fn park(&mut self, stored: StoredFrame, attempts: u32) {
        self.parked.push_back(Parked { stored, attempts });
    }

    pub fn take_parked(&mut self) -> Vec<Parked> {
        self.parked.drain(..).collect()
    }

    pub fn record_caption(&mut self, frame_index: u64, history_seq: u64) {
        self.captioned.insert(frame_index, history_seq);
    }

    pub fn caption_of(&self, frame_index: u64) -> Option<u64> {
        self.captioned.get(&frame_index).copied()
    }

    /// Frame indices that are in no tier, not parked, and have no caption.
    /// Empty whenever the coverage invariant holds.
    pub fn uncovered(&self) -> Vec<u64> {
        let (Some(first), Some(last)) = (self.first_index, self.last_index) else {
            return Vec::new();
        };
        let mut present: std::collections::BTreeSet<u64> =
            self.short_term.iter().map(|s| s.frame.frame_index).collect();
        present.extend(self.long_term.iter().map(|f| f.frame_index));
        present.extend(self.parked.iter().map(|p| p.stored.frame.frame_index));
        (first..=last)
            .filter(|i| !present.contains(i) && !self.captioned.contains_key(i))
            .collect()
    }
}
