//! Frame ingestion into two-tier visual memory, caption-on-eviction, task
//! proposals, and completion checks against the scene graph.

mod adapter;
mod frame;
mod memory;

pub use adapter::{
    apply_rule, default_rules, describe_frame, situation_of, AdapterError, AttrMatch, PerceiverAdapter,
    PerceiverScript, Proposal, ProposalContext, ProposerRule, RemotePerceiver, ScriptedPerceiver, ScriptedProposal,
    TRIGGER_ATTRIBUTES,
};
pub use frame::{DeviceReading, Frame, Observation, Placement, RobotReading};
pub use memory::{Parked, SequenceError, StoredFrame, VisualMemory, VisualMemoryConfig};

use serde::Serialize;

use crate::ids::Tick;
use crate::memory::{EventHistory, EventSource, SceneGraph, SceneGraphDelta, Truth};
use crate::tasks::{Category, TaskMemory, TaskRecord};

pub const DEFAULT_DEDUPE_TTL: u64 = 300;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaptionOutcome {
    pub frame_index: u64,
    pub history_seq: u64,
    pub caption: String,
    pub urgent: bool,
    pub placeholder: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestResult {
    pub delta: SceneGraphDelta,
    /// Non-duplicate proposals, in proposer order.
    pub proposals: Vec<Proposal>,
    pub duplicates: usize,
    pub evicted: Vec<u64>,
    pub captions: Vec<CaptionOutcome>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Completion {
    StillRunning,
    Completed,
    Failed(String),
}

pub struct PerceptionModule {
    memory: VisualMemory,
    adapter: Box<dyn PerceiverAdapter>,
    dedupe_ttl: u64,
}

impl PerceptionModule {
    pub fn new(config: VisualMemoryConfig, adapter: Box<dyn PerceiverAdapter>, dedupe_ttl: u64) -> Self {
        PerceptionModule {
            memory: VisualMemory::new(config),
            adapter,
            dedupe_ttl,
        }
    }

    pub fn memory(&self) -> &VisualMemory {
        &self.memory
    }

    /// Pushes a frame through the whole pipeline: tiering, scene graph,
    /// proposals and captioning of anything evicted.
    pub fn ingest_frame(
        &mut self,
        frame: Frame,
        graph: &mut SceneGraph,
        history: &mut EventHistory,
        tasks: &TaskMemory,
        urgent: bool,
    ) -> Result<IngestResult, SequenceError> {
        let now = frame.time;
        let mut scene = frame.clone();
        scene.observations = self.adapter.scene_elements(&frame);
        let evicted = self.memory.push(frame, urgent)?;
        let delta = graph.apply_delta(&scene);

        let window = self.memory.window();
        let raw = self.adapter.propose(&window, &ProposalContext { graph, now });
        let mut proposals: Vec<Proposal> = Vec::new();
        let mut duplicates = 0;
        for p in raw {
            let twin = proposals
                .iter()
                .any(|q| q.category == p.category && q.situation == p.situation);
            if twin || dedupe_proposal(&p, tasks, now, self.dedupe_ttl) {
                duplicates += 1;
            } else {
                proposals.push(p);
            }
        }
        if proposals.iter().any(|p| p.category == Category::SafetyCheck) {
            self.memory.mark_latest_urgent();
        }

        let evicted_ids = evicted.iter().map(|s| s.frame.frame_index).collect();
        let captions = self.evict_and_downsample(evicted, history);
        Ok(IngestResult {
            delta,
            proposals,
            duplicates,
            evicted: evicted_ids,
            captions,
        })
    }

    /// Captions parked frames and freshly evicted ones in batches. Failed
    /// batches are parked for the next tick; after the retry budget runs
    /// out a placeholder is recorded so no frame goes unaccounted for.
    pub fn evict_and_downsample(
        &mut self,
        evicted: Vec<StoredFrame>,
        history: &mut EventHistory,
    ) -> Vec<CaptionOutcome> {
        let cfg = *self.memory.config();
        let mut queue: Vec<(StoredFrame, u32)> = self
            .memory
            .take_parked()
            .into_iter()
            .map(|p| (p.stored, p.attempts))
            .collect();
        queue.extend(evicted.into_iter().map(|s| (s, 0)));
        let mut out = Vec::new();
        for batch in queue.chunks(cfg.caption_batch) {
            let frames: Vec<Frame> = batch.iter().map(|(s, _)| s.frame.clone()).collect();
            match self.adapter.caption(&frames) {
                Ok(texts) if texts.len() == frames.len() => {
                    for ((s, _), text) in batch.iter().zip(texts) {
                        out.push(self.record(s, text, false, history));
                    }
                }
                _ => {
                    for (s, attempts) in batch {
                        let attempts = attempts + 1;
                        if attempts > cfg.caption_retries {
                            let text = format!(
                                "[caption lost] frame {} in {} at {}",
                                s.frame.frame_index, s.frame.room, s.frame.time
                            );
                            out.push(self.record(s, text, true, history));
                        } else {
                            self.memory.park(s.clone(), attempts);
                        }
                    }
                }
            }
        }
        out
    }

    fn record(
        &mut self,
        s: &StoredFrame,
        text: String,
        placeholder: bool,
        history: &mut EventHistory,
    ) -> CaptionOutcome {
        let text = if text.trim().is_empty() {
            format!("[empty caption] frame {}", s.frame.frame_index)
        } else {
            text
        };
        let seq = history
            .push(
                s.frame.time,
                s.frame.time,
                text.clone(),
                s.urgent,
                EventSource::CaptionEviction,
            )
            .expect("caption span is a single tick and text is non-empty")
            .seq;
        self.memory.record_caption(s.frame.frame_index, seq);
        CaptionOutcome {
            frame_index: s.frame.frame_index,
            history_seq: seq,
            caption: text,
            urgent: s.urgent,
            placeholder,
        }
    }
}

/// A proposal duplicates a task with the same category and situation that
/// is still live, or that ended less than `ttl` ticks ago.
pub fn dedupe_proposal(p: &Proposal, tasks: &TaskMemory, now: Tick, ttl: u64) -> bool {
    tasks.all().any(|t| {
        !t.is_template()
            && t.category == p.category
            && t.situation.as_deref() == Some(p.situation.as_str())
            && match t.ended_at {
                None => true,
                Some(end) => now.since(end) < ttl,
            }
    })
}

/// Feedback-free completion: only the scene graph is consulted.
pub fn check_completion(graph: &SceneGraph, task: &TaskRecord, now: Tick) -> Completion {
    if let Some(p) = &task.postcondition {
        match p.eval(graph) {
            Ok(Truth::True) => return Completion::Completed,
            Err(e) => return Completion::Failed(e.to_string()),
            Ok(_) => {}
        }
    }
    match task.deadline_ticks {
        Some(d) if task.exec.elapsed(now) > d => Completion::Failed(format!(
            "deadline of {d} ticks exceeded after {} ticks",
            task.exec.elapsed(now)
        )),
        _ => Completion::StillRunning,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::{IdAllocator, TaskId};
    use crate::memory::Predicate;
    use crate::tasks::{Outcome, TaskKind};

    fn module() -> PerceptionModule {
        PerceptionModule::new(
            VisualMemoryConfig::default(),
            Box::new(ScriptedPerceiver::with_defaults(0)),
            DEFAULT_DEDUPE_TTL,
        )
    }

    fn proposal(situation: &str) -> Proposal {
        Proposal {
            category: Category::CleanDebris,
            description: "pick up".into(),
            situation: situation.into(),
            frame_index: 1,
            steps: Vec::new(),
            postcondition: None,
        }
    }

    fn memory_with(situation: &str) -> (TaskMemory, TaskId) {
        let mut mem = TaskMemory::new();
        let mut ids = IdAllocator::new();
        let mut t = TaskRecord::new(ids.task(), TaskKind::Active, "pick up", Tick(0));
        t.category = Category::CleanDebris;
        t.situation = Some(situation.into());
        let id = mem.insert(t).unwrap();
        (mem, id)
    }

    #[test]
    fn live_twin_is_duplicate_other_room_is_not() {
        let (mem, _) = memory_with("office desk");
        assert!(dedupe_proposal(&proposal("office desk"), &mem, Tick(5), 300));
        assert!(!dedupe_proposal(&proposal("lab desk"), &mem, Tick(5), 300));
    }

    #[test]
    fn dedupe_window_closes_after_ttl() {
        let (mut mem, id) = memory_with("office desk");
        mem.finalize(id, Outcome::Completed, Tick(100)).unwrap();
        // Oracle: duplicate iff now - 100 < 300.
        for now in [100u64, 250, 399, 400, 401, 1000] {
            let expected = now - 100 < 300;
            assert_eq!(
                dedupe_proposal(&proposal("office desk"), &mem, Tick(now), 300),
                expected,
                "now={now}"
            );
        }
    }

    #[test]
    fn completion_by_device_state_and_deadline() {
        let mut g = SceneGraph::new(["office".to_string()]);
        let mut f = Frame::blank(1, Tick(1), "office");
        f.devices.push(DeviceReading {
            device: "humidifier".into(),
            room: "office".into(),
            power: false,
            level: 0,
        });
        g.apply_delta(&f);
        let mut t = TaskRecord::new(TaskId(1), TaskKind::Passive, "humid", Tick(0)).with_postcondition(
            Predicate::DeviceState {
                device: "humidifier".into(),
                power: Some(false),
                level: None,
            },
        );
        t.exec.started_at = Some(Tick(0));
        assert_eq!(check_completion(&g, &t, Tick(1)), Completion::Completed);

        t.postcondition = Some(Predicate::DeviceState {
            device: "humidifier".into(),
            power: Some(true),
            level: None,
        });
        assert_eq!(check_completion(&g, &t, Tick(120)), Completion::StillRunning);
        assert!(matches!(check_completion(&g, &t, Tick(121)), Completion::Failed(_)));

        t.postcondition = Some(Predicate::Held { object: "ghost".into() });
        match check_completion(&g, &t, Tick(2)) {
            Completion::Failed(msg) => assert!(msg.contains("unknown object")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn coverage_holds_with_parked_and_placeholder_frames() {
        let script = PerceiverScript {
            caption_failures: [(3, 2), (5, 10)].into(),
            ..Default::default()
        };
        let cfg = VisualMemoryConfig {
            short_capacity: 2,
            caption_batch: 1,
            ..Default::default()
        };
        let mut pm = PerceptionModule::new(cfg, Box::new(ScriptedPerceiver::new(0, &script)), 300);
        let mut g = SceneGraph::new(["lab".to_string()]);
        let mut h = EventHistory::new();
        let mem = TaskMemory::new();
        let mut placeholders = 0;
        for i in 1..=20 {
            let r = pm
                .ingest_frame(Frame::blank(i, Tick(i), "lab"), &mut g, &mut h, &mem, false)
                .unwrap();
            placeholders += r.captions.iter().filter(|c| c.placeholder).count();
            assert!(pm.memory().uncovered().is_empty(), "tick {i}");
        }
        assert_eq!(placeholders, 1);
        assert!(pm.memory().caption_of(3).is_some());
    }

    #[test]
    fn ingest_single_frame() {
        let mut pm = module();
        let mut g = SceneGraph::new(["lab".to_string()]);
        let mut h = EventHistory::new();
        let r = pm
            .ingest_frame(
                Frame::blank(1, Tick(1), "lab"),
                &mut g,
                &mut h,
                &TaskMemory::new(),
                false,
            )
            .unwrap();
        assert!(r.evicted.is_empty());
        assert_eq!(pm.memory().short_term().len(), 1);
    }
}
