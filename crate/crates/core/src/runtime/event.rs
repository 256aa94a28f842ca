use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ids::Tick;
use crate::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    FrameReady,
    InstructionReceived,
    TimerFired,
    ProposalEmitted,
    PlanDecided,
    CommandIssued,
    CommandRejected,
    TaskInterrupted,
    TaskResumed,
    TaskCompleted,
    TaskFailed,
    DisturbanceApplied,
    CaptionRecorded,
}

impl EventKind {
    pub const ALL: [EventKind; 13] = [
        EventKind::FrameReady,
        EventKind::InstructionReceived,
        EventKind::TimerFired,
        EventKind::ProposalEmitted,
        EventKind::PlanDecided,
        EventKind::CommandIssued,
        EventKind::CommandRejected,
        EventKind::TaskInterrupted,
        EventKind::TaskResumed,
        EventKind::TaskCompleted,
        EventKind::TaskFailed,
        EventKind::DisturbanceApplied,
        EventKind::CaptionRecorded,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::FrameReady => "frame_ready",
            EventKind::InstructionReceived => "instruction_received",
            EventKind::TimerFired => "timer_fired",
            EventKind::ProposalEmitted => "proposal_emitted",
            EventKind::PlanDecided => "plan_decided",
            EventKind::CommandIssued => "command_issued",
            EventKind::CommandRejected => "command_rejected",
            EventKind::TaskInterrupted => "task_interrupted",
            EventKind::TaskResumed => "task_resumed",
            EventKind::TaskCompleted => "task_completed",
            EventKind::TaskFailed => "task_failed",
            EventKind::DisturbanceApplied => "disturbance_applied",
            EventKind::CaptionRecorded => "caption_recorded",
        }
    }

    /// Perception-phase events. Within a tick none of the planner's events
    /// may come before these.
    pub fn is_perception(self) -> bool {
        matches!(
            self,
            EventKind::FrameReady | EventKind::CaptionRecorded | EventKind::ProposalEmitted
        )
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown event kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuntimeEvent {
    pub seq: u64,
    pub time: Tick,
    pub kind: EventKind,
    pub payload: Value,
}

impl RuntimeEvent {
    /// One JSON Lines record with a fixed field order.
    pub fn to_line(&self) -> String {
        format!(
            "{{\"seq\":{},\"time\":{},\"kind\":\"{}\",\"payload\":{}}}",
            self.seq,
            self.time,
            self.kind,
            json::render(&self.payload)
        )
    }

    pub fn task(&self) -> Option<&str> {
        self.payload.get("task").and_then(Value::as_str)
    }
}

/// The totally ordered event log of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    events: Vec<RuntimeEvent>,
}

impl Trace {
    pub fn new(events: Vec<RuntimeEvent>) -> Self {
        Trace { events }
    }

    pub fn events(&self) -> &[RuntimeEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &RuntimeEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.of_kind(kind).count()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        out
    }

    pub fn parse_jsonl(text: &str) -> Result<Trace, String> {
        let mut events = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let e: RuntimeEvent = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
            events.push(e);
        }
        Ok(Trace { events })
    }

    /// Sequence numbers are 0..n and (time, seq) never goes backwards.
    pub fn is_totally_ordered(&self) -> bool {
        self.events.iter().enumerate().all(|(i, e)| e.seq == i as u64)
            && self
                .events
                .windows(2)
                .all(|w| (w[0].time, w[0].seq) < (w[1].time, w[1].seq))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn line_format_is_fixed() {
        let e = RuntimeEvent {
            seq: 3,
            time: Tick(7),
            kind: EventKind::TaskCompleted,
            payload: json!({"task": "T1", "elapsed": 2.5}),
        };
        assert_eq!(
            e.to_line(),
            r#"{"seq":3,"time":7,"kind":"task_completed","payload":{"elapsed":2.500000,"task":"T1"}}"#
        );
        let t = Trace::new(vec![e.clone()]);
        assert_eq!(Trace::parse_jsonl(&t.to_jsonl()).unwrap().events()[0].kind, e.kind);
    }

    #[test]
    fn kinds_round_trip() {
        for k in EventKind::ALL {
            assert_eq!(k.as_str().parse::<EventKind>(), Ok(k));
        }
    }
}
