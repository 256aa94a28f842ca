//! Task memory: every task across its lifecycle, split into pending,
//! scheduled (timer templates), interrupted and executing sets.

mod record;

pub use record::{
    Category, Execution, Outcome, Outstanding, ScheduleMode, ScheduleSpec, Step, TaskKind, TaskRecord, TaskStatus,
    DEFAULT_DEADLINE,
};

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::ids::{IdAllocator, TaskId, Tick};
use crate::json;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskError {
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("task id {0} is already in use")]
    DuplicateId(TaskId),
    #[error("task {task} depends on unknown task {dep}")]
    UnknownDependency { task: TaskId, dep: TaskId },
    #[error("dependency cycle: {}", fmt_cycle(.0))]
    Cycle(Vec<TaskId>),
    #[error("task {task} is {status}; cannot {op}")]
    InvalidState {
        task: TaskId,
        status: TaskStatus,
        op: &'static str,
    },
    #[error("task {0} is not interruptible")]
    NotInterruptible(TaskId),
    #[error("priority {0} is outside 0..=100")]
    PriorityOutOfRange(u8),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
}

fn fmt_cycle(ids: &[TaskId]) -> String {
    ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" -> ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Pending,
    Scheduled,
    Interrupted,
    Executing,
}

/// A timer firing: the template that fired, the fresh instance, and the due
/// tick it was fired for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Firing {
    pub template: TaskId,
    pub instance: TaskId,
    pub due: Tick,
}

/// Immutable copy of task memory handed to adapters and dumps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemorySnapshot {
    pub pending: Vec<TaskRecord>,
    pub scheduled: Vec<TaskRecord>,
    pub interrupted: Vec<TaskRecord>,
    pub executing: Vec<TaskRecord>,
    pub counts: BTreeMap<TaskStatus, usize>,
}

impl MemorySnapshot {
    pub fn live_count(&self) -> usize {
        self.pending.len() + self.scheduled.len() + self.interrupted.len() + self.executing.len()
    }

    /// One line per task, split by split, in the trace's line format.
    pub fn dump_lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (split, tasks) in [
            ("pending", &self.pending),
            ("scheduled", &self.scheduled),
            ("interrupted", &self.interrupted),
            ("executing", &self.executing),
        ] {
            for t in tasks {
                out.push(json::render(&json!({
                    "split": split,
                    "task": t.id.to_string(),
                    "label": t.label,
                    "kind": t.kind,
                    "status": t.status,
                    "priority": t.priority,
                    "category": t.category,
                    "situation": t.situation,
                    "deps": t.deps.iter().map(|d| d.to_string()).collect::<Vec<_>>(),
                    "resume_context": t.resume_context,
                    "created_at": t.created_at.0,
                })));
            }
        }
        let counts: BTreeMap<&str, usize> = self.counts.iter().map(|(s, n)| (s.as_str(), *n)).collect();
        out.push(json::render(&json!({"split": "counts", "counts": counts})));
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct TaskMemory {
    tasks: BTreeMap<TaskId, TaskRecord>,
    pending: BTreeSet<TaskId>,
    scheduled: BTreeSet<TaskId>,
    interrupted: BTreeSet<TaskId>,
    executing: BTreeSet<TaskId>,
    dependents: BTreeMap<TaskId, BTreeSet<TaskId>>,
}

impl TaskMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: TaskId) -> Option<&TaskRecord> {
        self.tasks.get(&id)
    }

    pub(crate) fn get_mut(&mut self, id: TaskId) -> Option<&mut TaskRecord> {
        self.tasks.get_mut(&id)
    }

    pub fn task(&self, id: TaskId) -> Result<&TaskRecord, TaskError> {
        self.tasks.get(&id).ok_or(TaskError::UnknownTask(id))
    }

    pub fn all(&self) -> impl Iterator<Item = &TaskRecord> {
        self.tasks.values()
    }

    pub fn created(&self) -> usize {
        self.tasks.len()
    }

    pub fn split_of(&self, id: TaskId) -> Option<Split> {
        if self.pending.contains(&id) {
            Some(Split::Pending)
        } else if self.scheduled.contains(&id) {
            Some(Split::Scheduled)
        } else if self.interrupted.contains(&id) {
            Some(Split::Interrupted)
        } else if self.executing.contains(&id) {
            Some(Split::Executing)
        } else {
            None
        }
    }

    pub fn executing(&self) -> impl Iterator<Item = &TaskRecord> {
        self.executing.iter().map(|id| &self.tasks[id])
    }

    pub fn interrupted(&self) -> impl Iterator<Item = &TaskRecord> {
        self.interrupted.iter().map(|id| &self.tasks[id])
    }

    pub fn pending(&self) -> impl Iterator<Item = &TaskRecord> {
        self.pending.iter().map(|id| &self.tasks[id])
    }

    pub fn scheduled(&self) -> impl Iterator<Item = &TaskRecord> {
        self.scheduled.iter().map(|id| &self.tasks[id])
    }

    /// Live tasks that are not timer templates.
    pub fn live_work(&self) -> usize {
        self.pending.len() + self.interrupted.len() + self.executing.len()
    }

    /// Adds a task. Records carrying a schedule become timer templates in the
    /// scheduled split; everything else lands in pending.
    pub fn insert(&mut self, mut record: TaskRecord) -> Result<TaskId, TaskError> {
        let id = record.id;
        if self.tasks.contains_key(&id) {
            return Err(TaskError::DuplicateId(id));
        }
        if record.priority > 100 {
            return Err(TaskError::PriorityOutOfRange(record.priority));
        }
        if record.deps.contains(&id) {
            return Err(TaskError::Cycle(vec![id, id]));
        }
        for dep in &record.deps {
            if !self.tasks.contains_key(dep) {
                return Err(TaskError::UnknownDependency { task: id, dep: *dep });
            }
        }
        if let Some(s) = &record.schedule {
            s.validate().map_err(TaskError::InvalidSchedule)?;
        }
        let doomed = record
            .deps
            .iter()
            .any(|d| matches!(self.tasks[d].status, TaskStatus::Failed | TaskStatus::Cancelled));
        record.resume_context.clear();
        record.status = if record.status == TaskStatus::Ready {
            TaskStatus::Ready
        } else {
            TaskStatus::Pending
        };
        for dep in &record.deps {
            self.dependents.entry(*dep).or_default().insert(id);
        }
        let templ = record.is_template();
        self.tasks.insert(id, record);
        if templ {
            self.scheduled.insert(id);
        } else {
            self.pending.insert(id);
        }
        if doomed {
            let at = self.tasks[&id].created_at;
            self.finalize(id, Outcome::Cancelled, at)?;
        }
        Ok(id)
    }

    /// Adds `task -> dep` (task waits for dep), rejecting edges that would
    /// close a cycle.
    pub fn add_dependency(&mut self, task: TaskId, dep: TaskId) -> Result<(), TaskError> {
        self.task(task)?;
        if !self.tasks.contains_key(&dep) {
            return Err(TaskError::UnknownDependency { task, dep });
        }
        if task == dep {
            return Err(TaskError::Cycle(vec![task, task]));
        }
        if let Some(path) = self.dep_path(dep, task) {
            let mut cycle = vec![task];
            cycle.extend(path);
            return Err(TaskError::Cycle(cycle));
        }
        self.tasks.get_mut(&task).expect("checked").deps.insert(dep);
        self.dependents.entry(dep).or_default().insert(task);
        Ok(())
    }

    /// Path from `from` to `to` following dependency edges, if any.
    fn dep_path(&self, from: TaskId, to: TaskId) -> Option<Vec<TaskId>> {
        let mut stack = vec![(from, vec![from])];
        let mut seen = BTreeSet::new();
        while let Some((node, path)) = stack.pop() {
            if node == to {
                return Some(path);
            }
            if !seen.insert(node) {
                continue;
            }
            for d in self.tasks[&node].deps.iter().rev() {
                let mut p = path.clone();
                p.push(*d);
                stack.push((*d, p));
            }
        }
        None
    }

    /// Fires every template whose due tick is at or before `now`, once per
    /// due tick, instantiating a fresh ready task for each.
    pub fn trigger_scheduled(&mut self, now: Tick, ids: &mut IdAllocator) -> Vec<Firing> {
        let mut firings = Vec::new();
        let templates: Vec<TaskId> = self.scheduled.iter().copied().collect();
        for tid in templates {
            loop {
                let due = match self.tasks[&tid].schedule.as_ref().and_then(|s| s.next_due()) {
                    Some(due) if due <= now => due,
                    _ => break,
                };
                let template = self.tasks.get_mut(&tid).expect("template exists");
                let spec = template.schedule.as_mut().expect("template has schedule");
                spec.fired += 1;
                spec.last_fired = Some(due);

                let mut inst = template.clone();
                inst.id = ids.task();
                inst.kind = TaskKind::Scheduled;
                inst.status = TaskStatus::Ready;
                inst.schedule = None;
                inst.template = Some(tid);
                inst.created_at = now;
                inst.exec = Execution::default();
                let instance = inst.id;
                self.insert(inst).expect("instance of a valid template inserts");
                firings.push(Firing {
                    template: tid,
                    instance,
                    due,
                });
            }
            let exhausted = self.tasks[&tid]
                .schedule
                .as_ref()
                .is_some_and(|s| s.next_due().is_none());
            if exhausted {
                self.finalize(tid, Outcome::Completed, now).expect("live template");
            }
        }
        firings
    }

    pub fn deps_met(&self, t: &TaskRecord) -> bool {
        t.deps.iter().all(|d| self.tasks[d].status == TaskStatus::Completed)
    }

    /// Tasks that can be dispatched right now: pending, ready or interrupted,
    /// all dependencies completed, ordered for greedy dispatch.
    pub fn executable_set(&self, _now: Tick) -> Vec<&TaskRecord> {
        let mut out: Vec<&TaskRecord> = self
            .pending
            .iter()
            .chain(self.interrupted.iter())
            .map(|id| &self.tasks[id])
            .filter(|t| self.deps_met(t))
            .collect();
        out.sort_by_key(|t| t.dispatch_key());
        out
    }

    fn take_from_split(&mut self, id: TaskId) {
        self.pending.remove(&id);
        self.scheduled.remove(&id);
        self.interrupted.remove(&id);
        self.executing.remove(&id);
    }

    /// Moves a pending, ready or interrupted task into execution.
    pub fn start(&mut self, id: TaskId, now: Tick) -> Result<(), TaskError> {
        let status = self.task(id)?.status;
        if !matches!(
            status,
            TaskStatus::Pending | TaskStatus::Ready | TaskStatus::Interrupted
        ) || self.tasks[&id].is_template()
        {
            return Err(TaskError::InvalidState {
                task: id,
                status,
                op: "start",
            });
        }
        self.take_from_split(id);
        self.executing.insert(id);
        let t = self.tasks.get_mut(&id).expect("checked");
        t.status = TaskStatus::Executing;
        t.exec.started_at = Some(now);
        t.exec.first_dispatched_at.get_or_insert(now);
        Ok(())
    }

    /// Suspends an executing task, keeping the sub-steps it already finished.
    pub fn mark_interrupted(&mut self, id: TaskId, resume_context: Vec<String>, now: Tick) -> Result<(), TaskError> {
        let t = self.task(id)?;
        if t.status != TaskStatus::Executing {
            return Err(TaskError::InvalidState {
                task: id,
                status: t.status,
                op: "interrupt",
            });
        }
        if !t.interruptible {
            return Err(TaskError::NotInterruptible(id));
        }
        self.take_from_split(id);
        self.interrupted.insert(id);
        let t = self.tasks.get_mut(&id).expect("checked");
        t.status = TaskStatus::Interrupted;
        t.resume_context = resume_context;
        t.exec.elapsed_before = t.exec.elapsed(now);
        t.exec.started_at = None;
        t.exec.outstanding = None;
        Ok(())
    }

    /// Sets an absorbing status. Failure or cancellation cascades to every
    /// transitive dependent, which is cancelled. Returns the cascaded ids.
    pub fn finalize(&mut self, id: TaskId, outcome: Outcome, now: Tick) -> Result<Vec<TaskId>, TaskError> {
        let t = self.task(id)?;
        if t.status.is_terminal() {
            return Err(TaskError::InvalidState {
                task: id,
                status: t.status,
                op: "finalize",
            });
        }
        self.close(id, outcome.into(), now);
        let mut cascaded = Vec::new();
        if outcome != Outcome::Completed {
            let mut stack: Vec<TaskId> = self
                .dependents
                .get(&id)
                .map(|s| s.iter().rev().copied().collect())
                .unwrap_or_default();
            while let Some(d) = stack.pop() {
                if self.tasks[&d].status.is_terminal() {
                    continue;
                }
                self.close(d, TaskStatus::Cancelled, now);
                cascaded.push(d);
                if let Some(next) = self.dependents.get(&d) {
                    stack.extend(next.iter().rev().copied());
                }
            }
        }
        Ok(cascaded)
    }

    fn close(&mut self, id: TaskId, status: TaskStatus, now: Tick) {
        self.take_from_split(id);
        let t = self.tasks.get_mut(&id).expect("known task");
        if t.exec.started_at.is_some() {
            t.exec.elapsed_before = t.exec.elapsed(now);
            t.exec.started_at = None;
        }
        t.status = status;
        t.resume_context.clear();
        t.exec.outstanding = None;
        t.ended_at = Some(now);
    }

    pub fn counts(&self) -> BTreeMap<TaskStatus, usize> {
        let mut counts = BTreeMap::new();
        for t in self.tasks.values() {
            *counts.entry(t.status).or_insert(0) += 1;
        }
        counts
    }

    pub fn snapshot(&self) -> MemorySnapshot {
        let grab = |s: &BTreeSet<TaskId>| s.iter().map(|id| self.tasks[id].clone()).collect();
        MemorySnapshot {
            pending: grab(&self.pending),
            scheduled: grab(&self.scheduled),
            interrupted: grab(&self.interrupted),
            executing: grab(&self.executing),
            counts: self.counts(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::Predicate;

    fn mem() -> (TaskMemory, IdAllocator) {
        (TaskMemory::new(), IdAllocator::new())
    }

    fn task(ids: &mut IdAllocator, p: u8, at: u64) -> TaskRecord {
        TaskRecord::new(ids.task(), TaskKind::Passive, "t", Tick(at)).with_priority(p)
    }

    #[test]
    fn active_task_lands_in_pending() {
        let (mut m, mut ids) = mem();
        let mut t = TaskRecord::new(ids.task(), TaskKind::Active, "pick up waste paper", Tick(0));
        t.category = Category::CleanDebris;
        t.situation = Some("office desk".into());
        let id = m.insert(t).unwrap();
        assert_eq!(m.split_of(id), Some(Split::Pending));
        assert_eq!(m.snapshot().pending.len(), 1);
    }

    #[test]
    fn self_dependency_is_a_cycle() {
        let (mut m, mut ids) = mem();
        let id = ids.task();
        let t = TaskRecord::new(id, TaskKind::Passive, "x", Tick(0)).with_deps([id]);
        assert_eq!(m.insert(t), Err(TaskError::Cycle(vec![id, id])));
        assert_eq!(m.created(), 0);
    }

    #[test]
    fn unknown_dependency_rejected() {
        let (mut m, mut ids) = mem();
        let t = task(&mut ids, 50, 0).with_deps([TaskId(99)]);
        assert!(matches!(m.insert(t), Err(TaskError::UnknownDependency { .. })));
    }

    #[test]
    fn closing_edge_names_the_cycle() {
        let (mut m, mut ids) = mem();
        let a = m.insert(task(&mut ids, 50, 0)).unwrap();
        let b = m.insert(task(&mut ids, 50, 0).with_deps([a])).unwrap();
        let c = m.insert(task(&mut ids, 50, 0).with_deps([b])).unwrap();
        assert_eq!(m.add_dependency(a, c), Err(TaskError::Cycle(vec![a, c, b, a])));
    }

    #[test]
    fn chain_exposes_only_its_root() {
        // A depends on B depends on C: only C is free of unmet deps.
        let (mut m, mut ids) = mem();
        let c = m.insert(task(&mut ids, 50, 0)).unwrap();
        let b = m.insert(task(&mut ids, 50, 0).with_deps([c])).unwrap();
        let _a = m.insert(task(&mut ids, 50, 0).with_deps([b])).unwrap();
        let ready: Vec<TaskId> = m.executable_set(Tick(0)).iter().map(|t| t.id).collect();
        assert_eq!(ready, vec![c]);
    }

    #[test]
    fn executable_order_is_priority_then_fifo() {
        let (mut m, mut ids) = mem();
        assert!(m.executable_set(Tick(0)).is_empty());
        let low = m.insert(task(&mut ids, 40, 0)).unwrap();
        let high = m.insert(task(&mut ids, 70, 1)).unwrap();
        let tie = m.insert(task(&mut ids, 40, 1)).unwrap();
        let order: Vec<TaskId> = m.executable_set(Tick(1)).iter().map(|t| t.id).collect();
        assert_eq!(order, vec![high, low, tie]);
    }

    fn template(ids: &mut IdAllocator, mode: ScheduleMode, at: u64) -> TaskRecord {
        let mut t = TaskRecord::new(ids.task(), TaskKind::Scheduled, "weather broadcast", Tick(at));
        t.schedule = Some(ScheduleSpec::new(mode, Tick(at)));
        t
    }

    #[test]
    fn recurring_timer_counts_by_enumeration() {
        let (mut m, mut ids) = mem();
        m.insert(template(
            &mut ids,
            ScheduleMode::Every {
                period: 10,
                start: None,
                end: None,
            },
            0,
        ))
        .unwrap();
        let mut fired = Vec::new();
        for t in 0..=35 {
            fired.extend(m.trigger_scheduled(Tick(t), &mut ids).into_iter().map(|f| f.due.0));
        }
        // direct enumeration of due ticks in [0, 35]
        let expected: Vec<u64> = (0..=35).filter(|t| t % 10 == 0).collect();
        assert_eq!(fired, expected);
        assert_eq!(fired.len(), 35 / 10 + 1);
    }

    #[test]
    fn one_shot_not_due_and_fires_once() {
        let (mut m, mut ids) = mem();
        m.insert(template(&mut ids, ScheduleMode::At { tick: Tick(5) }, 0))
            .unwrap();
        assert!(m.trigger_scheduled(Tick(4), &mut ids).is_empty());
        assert_eq!(m.trigger_scheduled(Tick(5), &mut ids).len(), 1);
        assert!(m.trigger_scheduled(Tick(6), &mut ids).is_empty());
        // the exhausted template is closed, the instance is live
        assert_eq!(m.snapshot().scheduled.len(), 0);
        assert_eq!(m.snapshot().pending.len(), 1);
        assert_eq!(m.snapshot().pending[0].status, TaskStatus::Ready);
    }

    #[test]
    fn zero_period_rejected() {
        let (mut m, mut ids) = mem();
        let t = template(
            &mut ids,
            ScheduleMode::Every {
                period: 0,
                start: None,
                end: None,
            },
            0,
        );
        assert!(matches!(m.insert(t), Err(TaskError::InvalidSchedule(_))));
    }

    #[test]
    fn interrupt_round_trips_resume_context() {
        let (mut m, mut ids) = mem();
        let id = m.insert(task(&mut ids, 30, 0)).unwrap();
        m.start(id, Tick(1)).unwrap();
        m.mark_interrupted(id, vec!["navigate".into()], Tick(4)).unwrap();
        assert_eq!(m.split_of(id), Some(Split::Interrupted));
        assert_eq!(m.get(id).unwrap().resume_context, vec!["navigate".to_string()]);
        assert_eq!(m.get(id).unwrap().exec.elapsed_before, 3);
        m.start(id, Tick(9)).unwrap();
        assert_eq!(m.get(id).unwrap().resume_context, vec!["navigate".to_string()]);
    }

    #[test]
    fn interrupting_terminal_or_pinned_tasks_fails() {
        let (mut m, mut ids) = mem();
        let id = m.insert(task(&mut ids, 30, 0)).unwrap();
        m.start(id, Tick(0)).unwrap();
        m.finalize(id, Outcome::Completed, Tick(2)).unwrap();
        assert!(matches!(
            m.mark_interrupted(id, vec![], Tick(3)),
            Err(TaskError::InvalidState { .. })
        ));
        let mut t = task(&mut ids, 30, 0);
        t.interruptible = false;
        let id = m.insert(t).unwrap();
        m.start(id, Tick(0)).unwrap();
        assert_eq!(
            m.mark_interrupted(id, vec![], Tick(1)),
            Err(TaskError::NotInterruptible(id))
        );
    }

    #[test]
    fn double_finalize_and_split_exclusivity() {
        let (mut m, mut ids) = mem();
        let id = m.insert(task(&mut ids, 30, 0)).unwrap();
        m.finalize(id, Outcome::Completed, Tick(1)).unwrap();
        assert!(m.finalize(id, Outcome::Failed, Tick(2)).is_err());
        assert_eq!(m.split_of(id), None);
        assert_eq!(m.snapshot().live_count(), 0);
    }

    #[test]
    fn failure_cascades_to_dependents() {
        let (mut m, mut ids) = mem();
        let a = m.insert(task(&mut ids, 50, 0)).unwrap();
        let b = m.insert(task(&mut ids, 50, 0).with_deps([a])).unwrap();
        let c = m.insert(task(&mut ids, 50, 0).with_deps([b])).unwrap();
        let cascaded = m.finalize(a, Outcome::Failed, Tick(3)).unwrap();
        assert_eq!(cascaded, vec![b, c]);
        assert_eq!(m.get(c).unwrap().status, TaskStatus::Cancelled);
        // a late dependent of a failed task is cancelled on arrival
        let d = m.insert(task(&mut ids, 50, 4).with_deps([a])).unwrap();
        assert_eq!(m.get(d).unwrap().status, TaskStatus::Cancelled);
    }

    #[test]
    fn postcondition_gets_default_deadline() {
        let mut ids = IdAllocator::new();
        let t = task(&mut ids, 50, 0).with_postcondition(Predicate::Flag { flag: "x".into() });
        assert_eq!(t.deadline_ticks, Some(DEFAULT_DEADLINE));
    }
}
