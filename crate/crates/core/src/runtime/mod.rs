//! The runtime loop: logical clock, injection queue, identifier allocation,
//! and the fixed per-tick phase order that drives every other module.

mod event;
mod intents;

pub use event::{EventKind, RuntimeEvent, Trace};
pub use intents::{InstructionInterpreter, Intent, Interpretation, ScriptedInterpreter, TaskTemplate, FALLBACK_REPLY};

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::ids::{CommandId, IdAllocator, TaskId, Tick};
use crate::memory::{
    assemble_context, ContextConfig, EventHistory, EventSource, LexicalRetriever, Predicate, PredicateError, Retriever,
    SceneGraph, Truth,
};
use crate::perception::{
    check_completion, Completion, PerceiverAdapter, PerceptionModule, Proposal, ScriptedPerceiver, SequenceError,
    VisualMemoryConfig, DEFAULT_DEDUPE_TTL,
};
use crate::planner::{evaluate_priority, plan, EvalRequest, Evaluator, PlannerConfig, RubricEvaluator};
use crate::tasks::{
    Outcome, Outstanding, ScheduleMode, ScheduleSpec, Step, TaskError, TaskKind, TaskMemory, TaskRecord, TaskStatus,
    DEFAULT_DEADLINE,
};
use crate::tools::{
    default_deny_list, validate_manipulation, ArgValue, Command, Mutation, RegistryError, RejectReason, Rejection,
    ToolRegistry, ToolSpec, WorldDef, WorldError, WorldState, IOT, MANIPULATION, NAVIGATION,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RuntimeConfig {
    #[serde(skip)]
    pub seed: u64,
    pub frames_per_tick: u32,
    pub planner: PlannerConfig,
    pub context: ContextConfig,
    pub memory: VisualMemoryConfig,
    pub dedupe_ttl: u64,
    /// Re-issues of a step whose effect never showed up.
    pub max_retries: u32,
    /// Priority at or above which work counts as urgent.
    pub urgent_threshold: u8,
    pub deny_list: BTreeSet<String>,
    pub default_deadline: u64,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            seed: 0,
            frames_per_tick: 1,
            planner: PlannerConfig::default(),
            context: ContextConfig::default(),
            memory: VisualMemoryConfig::default(),
            dedupe_ttl: DEFAULT_DEDUPE_TTL,
            max_retries: 2,
            urgent_threshold: 70,
            deny_list: default_deny_list(),
            default_deadline: DEFAULT_DEADLINE,
        }
    }
}

impl RuntimeConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.frames_per_tick == 0 {
            issues.push("config.frames_per_tick must be at least 1".to_string());
        }
        if let Err(e) = self.planner.validate() {
            issues.push(format!("config.planner: {e}"));
        }
        if let Err(e) = self.memory.validate() {
            issues.push(format!("config.memory: {e}"));
        }
        if self.context.top_k == 0 {
            issues.push("config.context.top_k must be at least 1".to_string());
        }
        issues
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuntimeError {
    #[error("runtime is halted")]
    Halted,
    #[error("instruction text is empty")]
    EmptyInstruction,
    #[error("tick {at} is in the past (now {now})")]
    InPast { at: Tick, now: Tick },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Task(#[from] TaskError),
}

/// Something queued for delivery at the start of a tick.
#[derive(Debug, Clone, PartialEq)]
pub enum Injection {
    Instruction {
        task: TaskId,
        text: String,
    },
    Task {
        task: TaskId,
        kind: TaskKind,
        template: TaskTemplate,
        deps: Vec<TaskId>,
    },
    Disturbance(Mutation),
    Command {
        tool: String,
        op: String,
        args: BTreeMap<String, ArgValue>,
    },
    Schedule {
        template: TaskTemplate,
        mode: ScheduleMode,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RngState {
    pub seed: u64,
    pub position: u128,
}

pub struct RuntimeBuilder {
    config: RuntimeConfig,
    world: WorldDef,
    registry: ToolRegistry,
    perceiver: Option<Box<dyn PerceiverAdapter>>,
    evaluator: Option<Box<dyn Evaluator>>,
    interpreter: Option<Box<dyn InstructionInterpreter>>,
    retriever: Option<Box<dyn Retriever>>,
}

impl RuntimeBuilder {
    pub fn new(world: WorldDef) -> Self {
        RuntimeBuilder {
            config: RuntimeConfig::default(),
            world,
            registry: ToolRegistry::with_builtins(),
            perceiver: None,
            evaluator: None,
            interpreter: None,
            retriever: None,
        }
    }

    pub fn config(mut self, config: RuntimeConfig) -> Self {
        self.config = config;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.config.seed = seed;
        self
    }

    pub fn registry(mut self, registry: ToolRegistry) -> Self {
        self.registry = registry;
        self
    }

    pub fn perceiver(mut self, p: Box<dyn PerceiverAdapter>) -> Self {
        self.perceiver = Some(p);
        self
    }

    pub fn evaluator(mut self, e: Box<dyn Evaluator>) -> Self {
        self.evaluator = Some(e);
        self
    }

    pub fn interpreter(mut self, i: Box<dyn InstructionInterpreter>) -> Self {
        self.interpreter = Some(i);
        self
    }

    pub fn retriever(mut self, r: Box<dyn Retriever>) -> Self {
        self.retriever = Some(r);
        self
    }

    pub fn build(self) -> Result<Runtime, RuntimeError> {
        let issues = self.config.validate();
        if !issues.is_empty() {
            return Err(RuntimeError::Config(issues.join("; ")));
        }
        self.registry.check_mandatory()?;
        let world = WorldState::from_def(&self.world)?;
        let graph = SceneGraph::new(world.rooms().iter().cloned()).with_catalogue(world.object_ids().cloned());
        let seed = self.config.seed;
        let perceiver = self
            .perceiver
            .unwrap_or_else(|| Box::new(ScriptedPerceiver::with_defaults(seed)));
        let perception = PerceptionModule::new(self.config.memory, perceiver, self.config.dedupe_ttl);
        let evaluator = self.evaluator.unwrap_or_else(|| {
            Box::new(RubricEvaluator {
                rubric: self.config.planner.rubric.clone(),
            })
        });
        Ok(Runtime {
            now: Tick::ZERO,
            halted: false,
            ids: IdAllocator::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            world,
            registry: self.registry,
            tasks: TaskMemory::new(),
            graph,
            history: EventHistory::new(),
            perception,
            evaluator,
            interpreter: self
                .interpreter
                .unwrap_or_else(|| Box::new(ScriptedInterpreter::default())),
            retriever: self.retriever.unwrap_or_else(|| Box::new(LexicalRetriever)),
            trace: Vec::new(),
            queue: BTreeMap::new(),
            delivery: BTreeMap::new(),
            frame_index: 0,
            config: self.config,
        })
    }
}

pub struct Runtime {
    config: RuntimeConfig,
    now: Tick,
    halted: bool,
    ids: IdAllocator,
    rng: ChaCha8Rng,
    world: WorldState,
    registry: ToolRegistry,
    tasks: TaskMemory,
    graph: SceneGraph,
    history: EventHistory,
    perception: PerceptionModule,
    evaluator: Box<dyn Evaluator>,
    interpreter: Box<dyn InstructionInterpreter>,
    retriever: Box<dyn Retriever>,
    trace: Vec<RuntimeEvent>,
    queue: BTreeMap<Tick, Vec<Injection>>,
    /// Delivery tick of every task id handed out before it exists.
    delivery: BTreeMap<TaskId, Tick>,
    frame_index: u64,
}

/// What the default completion predicate of a step is, given its command.
pub fn step_effect(step: &Step, command: Option<CommandId>) -> Option<Predicate> {
    if let Some(u) = &step.until {
        return Some(u.clone());
    }
    let text = |k: &str| step.args.get(k).and_then(ArgValue::as_text).map(str::to_string);
    let builtin = match (step.tool.as_str(), step.op.as_str()) {
        (NAVIGATION, "go_to") => text("room").map(|room| Predicate::RobotIn { room }),
        (MANIPULATION, "grasp") => text("object").map(|object| Predicate::Held { object }),
        (MANIPULATION, "place") => match (text("object"), text("target"), text("relation")) {
            (Some(subject), Some(object), Some(rel)) => {
                serde_json::from_value(Value::String(rel))
                    .ok()
                    .map(|relation| Predicate::Relation {
                        subject,
                        relation,
                        object,
                    })
            }
            _ => None,
        },
        (MANIPULATION, "photo") => text("object").map(|o| Predicate::Flag {
            flag: format!("photo:{o}"),
        }),
        (IOT, "set_device") => text("device").map(|device| Predicate::DeviceState {
            device,
            power: step.args.get("power").and_then(ArgValue::as_bool),
            level: None,
        }),
        (IOT, "set_level") => text("device").map(|device| Predicate::DeviceState {
            device,
            power: None,
            level: step.args.get("level").and_then(ArgValue::as_int),
        }),
        _ => None,
    };
    builtin.or_else(|| {
        command.map(|c| Predicate::Flag {
            flag: format!("done:{c}"),
        })
    })
}

/// Steps with a world effect can be checked again on resume. One-off acts
/// (speech, web calls, custom ops) cannot, so finishing them once counts.
fn has_world_effect(step: &Step) -> bool {
    step.until.is_some() || step_effect(step, None).is_some()
}

enum StepState {
    Issue(usize),
    Wait,
    AllDone,
    Fail(String),
}

impl Runtime {
    pub fn config(&self) -> &RuntimeConfig {
        &self.config
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    pub fn tasks(&self) -> &TaskMemory {
        &self.tasks
    }

    pub fn graph(&self) -> &SceneGraph {
        &self.graph
    }

    pub fn history(&self) -> &EventHistory {
        &self.history
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn registry(&self) -> &ToolRegistry {
        &self.registry
    }

    pub fn perception(&self) -> &PerceptionModule {
        &self.perception
    }

    pub fn events(&self) -> &[RuntimeEvent] {
        &self.trace
    }

    pub fn rng_state(&self) -> RngState {
        RngState {
            seed: self.config.seed,
            position: self.rng.get_word_pos(),
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn delivery_tick(&self, at: Tick) -> Result<Tick, RuntimeError> {
        if self.halted {
            return Err(RuntimeError::Halted);
        }
        if at < self.now {
            return Err(RuntimeError::InPast { at, now: self.now });
        }
        Ok(at.max(self.now.plus(1)))
    }

    fn enqueue(&mut self, at: Tick, inj: Injection) -> Result<Tick, RuntimeError> {
        let due = self.delivery_tick(at)?;
        self.queue.entry(due).or_default().push(inj);
        Ok(due)
    }

    /// Queues a user instruction. The task id is allocated right away; the
    /// task itself appears when the instruction is delivered.
    pub fn submit_instruction(&mut self, text: &str, at: Tick) -> Result<TaskId, RuntimeError> {
        if text.trim().is_empty() {
            return Err(RuntimeError::EmptyInstruction);
        }
        let due = self.delivery_tick(at)?;
        let task = self.ids.task();
        self.delivery.insert(task, due);
        self.enqueue(
            at,
            Injection::Instruction {
                task,
                text: text.to_string(),
            },
        )?;
        Ok(task)
    }

    /// Queues a fully specified task, bypassing the interpreter.
    pub fn submit_task(
        &mut self,
        kind: TaskKind,
        template: TaskTemplate,
        deps: Vec<TaskId>,
        at: Tick,
    ) -> Result<TaskId, RuntimeError> {
        let due = self.delivery_tick(at)?;
        let task = self.ids.task();
        for d in &deps {
            let known_by = self
                .delivery
                .get(d)
                .copied()
                .or_else(|| self.tasks.get(*d).map(|_| Tick::ZERO));
            if !known_by.is_some_and(|t| t <= due) {
                return Err(TaskError::UnknownDependency { task, dep: *d }.into());
            }
        }
        self.delivery.insert(task, due);
        self.enqueue(
            at,
            Injection::Task {
                task,
                kind,
                template,
                deps,
            },
        )?;
        Ok(task)
    }

    pub fn inject_disturbance(&mut self, mutation: Mutation, at: Tick) -> Result<Tick, RuntimeError> {
        self.enqueue(at, Injection::Disturbance(mutation))
    }

    /// Queues a command that belongs to no task, as an operator would send.
    pub fn inject_command(
        &mut self,
        tool: &str,
        op: &str,
        args: BTreeMap<String, ArgValue>,
        at: Tick,
    ) -> Result<Tick, RuntimeError> {
        self.enqueue(
            at,
            Injection::Command {
                tool: tool.into(),
                op: op.into(),
                args,
            },
        )
    }

    pub fn schedule(&mut self, template: TaskTemplate, mode: ScheduleMode, at: Tick) -> Result<Tick, RuntimeError> {
        self.enqueue(at, Injection::Schedule { template, mode })
    }

    /// Registers a timer template immediately, relative to the current tick.
    pub fn register_schedule(&mut self, template: TaskTemplate, mode: ScheduleMode) -> Result<TaskId, RuntimeError> {
        let id = self.ids.task();
        let mut rec = self.build_task(id, TaskKind::Scheduled, &template, None);
        let spec = ScheduleSpec::new(mode, self.now);
        spec.validate().map_err(TaskError::InvalidSchedule)?;
        rec.schedule = Some(spec);
        self.tasks.insert(rec)?;
        Ok(id)
    }

    pub fn register_tool(&mut self, spec: ToolSpec) -> Result<(), RuntimeError> {
        if self.halted {
            return Err(RuntimeError::Halted);
        }
        self.registry.register(spec)?;
        Ok(())
    }

    /// No live work, no motions in flight, nothing queued.
    pub fn is_quiescent(&self) -> bool {
        self.tasks.live_work() == 0
            && self.tasks.scheduled().next().is_none()
            && !self.world.has_motions()
            && self.queue.is_empty()
    }

    pub fn halt(&mut self) -> Trace {
        self.halted = true;
        Trace::new(self.trace.clone())
    }

    pub fn trace(&self) -> Trace {
        Trace::new(self.trace.clone())
    }

    /// Runs `n` ticks and returns the events they produced.
    pub fn advance(&mut self, n: u64) -> Result<Vec<RuntimeEvent>, RuntimeError> {
        if self.halted {
            return Err(RuntimeError::Halted);
        }
        let start = self.trace.len();
        for _ in 0..n {
            self.tick()?;
        }
        Ok(self.trace[start..].to_vec())
    }

    /// Advances until quiescent or `max` ticks have passed. Returns ticks run.
    pub fn run_until_quiescent(&mut self, max: u64) -> Result<u64, RuntimeError> {
        let mut n = 0;
        while n < max && !self.is_quiescent() {
            self.advance(1)?;
            n += 1;
        }
        Ok(n)
    }

    fn emit(&mut self, kind: EventKind, payload: Value) {
        let seq = self.trace.len() as u64;
        self.trace.push(RuntimeEvent {
            seq,
            time: self.now,
            kind,
            payload,
        });
    }

    fn tick(&mut self) -> Result<(), RuntimeError> {
        self.now = self.now.plus(1);
        let now = self.now;
        let mut trigger = false;

        for inj in self.queue.remove(&now).unwrap_or_default() {
            trigger |= self.deliver(inj)?;
        }

        for f in self.tasks.trigger_scheduled(now, &mut self.ids) {
            let t = self.tasks.task(f.instance)?;
            let payload = json!({
                "template": f.template.to_string(),
                "task": f.instance.to_string(),
                "label": t.label,
                "due": f.due.0,
            });
            self.emit(EventKind::TimerFired, payload);
            trigger = true;
        }

        self.world.step();

        for _ in 0..self.config.frames_per_tick {
            trigger |= self.perceive()?;
        }

        let executing: Vec<TaskId> = self.tasks.executing().map(|t| t.id).collect();
        for id in executing {
            trigger |= self.drive(id)?;
        }

        let mut rounds = 0;
        while trigger && rounds < 8 {
            trigger = self.plan_round()?;
            rounds += 1;
        }
        Ok(())
    }

    fn deliver(&mut self, inj: Injection) -> Result<bool, RuntimeError> {
        match inj {
            Injection::Instruction { task, text } => {
                self.delivery.remove(&task);
                self.deliver_instruction(task, &text)?;
                Ok(true)
            }
            Injection::Task {
                task,
                kind,
                template,
                deps,
            } => {
                self.delivery.remove(&task);
                let mut rec = self.build_task(task, kind, &template, None);
                rec.deps = deps.into_iter().collect();
                self.tasks.insert(rec)?;
                let t = self.tasks.task(task)?;
                let payload = json!({
                    "task": task.to_string(),
                    "text": t.description,
                    "label": t.label,
                    "kind": t.kind,
                    "via": "api",
                    "deps": t.deps.iter().map(|d| d.to_string()).collect::<Vec<_>>(),
                });
                self.emit(EventKind::InstructionReceived, payload);
                self.note_cancelled(task);
                Ok(true)
            }
            Injection::Disturbance(m) => {
                self.world.apply_disturbance(&m)?;
                let payload = json!({"mutation": m});
                self.emit(EventKind::DisturbanceApplied, payload);
                Ok(false)
            }
            Injection::Command { tool, op, args } => {
                let cmd = Command {
                    id: self.ids.command(),
                    tool,
                    op,
                    args,
                    task: None,
                    issued_at: self.now,
                };
                Ok(self.issue(cmd, None).is_err())
            }
            Injection::Schedule { template, mode } => {
                self.register_schedule(template, mode)?;
                Ok(false)
            }
        }
    }

    /// Reports a task that was cancelled the moment it was inserted because
    /// one of its dependencies had already failed.
    fn note_cancelled(&mut self, id: TaskId) {
        if let Some(t) = self.tasks.get(id) {
            if t.status == TaskStatus::Cancelled {
                let payload = json!({
                    "task": id.to_string(),
                    "label": t.label,
                    "outcome": "cancelled",
                    "reason": "a dependency had already failed",
                });
                self.emit(EventKind::TaskFailed, payload);
            }
        }
    }

    fn build_task(&self, id: TaskId, kind: TaskKind, t: &TaskTemplate, description: Option<&str>) -> TaskRecord {
        let desc = description
            .map(str::to_string)
            .or_else(|| t.description.clone())
            .unwrap_or_else(|| t.label.clone());
        let mut rec = TaskRecord::new(id, kind, desc, self.now).with_label(t.label.clone());
        rec.category = t.category;
        rec.situation = t.situation.clone();
        rec.steps = t.steps.clone();
        rec.interruptible = t.interruptible;
        if let Some(p) = t.priority {
            rec = rec.with_priority(p);
        }
        if let Some(p) = &t.postcondition {
            rec.deadline_ticks = Some(t.deadline.unwrap_or(self.config.default_deadline));
            rec.postcondition = Some(p.clone());
        } else {
            rec.deadline_ticks = t.deadline;
        }
        rec.resources = self.registry.resources_for(rec.steps.iter().map(|s| s.tool.as_str()));
        rec
    }

    fn deliver_instruction(&mut self, task: TaskId, text: &str) -> Result<(), RuntimeError> {
        let interp = self.interpreter.interpret(text);
        let rec = self.build_task(task, TaskKind::Passive, &interp.task, Some(text));
        let urgent = self.config.planner.rubric.score(&rec) >= self.config.urgent_threshold;
        self.history
            .push(
                self.now,
                self.now,
                format!("user said: {text}"),
                urgent,
                EventSource::InstructionEcho,
            )
            .expect("instruction text is non-empty");
        let label = rec.label.clone();
        self.tasks.insert(rec)?;
        let template = match interp.scheduled {
            Some((tpl, mode)) => Some(self.register_schedule(tpl, mode)?),
            None => None,
        };
        let payload = json!({
            "task": task.to_string(),
            "text": text,
            "label": label,
            "kind": TaskKind::Passive,
            "matched": interp.matched,
            "scheduled": template.map(|t| t.to_string()),
        });
        self.emit(EventKind::InstructionReceived, payload);
        Ok(())
    }

    fn perceive(&mut self) -> Result<bool, RuntimeError> {
        self.frame_index += 1;
        let frame = self.world.render_frame(self.frame_index, self.now);
        let urgent = self
            .tasks
            .executing()
            .any(|t| t.priority >= self.config.urgent_threshold);
        let room = frame.room.clone();
        let classes: BTreeSet<String> = frame.observations.iter().map(|o| o.class.clone()).collect();
        let r = self
            .perception
            .ingest_frame(frame, &mut self.graph, &mut self.history, &self.tasks, urgent)?;
        let payload = json!({
            "frame": self.frame_index,
            "room": room,
            "classes": classes,
            "delta": if r.delta.is_empty() { Value::Null } else { r.delta.to_json() },
        });
        self.emit(EventKind::FrameReady, payload);
        for c in &r.captions {
            let payload = json!({
                "frame": c.frame_index,
                "history_seq": c.history_seq,
                "caption": c.caption,
                "urgent": c.urgent,
                "placeholder": c.placeholder,
            });
            self.emit(EventKind::CaptionRecorded, payload);
        }
        let any = !r.proposals.is_empty();
        for p in r.proposals {
            self.accept_proposal(p)?;
        }
        Ok(any)
    }

    fn accept_proposal(&mut self, p: Proposal) -> Result<(), RuntimeError> {
        let id = self.ids.task();
        let template = TaskTemplate {
            label: p.category.as_str().to_string(),
            description: Some(p.description.clone()),
            category: p.category,
            situation: Some(p.situation.clone()),
            steps: p.steps.clone(),
            postcondition: p.postcondition.clone(),
            interruptible: true,
            priority: None,
            deadline: None,
        };
        let rec = self.build_task(id, TaskKind::Active, &template, None);
        self.tasks.insert(rec)?;
        let payload = json!({
            "task": id.to_string(),
            "label": template.label,
            "category": p.category,
            "situation": p.situation,
            "description": p.description,
            "frame": p.frame_index,
        });
        self.emit(EventKind::ProposalEmitted, payload);
        Ok(())
    }

    fn effect_truth(&self, step: &Step, command: Option<CommandId>) -> Result<Truth, PredicateError> {
        match step_effect(step, command) {
            Some(p) => p.eval(&self.graph),
            None => Ok(Truth::False),
        }
    }

    fn mark_step_done(&mut self, id: TaskId, step_id: String) {
        if let Some(t) = self.tasks.get_mut(id) {
            t.exec.outstanding = None;
            if !t.resume_context.contains(&step_id) {
                t.resume_context.push(step_id);
            }
        }
    }

    /// Works out what an executing task should do next.
    fn next_step(&mut self, id: TaskId) -> StepState {
        loop {
            let Some(t) = self.tasks.get(id) else {
                return StepState::Wait;
            };
            let next = t
                .steps
                .iter()
                .enumerate()
                .find(|(_, s)| !t.resume_context.contains(&s.id))
                .map(|(i, s)| (i, s.clone()));
            let Some((i, step)) = next else {
                return StepState::AllDone;
            };
            if let Some(guard) = &step.when {
                match guard.eval(&self.graph) {
                    Err(e) => return StepState::Fail(format!("step `{}` guard: {e}", step.id)),
                    Ok(Truth::Unknown) => return StepState::Wait,
                    Ok(Truth::False) => {
                        self.mark_step_done(id, step.id.clone());
                        continue;
                    }
                    Ok(Truth::True) => {}
                }
            }
            match self.effect_truth(&step, None) {
                Err(e) => return StepState::Fail(format!("step `{}`: {e}", step.id)),
                Ok(Truth::True) => {
                    self.mark_step_done(id, step.id.clone());
                    continue;
                }
                Ok(_) => return StepState::Issue(i),
            }
        }
    }

    /// Completion check and step progression for one executing task.
    /// Returns true when the task reached a terminal state.
    fn drive(&mut self, id: TaskId) -> Result<bool, RuntimeError> {
        let t = self.tasks.task(id)?;
        if t.status != TaskStatus::Executing {
            return Ok(false);
        }
        match check_completion(&self.graph, t, self.now) {
            Completion::Completed => return self.finish(id, Outcome::Completed, None),
            Completion::Failed(why) => return self.finish(id, Outcome::Failed, Some(why)),
            Completion::StillRunning => {}
        }
        if let Some(out) = t.exec.outstanding.clone() {
            let step = t.steps[out.step].clone();
            match self.effect_truth(&step, Some(out.command)) {
                Err(e) => return self.finish(id, Outcome::Failed, Some(format!("step `{}`: {e}", step.id))),
                Ok(Truth::True) => self.mark_step_done(id, step.id.clone()),
                Ok(_) => {
                    let settled = self.now > out.settle_at && !(out.body && self.world.body_busy());
                    if !settled {
                        return Ok(false);
                    }
                    if out.attempts >= self.config.max_retries {
                        let why = format!(
                            "step `{}` showed no effect after {} attempts",
                            step.id,
                            out.attempts + 1
                        );
                        return self.finish(id, Outcome::Failed, Some(why));
                    }
                    return self.issue_step(id, out.step, out.attempts + 1);
                }
            }
        }
        match self.next_step(id) {
            StepState::Issue(i) => self.issue_step(id, i, 0),
            StepState::Wait => Ok(false),
            StepState::Fail(why) => self.finish(id, Outcome::Failed, Some(why)),
            StepState::AllDone => {
                if self.tasks.task(id)?.postcondition.is_none() {
                    self.finish(id, Outcome::Completed, None)
                } else {
                    Ok(false)
                }
            }
        }
    }

    fn issue_step(&mut self, id: TaskId, step_idx: usize, attempts: u32) -> Result<bool, RuntimeError> {
        let t = self.tasks.task(id)?;
        let step = t.steps[step_idx].clone();
        let cmd = Command {
            id: self.ids.command(),
            tool: step.tool.clone(),
            op: step.op.clone(),
            args: step.args.clone(),
            task: Some(id),
            issued_at: self.now,
        };
        let command = cmd.id;
        match self.issue(cmd, Some((&step.id, attempts))) {
            Ok((body, settle_at)) => {
                let t = self.tasks.get_mut(id).expect("task exists");
                t.exec.outstanding = Some(Outstanding {
                    step: step_idx,
                    command,
                    issued_at: self.now,
                    settle_at,
                    attempts,
                    body,
                });
                Ok(false)
            }
            Err(r) => self.finish(id, Outcome::Failed, Some(format!("command {command} rejected: {r}"))),
        }
    }

    /// Checks and executes a command, emitting `command_issued` or
    /// `command_rejected`. Rejections never touch event history.
    fn issue(&mut self, cmd: Command, step: Option<(&str, u32)>) -> Result<(bool, Tick), Rejection> {
        let checked = self.check_command(&cmd);
        let label = cmd.task.and_then(|t| self.tasks.get(t)).map(|t| t.label.clone());
        let base = json!({
            "command": cmd.id.to_string(),
            "task": cmd.task.map(|t| t.to_string()),
            "label": label,
            "tool": cmd.tool,
            "op": cmd.op,
            "args": cmd.args,
            "step": step.map(|s| s.0),
        });
        match checked {
            Err(r) => {
                let mut payload = base;
                payload["reason"] = json!(r.reason);
                payload["detail"] = json!(r.detail);
                self.emit(EventKind::CommandRejected, payload);
                Err(r)
            }
            Ok((body, duration)) => {
                let outputs = self.world.take_outputs();
                let mut payload = base;
                payload["attempt"] = json!(step.map(|s| s.1).unwrap_or(0));
                payload["output"] = json!(outputs.iter().map(|o| o.text.clone()).collect::<Vec<_>>());
                self.emit(EventKind::CommandIssued, payload);
                Ok((body, self.now.plus(duration)))
            }
        }
    }

    fn check_command(&mut self, cmd: &Command) -> Result<(bool, u64), Rejection> {
        let rooms: BTreeSet<String> = self.world.rooms().iter().cloned().collect();
        let op = self
            .registry
            .schema_check(&cmd.tool, &cmd.op, &cmd.args, &rooms)
            .map_err(|e| Rejection::new(RejectReason::Schema, e.to_string()))?
            .clone();
        validate_manipulation(cmd, &self.graph, &self.config.deny_list)?;
        let body = self
            .registry
            .get(&cmd.tool)
            .is_some_and(|s| s.resources.contains("body"));
        let duration = if (cmd.tool.as_str(), cmd.op.as_str()) == (NAVIGATION, "go_to") {
            let room = cmd.text("room").unwrap_or_default();
            self.world
                .path_to(room)
                .map(|p| p.len() as u64 * crate::tools::HOP_TICKS)
                .unwrap_or(0)
        } else {
            op.duration.unwrap_or(1)
        };
        self.world
            .execute_command(cmd, body, duration)
            .map_err(|e| Rejection::new(RejectReason::Impossible, e.0))?;
        Ok((body, duration))
    }

    fn finish(&mut self, id: TaskId, outcome: Outcome, reason: Option<String>) -> Result<bool, RuntimeError> {
        self.world.abort_task(id);
        let cascaded = self.tasks.finalize(id, outcome, self.now)?;
        let t = self.tasks.task(id)?;
        let (label, category, kind, priority, elapsed) =
            (t.label.clone(), t.category, t.kind, t.priority, t.exec.elapsed_before);
        match outcome {
            Outcome::Completed => {
                let payload = json!({
                    "task": id.to_string(),
                    "label": label,
                    "category": category,
                    "kind": kind,
                    "elapsed": elapsed,
                });
                self.emit(EventKind::TaskCompleted, payload);
            }
            _ => {
                let payload = json!({
                    "task": id.to_string(),
                    "label": label,
                    "outcome": TaskStatus::from(outcome),
                    "reason": reason,
                });
                self.emit(EventKind::TaskFailed, payload);
            }
        }
        let verb = if outcome == Outcome::Completed {
            "completed"
        } else {
            "failed"
        };
        let urgent = priority >= self.config.urgent_threshold;
        self.history
            .push(
                self.now,
                self.now,
                format!("task {id} {label} {verb}"),
                urgent,
                EventSource::PlannerNote,
            )
            .expect("note is non-empty");
        for c in cascaded {
            self.world.abort_task(c);
            let label = self.tasks.task(c)?.label.clone();
            let payload = json!({
                "task": c.to_string(),
                "label": label,
                "outcome": "cancelled",
                "reason": format!("dependency {id} did not complete"),
            });
            self.emit(EventKind::TaskFailed, payload);
        }
        Ok(true)
    }

    fn evaluate_unscored(&mut self) -> Result<Vec<Value>, RuntimeError> {
        let todo: Vec<TaskId> = self
            .tasks
            .executable_set(self.now)
            .into_iter()
            .filter(|t| !t.priority_pinned && !t.evaluated)
            .map(|t| t.id)
            .collect();
        let mut notes = Vec::new();
        for id in todo {
            let snapshot = self.tasks.snapshot();
            let t = self.tasks.task(id)?.clone();
            let bundle = assemble_context(
                &t.description,
                &self.history,
                self.now,
                &self.config.context,
                self.retriever.as_ref(),
            );
            let ev = evaluate_priority(
                self.evaluator.as_mut(),
                &self.config.planner.rubric,
                &EvalRequest {
                    task: &t,
                    context: &bundle,
                    snapshot: &snapshot,
                },
            );
            let rec = self.tasks.get_mut(id).expect("exists");
            rec.priority = ev.score;
            rec.evaluated = true;
            let mut rejected = Vec::new();
            for e in &ev.dependency_edges {
                if e.task != id || self.tasks.add_dependency(e.task, e.depends_on).is_err() {
                    rejected.push(format!("{}->{}", e.task, e.depends_on));
                }
            }
            notes.push(json!({
                "task": id.to_string(),
                "score": ev.score,
                "fallback": ev.fallback,
                "rejected_edges": rejected,
            }));
        }
        Ok(notes)
    }

    /// One planning round. Returns true if a dispatched task finished on
    /// the spot, which frees resources for another round.
    fn plan_round(&mut self) -> Result<bool, RuntimeError> {
        let evaluations = self.evaluate_unscored()?;
        let decision = {
            let executable = self.tasks.executable_set(self.now);
            let executing: Vec<&TaskRecord> = self.tasks.executing().collect();
            plan(&self.config.planner, &executable, &executing, self.now)
        };
        if decision.is_empty() && evaluations.is_empty() {
            return Ok(false);
        }
        let dispatch: Vec<Value> = decision
            .dispatch
            .iter()
            .map(|d| {
                json!({
                    "task": d.task.to_string(),
                    "label": self.tasks.get(d.task).map(|t| t.label.clone()),
                    "priority": d.priority,
                    "tools": d.tools,
                    "resume": d.resume,
                })
            })
            .collect();
        let preempted: Vec<Value> = decision
            .preempted
            .iter()
            .map(|p| json!({"task": p.task.to_string(), "by": p.by.to_string()}))
            .collect();
        let payload = json!({
            "dispatch": dispatch,
            "preempted": preempted,
            "rationale": decision.rationale,
            "evaluations": evaluations,
        });
        self.emit(EventKind::PlanDecided, payload);

        for p in &decision.preempted {
            self.world.abort_task(p.task);
            let ctx = self.tasks.task(p.task)?.resume_context.clone();
            self.tasks.mark_interrupted(p.task, ctx.clone(), self.now)?;
            let t = self.tasks.get_mut(p.task).expect("exists");
            if self.config.planner.reevaluate_on_resume && !t.priority_pinned {
                t.evaluated = false;
            }
            let (label, priority) = (t.label.clone(), t.priority);
            let payload = json!({
                "task": p.task.to_string(),
                "label": label,
                "priority": priority,
                "by": p.by.to_string(),
                "resume_context": ctx,
            });
            self.emit(EventKind::TaskInterrupted, payload);
        }

        let mut finished = false;
        for d in &decision.dispatch {
            let resumed = self.tasks.task(d.task)?.status == TaskStatus::Interrupted;
            self.tasks.start(d.task, self.now)?;
            if resumed {
                let t = self.tasks.task(d.task)?.clone();
                let mut kept = Vec::new();
                let mut dropped = Vec::new();
                for s in t.steps.iter().filter(|s| t.resume_context.contains(&s.id)) {
                    let still = !has_world_effect(s) || matches!(self.effect_truth(s, None), Ok(Truth::True));
                    if still {
                        kept.push(s.id.clone());
                    } else {
                        dropped.push(s.id.clone());
                    }
                }
                self.tasks.get_mut(d.task).expect("exists").resume_context = kept.clone();
                let payload = json!({
                    "task": d.task.to_string(),
                    "label": t.label,
                    "resume_context": kept,
                    "redo": dropped,
                });
                self.emit(EventKind::TaskResumed, payload);
            }
            finished |= self.drive(d.task)?;
        }
        Ok(finished)
    }
}
