//! Ground-truth household simulation that the tool agents act on.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::registry::{Command, IOT, MANIPULATION, NAVIGATION, SPEAKER, WEB};
use crate::ids::{CommandId, TaskId, Tick};
use crate::memory::{Edge, Relation, ROBOT};
use crate::perception::{DeviceReading, Frame, Observation, Placement, RobotReading};

/// Ticks per room-to-room hop.
pub const HOP_TICKS: u64 = 10;
pub const GRASP_TICKS: u64 = 5;
pub const PLACE_TICKS: u64 = 5;
pub const PHOTO_TICKS: u64 = 2;
/// How many objects the two arms can hold at once.
pub const HAND_CAPACITY: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectDef {
    pub id: String,
    pub class: String,
    pub room: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
    #[serde(default)]
    pub position: Option<Placement>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceDef {
    pub id: String,
    pub room: String,
    #[serde(default)]
    pub power: bool,
    #[serde(default)]
    pub level: i64,
    #[serde(default)]
    pub min_level: i64,
    #[serde(default = "default_max_level")]
    pub max_level: i64,
}

fn default_max_level() -> i64 {
    100
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldDef {
    pub rooms: Vec<String>,
    /// Undirected room links. Without any, every pair of rooms is one hop.
    #[serde(default)]
    pub links: Vec<(String, String)>,
    pub robot_room: String,
    #[serde(default)]
    pub objects: Vec<ObjectDef>,
    #[serde(default)]
    pub devices: Vec<DeviceDef>,
    /// Canned answers for the web tool, e.g. `weather`.
    #[serde(default)]
    pub knowledge: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Location {
    Held,
    Room { room: String, placement: Option<Placement> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldObject {
    pub class: String,
    pub attributes: BTreeMap<String, String>,
    pub location: Location,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Device {
    pub room: String,
    pub power: bool,
    pub level: i64,
    pub min_level: i64,
    pub max_level: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Robot {
    pub room: String,
    pub held: Vec<String>,
    pub battery: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum MotionKind {
    Navigate {
        path: VecDeque<String>,
        progress: u64,
    },
    Grasp {
        object: String,
        at: Location,
    },
    Place {
        object: String,
        target: String,
        relation: Relation,
    },
    Photo {
        object: String,
    },
    Device {
        device: String,
        power: Option<bool>,
        level: Option<i64>,
    },
    Flag {
        flag: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Motion {
    command: CommandId,
    task: Option<TaskId>,
    body: bool,
    remaining: u64,
    kind: MotionKind,
}

impl Motion {
    fn pose(&self) -> &'static str {
        match self.kind {
            MotionKind::Navigate { .. } => "navigating",
            MotionKind::Grasp { .. } => "grasping",
            MotionKind::Place { .. } => "placing",
            MotionKind::Photo { .. } => "photographing",
            MotionKind::Device { .. } | MotionKind::Flag { .. } => "working",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutputLine {
    pub command: CommandId,
    pub channel: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorldError {
    #[error("unknown room `{0}`")]
    UnknownRoom(String),
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("unknown device `{0}`")]
    UnknownDevice(String),
    #[error("object `{0}` already exists")]
    DuplicateObject(String),
    #[error("invalid world: {0}")]
    Invalid(String),
}

/// Why the world refused a command. The world is left untouched.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct Impossible(pub String);

/// Scenario-authored change to ground truth that the agent did not cause.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Mutation {
    MoveObject {
        object: String,
        room: String,
        #[serde(default)]
        position: Option<Placement>,
    },
    AddObject(ObjectDef),
    RemoveObject {
        object: String,
    },
    SetDevice {
        device: String,
        #[serde(default)]
        power: Option<bool>,
        #[serde(default)]
        level: Option<i64>,
    },
    KnockOver {
        object: String,
    },
    SetAttribute {
        object: String,
        key: String,
        value: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub at: Tick,
    pub mutation: Mutation,
}

#[derive(Debug, Clone)]
pub struct WorldState {
    rooms: Vec<String>,
    links: BTreeMap<String, BTreeSet<String>>,
    objects: BTreeMap<String, WorldObject>,
    devices: BTreeMap<String, Device>,
    robot: Robot,
    motions: Vec<Motion>,
    knowledge: BTreeMap<String, String>,
    flags: BTreeSet<String>,
    outputs: Vec<OutputLine>,
}

impl WorldState {
    pub fn from_def(def: &WorldDef) -> Result<Self, WorldError> {
        let room_set: BTreeSet<&str> = def.rooms.iter().map(String::as_str).collect();
        if room_set.len() != def.rooms.len() || def.rooms.is_empty() {
            return Err(WorldError::Invalid("rooms must be non-empty and distinct".into()));
        }
        if !room_set.contains(def.robot_room.as_str()) {
            return Err(WorldError::UnknownRoom(def.robot_room.clone()));
        }
        let mut links: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        if def.links.is_empty() {
            for a in &def.rooms {
                for b in &def.rooms {
                    if a != b {
                        links.entry(a.clone()).or_default().insert(b.clone());
                    }
                }
            }
        } else {
            for (a, b) in &def.links {
                for r in [a, b] {
                    if !room_set.contains(r.as_str()) {
                        return Err(WorldError::UnknownRoom(r.clone()));
                    }
                }
                links.entry(a.clone()).or_default().insert(b.clone());
                links.entry(b.clone()).or_default().insert(a.clone());
            }
        }
        let mut w = WorldState {
            rooms: def.rooms.clone(),
            links,
            objects: BTreeMap::new(),
            devices: BTreeMap::new(),
            robot: Robot {
                room: def.robot_room.clone(),
                held: Vec::new(),
                battery: 100.0,
            },
            motions: Vec::new(),
            knowledge: def.knowledge.clone(),
            flags: BTreeSet::new(),
            outputs: Vec::new(),
        };
        for o in &def.objects {
            w.add_object(o)?;
        }
        for o in &def.objects {
            if let Some(p) = &o.position {
                w.check_placement(&o.id, &o.room, p)?;
            }
        }
        for d in &def.devices {
            if !room_set.contains(d.room.as_str()) {
                return Err(WorldError::UnknownRoom(d.room.clone()));
            }
            if d.min_level > d.max_level || d.level < d.min_level || d.level > d.max_level {
                return Err(WorldError::Invalid(format!("device `{}` level out of range", d.id)));
            }
            if w.devices.contains_key(&d.id) {
                return Err(WorldError::Invalid(format!("device `{}` declared twice", d.id)));
            }
            w.devices.insert(
                d.id.clone(),
                Device {
                    room: d.room.clone(),
                    power: d.power,
                    level: d.level,
                    min_level: d.min_level,
                    max_level: d.max_level,
                },
            );
        }
        Ok(w)
    }

    fn add_object(&mut self, o: &ObjectDef) -> Result<(), WorldError> {
        if !self.rooms.contains(&o.room) {
            return Err(WorldError::UnknownRoom(o.room.clone()));
        }
        if self.objects.contains_key(&o.id) || o.id == ROBOT {
            return Err(WorldError::DuplicateObject(o.id.clone()));
        }
        self.objects.insert(
            o.id.clone(),
            WorldObject {
                class: o.class.clone(),
                attributes: o.attributes.clone(),
                location: Location::Room {
                    room: o.room.clone(),
                    placement: o.position.clone(),
                },
            },
        );
        Ok(())
    }

    fn check_placement(&self, id: &str, room: &str, p: &Placement) -> Result<(), WorldError> {
        if p.relation == Relation::HeldBy {
            return Err(WorldError::Invalid(format!("`{id}` cannot start held")));
        }
        match self.objects.get(&p.target) {
            Some(t) if t.location == Location::Held => {
                Err(WorldError::Invalid(format!("`{id}` placed on held object")))
            }
            Some(t) if self.room_of_loc(&t.location) != room => Err(WorldError::Invalid(format!(
                "`{id}` placed relative to `{}` in another room",
                p.target
            ))),
            Some(_) => Ok(()),
            None => Err(WorldError::UnknownObject(p.target.clone())),
        }
    }

    fn room_of_loc<'a>(&'a self, loc: &'a Location) -> &'a str {
        match loc {
            Location::Held => &self.robot.room,
            Location::Room { room, .. } => room,
        }
    }

    pub fn rooms(&self) -> &[String] {
        &self.rooms
    }

    pub fn robot(&self) -> &Robot {
        &self.robot
    }

    pub fn object(&self, id: &str) -> Option<&WorldObject> {
        self.objects.get(id)
    }

    pub fn object_ids(&self) -> impl Iterator<Item = &String> {
        self.objects.keys()
    }

    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    pub fn room_of(&self, id: &str) -> Option<&str> {
        self.objects.get(id).map(|o| self.room_of_loc(&o.location))
    }

    pub fn device(&self, id: &str) -> Option<&Device> {
        self.devices.get(id)
    }

    pub fn device_ids(&self) -> impl Iterator<Item = &String> {
        self.devices.keys()
    }

    pub fn knowledge(&self, key: &str) -> Option<&str> {
        self.knowledge.get(key).map(String::as_str)
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.contains(flag)
    }

    pub fn body_busy(&self) -> bool {
        self.motions.iter().any(|m| m.body)
    }

    pub fn has_motions(&self) -> bool {
        !self.motions.is_empty()
    }

    pub fn take_outputs(&mut self) -> Vec<OutputLine> {
        std::mem::take(&mut self.outputs)
    }

    /// Shortest hop path from the robot's room, neighbours in name order.
    pub fn path_to(&self, target: &str) -> Option<Vec<String>> {
        let start = self.robot.room.clone();
        if start == target {
            return Some(Vec::new());
        }
        let mut prev: BTreeMap<String, String> = BTreeMap::new();
        let mut queue = VecDeque::from([start.clone()]);
        let mut seen = BTreeSet::from([start.clone()]);
        while let Some(r) = queue.pop_front() {
            for n in self.links.get(&r).into_iter().flatten() {
                if seen.insert(n.clone()) {
                    prev.insert(n.clone(), r.clone());
                    if n == target {
                        let mut path = vec![n.clone()];
                        let mut cur = n.clone();
                        while let Some(p) = prev.get(&cur) {
                            if *p == start {
                                break;
                            }
                            path.push(p.clone());
                            cur = p.clone();
                        }
                        path.reverse();
                        return Some(path);
                    }
                    queue.push_back(n.clone());
                }
            }
        }
        None
    }

    /// Ground-truth relation set in scene-graph vocabulary.
    pub fn relations(&self) -> BTreeSet<Edge> {
        self.objects
            .iter()
            .filter_map(|(id, o)| match &o.location {
                Location::Held => Some(Edge::new(id.clone(), Relation::HeldBy, ROBOT)),
                Location::Room { placement: Some(p), .. } => Some(Edge::new(id.clone(), p.relation, p.target.clone())),
                Location::Room { placement: None, .. } => None,
            })
            .collect()
    }

    /// Carries out a command. The only visible result is the changed world;
    /// nothing about success is returned to the caller beyond refusal of
    /// physically impossible requests.
    pub fn execute_command(&mut self, cmd: &Command, body: bool, duration: u64) -> Result<(), Impossible> {
        let text = |name: &str| -> Result<String, Impossible> {
            cmd.text(name)
                .map(str::to_string)
                .ok_or_else(|| Impossible(format!("missing argument `{name}`")))
        };
        if body && self.body_busy() {
            return Err(Impossible("robot body is busy".into()));
        }
        let motion = |kind: MotionKind, remaining: u64| Motion {
            command: cmd.id,
            task: cmd.task,
            body,
            remaining,
            kind,
        };
        let done_flag = format!("done:{}", cmd.id);
        match (cmd.tool.as_str(), cmd.op.as_str()) {
            (NAVIGATION, "go_to") => {
                let room = text("room")?;
                let path = self
                    .path_to(&room)
                    .ok_or_else(|| Impossible(format!("no route to `{room}`")))?;
                if path.is_empty() {
                    self.flags.insert(done_flag);
                    return Ok(());
                }
                self.motions.push(motion(
                    MotionKind::Navigate {
                        path: path.into(),
                        progress: 0,
                    },
                    0,
                ));
            }
            (MANIPULATION, "grasp") => {
                let object = text("object")?;
                let o = self
                    .objects
                    .get(&object)
                    .ok_or_else(|| Impossible(format!("no object `{object}`")))?;
                if o.location == Location::Held {
                    return Err(Impossible(format!("`{object}` is already held")));
                }
                if self.room_of_loc(&o.location) != self.robot.room {
                    return Err(Impossible(format!("`{object}` is out of reach")));
                }
                if self.robot.held.len() >= HAND_CAPACITY {
                    return Err(Impossible("both hands are full".into()));
                }
                let at = o.location.clone();
                self.motions.push(motion(MotionKind::Grasp { object, at }, GRASP_TICKS));
            }
            (MANIPULATION, "place") => {
                let object = text("object")?;
                let target = text("target")?;
                let relation = match text("relation")?.as_str() {
                    "on" => Relation::On,
                    "in" => Relation::In,
                    "near" => Relation::Near,
                    other => return Err(Impossible(format!("cannot place `{other}`"))),
                };
                if !self.robot.held.contains(&object) {
                    return Err(Impossible(format!("not holding `{object}`")));
                }
                match self.objects.get(&target) {
                    Some(t) if self.room_of_loc(&t.location) == self.robot.room && t.location != Location::Held => {}
                    Some(_) => return Err(Impossible(format!("`{target}` is out of reach"))),
                    None => return Err(Impossible(format!("no object `{target}`"))),
                }
                self.motions.push(motion(
                    MotionKind::Place {
                        object,
                        target,
                        relation,
                    },
                    PLACE_TICKS,
                ));
            }
            (MANIPULATION, "photo") => {
                let object = text("object")?;
                match self.room_of(&object) {
                    Some(r) if r == self.robot.room => {}
                    Some(_) => return Err(Impossible(format!("`{object}` is out of view"))),
                    None => return Err(Impossible(format!("no object `{object}`"))),
                }
                self.motions.push(motion(MotionKind::Photo { object }, PHOTO_TICKS));
            }
            (IOT, op @ ("set_device" | "set_level")) => {
                let device = text("device")?;
                let d = self
                    .devices
                    .get(&device)
                    .ok_or_else(|| Impossible(format!("no device `{device}`")))?;
                let (power, level) = if op == "set_device" {
                    let p = cmd
                        .arg("power")
                        .and_then(|a| a.as_bool())
                        .ok_or_else(|| Impossible("missing argument `power`".into()))?;
                    (Some(p), None)
                } else {
                    let l = cmd
                        .arg("level")
                        .and_then(|a| a.as_int())
                        .ok_or_else(|| Impossible("missing argument `level`".into()))?;
                    if l < d.min_level || l > d.max_level {
                        return Err(Impossible(format!(
                            "level {l} outside {}..={}",
                            d.min_level, d.max_level
                        )));
                    }
                    (None, Some(l))
                };
                self.motions
                    .push(motion(MotionKind::Device { device, power, level }, 1));
            }
            (WEB, "query") => {
                let key = text("key")?;
                let answer = self.knowledge.get(&key).cloned().unwrap_or_else(|| "no answer".into());
                self.emit(cmd.id, WEB, format!("{key}: {answer}"));
                self.flags.insert(done_flag);
            }
            (WEB, "order") => {
                self.emit(cmd.id, WEB, format!("order placed: {}", text("item")?));
                self.flags.insert(done_flag);
            }
            (WEB, "play_music") => {
                self.emit(cmd.id, SPEAKER, format!("playing: {}", text("track")?));
                self.flags.insert(done_flag);
            }
            (SPEAKER, "say") => {
                self.emit(cmd.id, SPEAKER, text("text")?);
                self.flags.insert(done_flag);
            }
            _ => {
                if duration == 0 {
                    self.flags.insert(done_flag);
                } else {
                    self.motions
                        .push(motion(MotionKind::Flag { flag: done_flag }, duration));
                }
            }
        }
        Ok(())
    }

    fn emit(&mut self, command: CommandId, channel: &str, text: String) {
        self.outputs.push(OutputLine {
            command,
            channel: channel.into(),
            text,
        });
    }

    /// Stops whatever motions a task has in flight. A half-finished hop is
    /// lost; the robot stays in the room it was in.
    pub fn abort_task(&mut self, task: TaskId) {
        self.motions.retain(|m| m.task != Some(task));
    }

    /// Advances every motion by one tick.
    pub fn step(&mut self) {
        let motions = std::mem::take(&mut self.motions);
        let mut keep = Vec::with_capacity(motions.len());
        for mut m in motions {
            if m.body {
                self.robot.battery = (self.robot.battery - 0.01).max(0.0);
            }
            let finished = match &mut m.kind {
                MotionKind::Navigate { path, progress } => {
                    *progress += 1;
                    if *progress >= HOP_TICKS {
                        *progress = 0;
                        if let Some(next) = path.pop_front() {
                            self.robot.room = next;
                        }
                    }
                    path.is_empty()
                }
                _ => {
                    m.remaining = m.remaining.saturating_sub(1);
                    m.remaining == 0
                }
            };
            if finished {
                self.land(&m);
                self.flags.insert(format!("done:{}", m.command));
            } else {
                keep.push(m);
            }
        }
        keep.extend(std::mem::take(&mut self.motions));
        self.motions = keep;
    }

    fn land(&mut self, m: &Motion) {
        match &m.kind {
            MotionKind::Navigate { .. } | MotionKind::Flag { .. } => {}
            MotionKind::Grasp { object, at } => {
                // Fails quietly if the object moved while the arm was closing.
                let still_there = self.objects.get(object).is_some_and(|o| o.location == *at)
                    && self.room_of_loc(at) == self.robot.room;
                if still_there && self.robot.held.len() < HAND_CAPACITY {
                    self.detach_dependents(object);
                    if let Some(o) = self.objects.get_mut(object) {
                        o.location = Location::Held;
                    }
                    self.robot.held.push(object.clone());
                }
            }
            MotionKind::Place {
                object,
                target,
                relation,
            } => {
                let reachable = self
                    .objects
                    .get(target)
                    .is_some_and(|t| t.location != Location::Held && self.room_of_loc(&t.location) == self.robot.room);
                if self.robot.held.contains(object) && reachable {
                    self.robot.held.retain(|h| h != object);
                    let room = self.robot.room.clone();
                    if let Some(o) = self.objects.get_mut(object) {
                        o.location = Location::Room {
                            room,
                            placement: Some(Placement {
                                relation: *relation,
                                target: target.clone(),
                            }),
                        };
                        o.attributes.remove("knocked_over");
                    }
                }
            }
            MotionKind::Photo { object } => {
                if self.room_of(object) == Some(self.robot.room.as_str()) {
                    self.flags.insert(format!("photo:{object}"));
                }
            }
            MotionKind::Device { device, power, level } => {
                if let Some(d) = self.devices.get_mut(device) {
                    if let Some(p) = power {
                        d.power = *p;
                    }
                    if let Some(l) = level {
                        d.level = *l;
                    }
                }
            }
        }
    }

    /// Objects resting on `id` stay where they are when `id` is lifted.
    fn detach_dependents(&mut self, id: &str) {
        for o in self.objects.values_mut() {
            if let Location::Room { placement, .. } = &mut o.location {
                if placement.as_ref().is_some_and(|p| p.target == id) {
                    *placement = None;
                }
            }
        }
    }

    pub fn apply_disturbance(&mut self, m: &Mutation) -> Result<(), WorldError> {
        match m {
            Mutation::MoveObject { object, room, position } => {
                if !self.rooms.contains(room) {
                    return Err(WorldError::UnknownRoom(room.clone()));
                }
                if !self.objects.contains_key(object) {
                    return Err(WorldError::UnknownObject(object.clone()));
                }
                if let Some(p) = position {
                    if p.target == *object {
                        return Err(WorldError::Invalid(format!("`{object}` cannot rest on itself")));
                    }
                    self.check_placement(object, room, p)?;
                }
                self.robot.held.retain(|h| h != object);
                let old_room = self.room_of(object).map(str::to_string);
                if old_room.as_deref() != Some(room.as_str()) {
                    self.detach_dependents(object);
                }
                let o = self.objects.get_mut(object).expect("checked");
                o.location = Location::Room {
                    room: room.clone(),
                    placement: position.clone(),
                };
            }
            Mutation::AddObject(def) => {
                self.add_object(def)?;
                if let Some(p) = &def.position {
                    if let Err(e) = self.check_placement(&def.id, &def.room, p) {
                        self.objects.remove(&def.id);
                        return Err(e);
                    }
                }
            }
            Mutation::RemoveObject { object } => {
                if self.objects.remove(object).is_none() {
                    return Err(WorldError::UnknownObject(object.clone()));
                }
                self.robot.held.retain(|h| h != object);
                self.detach_dependents(object);
                self.motions.retain(|m| {
                    !matches!(&m.kind,
                    MotionKind::Grasp { object: o, .. } | MotionKind::Place { object: o, .. } if o == object)
                });
            }
            Mutation::SetDevice { device, power, level } => {
                let d = self
                    .devices
                    .get_mut(device)
                    .ok_or_else(|| WorldError::UnknownDevice(device.clone()))?;
                if let Some(l) = level {
                    if *l < d.min_level || *l > d.max_level {
                        return Err(WorldError::Invalid(format!("level {l} out of range for `{device}`")));
                    }
                    d.level = *l;
                }
                if let Some(p) = power {
                    d.power = *p;
                }
            }
            Mutation::KnockOver { object } => {
                let o = self
                    .objects
                    .get_mut(object)
                    .ok_or_else(|| WorldError::UnknownObject(object.clone()))?;
                o.attributes.insert("knocked_over".into(), "true".into());
            }
            Mutation::SetAttribute { object, key, value } => {
                let o = self
                    .objects
                    .get_mut(object)
                    .ok_or_else(|| WorldError::UnknownObject(object.clone()))?;
                o.attributes.insert(key.clone(), value.clone());
            }
        }
        Ok(())
    }

    /// What the robot's camera sees right now.
    pub fn render_frame(&self, frame_index: u64, time: Tick) -> Frame {
        let room = self.robot.room.clone();
        let observations = self
            .objects
            .iter()
            .filter(|(_, o)| self.room_of_loc(&o.location) == room)
            .map(|(id, o)| Observation {
                object: id.clone(),
                class: o.class.clone(),
                attributes: o.attributes.clone(),
                room: room.clone(),
                position: match &o.location {
                    Location::Held => Some(Placement {
                        relation: Relation::HeldBy,
                        target: ROBOT.into(),
                    }),
                    Location::Room { placement, .. } => placement.clone(),
                },
            })
            .collect();
        let pose = self.motions.iter().find(|m| m.body).map(|m| m.pose()).unwrap_or("idle");
        Frame {
            frame_index,
            time,
            camera_id: "robot".into(),
            room: room.clone(),
            observations,
            robot: RobotReading {
                room,
                pose: pose.into(),
                held: self.robot.held.clone(),
                busy: self.body_busy(),
            },
            devices: self
                .devices
                .iter()
                .map(|(id, d)| DeviceReading {
                    device: id.clone(),
                    room: d.room.clone(),
                    power: d.power,
                    level: d.level,
                })
                .collect(),
            flags: self.flags.iter().cloned().collect(),
        }
    }
}
