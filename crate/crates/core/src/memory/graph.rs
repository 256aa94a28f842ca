use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use serde_json::json;

use super::{Relation, ROBOT};
use crate::json;
use crate::perception::{DeviceReading, Frame, Observation};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GraphNode {
    pub class: String,
    pub attributes: BTreeMap<String, String>,
    pub room: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Edge {
    pub subject: String,
    pub relation: Relation,
    pub object: String,
}

impl Edge {
    pub fn new(subject: impl Into<String>, relation: Relation, object: impl Into<String>) -> Self {
        Edge {
            subject: subject.into(),
            relation,
            object: object.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct RobotNode {
    pub room: Option<String>,
    pub pose: String,
    pub held: Vec<String>,
    pub busy: bool,
}

/// What changed in the graph when a frame was applied.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct SceneGraphDelta {
    pub added_nodes: Vec<String>,
    pub removed_nodes: Vec<String>,
    pub changed_nodes: Vec<String>,
    pub added_edges: Vec<Edge>,
    pub removed_edges: Vec<Edge>,
    pub changed_devices: Vec<String>,
    pub added_flags: Vec<String>,
    pub robot_changed: bool,
}

impl SceneGraphDelta {
    pub fn is_empty(&self) -> bool {
        self.added_nodes.is_empty()
            && self.removed_nodes.is_empty()
            && self.changed_nodes.is_empty()
            && self.added_edges.is_empty()
            && self.removed_edges.is_empty()
            && self.changed_devices.is_empty()
            && self.added_flags.is_empty()
            && !self.robot_changed
    }

    pub fn to_json(&self) -> serde_json::Value {
        let edge = |e: &Edge| format!("{} {} {}", e.subject, e.relation.as_str(), e.object);
        json!({
            "added_nodes": self.added_nodes,
            "removed_nodes": self.removed_nodes,
            "changed_nodes": self.changed_nodes,
            "added_edges": self.added_edges.iter().map(edge).collect::<Vec<_>>(),
            "removed_edges": self.removed_edges.iter().map(edge).collect::<Vec<_>>(),
            "changed_devices": self.changed_devices,
            "added_flags": self.added_flags,
            "robot_changed": self.robot_changed,
        })
    }
}

/// The agent's spatial memory: objects it has seen, their relations, the
/// robot's own state, device telemetry, and output flags.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SceneGraph {
    rooms: BTreeSet<String>,
    observed_rooms: BTreeSet<String>,
    catalogue: BTreeSet<String>,
    nodes: BTreeMap<String, GraphNode>,
    edges: BTreeSet<Edge>,
    robot: RobotNode,
    devices: BTreeMap<String, DeviceReading>,
    flags: BTreeSet<String>,
}

impl SceneGraph {
    pub fn new(rooms: impl IntoIterator<Item = String>) -> Self {
        SceneGraph {
            rooms: rooms.into_iter().collect(),
            ..Default::default()
        }
    }

    /// Registers names the agent knows exist (its map of the home) without
    /// knowing where they are.
    pub fn with_catalogue(mut self, ids: impl IntoIterator<Item = String>) -> Self {
        self.catalogue.extend(ids);
        self
    }

    pub fn rooms(&self) -> &BTreeSet<String> {
        &self.rooms
    }

    pub fn is_room(&self, room: &str) -> bool {
        self.rooms.contains(room)
    }

    pub fn was_observed(&self, room: &str) -> bool {
        self.observed_rooms.contains(room)
    }

    /// Observed or catalogued.
    pub fn knows(&self, id: &str) -> bool {
        id == ROBOT || self.nodes.contains_key(id) || self.catalogue.contains(id)
    }

    pub fn node(&self, id: &str) -> Option<&GraphNode> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&String, &GraphNode)> {
        self.nodes.iter()
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    pub fn robot(&self) -> &RobotNode {
        &self.robot
    }

    pub fn device(&self, id: &str) -> Option<&DeviceReading> {
        self.devices.get(id)
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.contains(flag)
    }

    pub fn edges_from(&self, subject: &str) -> impl Iterator<Item = &Edge> {
        let subject = subject.to_string();
        self.edges.iter().filter(move |e| e.subject == subject)
    }

    pub fn objects_in_room<'a>(&'a self, room: &'a str) -> impl Iterator<Item = (&'a String, &'a GraphNode)> {
        self.nodes.iter().filter(move |(_, n)| n.room == room)
    }

    /// Folds one frame into the graph. Only the room in view is rewritten;
    /// everything the camera cannot see keeps its last known state.
    pub fn apply_delta(&mut self, frame: &Frame) -> SceneGraphDelta {
        let mut delta = SceneGraphDelta::default();
        let room = frame.room.as_str();
        let observed: BTreeMap<&str, &Observation> =
            frame.observations.iter().map(|o| (o.object.as_str(), o)).collect();

        // Nodes previously believed to be in view that are no longer there.
        let stale: Vec<String> = self
            .nodes
            .iter()
            .filter(|(id, n)| n.room == room && !observed.contains_key(id.as_str()))
            .map(|(id, _)| id.clone())
            .collect();
        // Held objects travel with the robot; the frame always reports them.
        let stale_held: Vec<String> = self
            .robot
            .held
            .iter()
            .filter(|id| !observed.contains_key(id.as_str()) && !stale.contains(id))
            .filter(|id| self.nodes.contains_key(id.as_str()))
            .cloned()
            .collect();

        let mut touched: BTreeSet<String> = stale.iter().cloned().collect();
        touched.extend(stale_held.iter().cloned());
        touched.extend(observed.keys().map(|s| s.to_string()));

        let removed: BTreeSet<String> = stale.iter().chain(stale_held.iter()).cloned().collect();
        for id in &removed {
            self.nodes.remove(id);
            delta.removed_nodes.push(id.clone());
        }

        for obs in frame.observations.iter() {
            let node = GraphNode {
                class: obs.class.clone(),
                attributes: obs.attributes.clone(),
                room: obs.room.clone(),
            };
            match self.nodes.get(&obs.object) {
                None => delta.added_nodes.push(obs.object.clone()),
                Some(prev) if *prev != node => delta.changed_nodes.push(obs.object.clone()),
                Some(_) => {}
            }
            self.nodes.insert(obs.object.clone(), node);
        }

        let new_edges: BTreeSet<Edge> = frame
            .observations
            .iter()
            .filter_map(|o| {
                o.position
                    .as_ref()
                    .map(|p| Edge::new(o.object.clone(), p.relation, p.target.clone()))
            })
            .collect();
        let old_edges: BTreeSet<Edge> = self
            .edges
            .iter()
            .filter(|e| touched.contains(&e.subject) || removed.contains(&e.object))
            .cloned()
            .collect();
        for e in old_edges.difference(&new_edges) {
            self.edges.remove(e);
            delta.removed_edges.push(e.clone());
        }
        for e in new_edges.difference(&old_edges) {
            self.edges.insert(e.clone());
            delta.added_edges.push(e.clone());
        }

        let robot = RobotNode {
            room: Some(frame.robot.room.clone()),
            pose: frame.robot.pose.clone(),
            held: frame.robot.held.clone(),
            busy: frame.robot.busy,
        };
        if robot != self.robot {
            delta.robot_changed = true;
            self.robot = robot;
        }

        for reading in &frame.devices {
            if self.devices.get(&reading.device) != Some(reading) {
                delta.changed_devices.push(reading.device.clone());
                self.devices.insert(reading.device.clone(), reading.clone());
            }
        }
        for flag in &frame.flags {
            if self.flags.insert(flag.clone()) {
                delta.added_flags.push(flag.clone());
            }
        }
        self.observed_rooms.insert(room.to_string());
        delta
    }

    /// Node-sorted, then edge-sorted line records.
    pub fn dump_lines(&self) -> Vec<String> {
        let mut lines = Vec::new();
        lines.push(json::render(&json!({
            "record": "robot",
            "room": self.robot.room,
            "pose": self.robot.pose,
            "held": self.robot.held,
            "busy": self.robot.busy,
        })));
        for (id, node) in &self.nodes {
            lines.push(json::render(&json!({
                "record": "node",
                "id": id,
                "class": node.class,
                "room": node.room,
                "attributes": node.attributes,
            })));
        }
        for e in &self.edges {
            lines.push(json::render(&json!({
                "record": "edge",
                "subject": e.subject,
                "relation": e.relation.as_str(),
                "object": e.object,
            })));
        }
        for (id, d) in &self.devices {
            lines.push(json::render(&json!({
                "record": "device",
                "id": id,
                "room": d.room,
                "power": d.power,
                "level": d.level,
            })));
        }
        for flag in &self.flags {
            lines.push(json::render(&json!({"record": "flag", "flag": flag})));
        }
        lines
    }
}
