use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ids::Tick;
use crate::memory::Relation;

/// Where an observed object sits relative to another entity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Placement {
    pub relation: Relation,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub object: String,
    pub class: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
    pub room: String,
    #[serde(default)]
    pub position: Option<Placement>,
}

/// The robot's own proprioceptive state as seen in a frame.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RobotReading {
    pub room: String,
    pub pose: String,
    pub held: Vec<String>,
    pub busy: bool,
}

/// Smart-device telemetry. Devices report through the home hub, so readings
/// cover every room, not just the one in view.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceReading {
    pub device: String,
    pub room: String,
    pub power: bool,
    pub level: i64,
}

/// One symbolic perception frame: what the robot's camera sees in the room
/// it occupies, plus proprioception, device telemetry and output flags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub frame_index: u64,
    pub time: Tick,
    pub camera_id: String,
    pub room: String,
    pub observations: Vec<Observation>,
    pub robot: RobotReading,
    pub devices: Vec<DeviceReading>,
    pub flags: Vec<String>,
}

impl Frame {
    /// A frame that sees nothing; handy for exercising the memory tiers.
    pub fn blank(frame_index: u64, time: Tick, room: &str) -> Self {
        Frame {
            frame_index,
            time,
            camera_id: "robot".into(),
            room: room.into(),
            observations: Vec::new(),
            robot: RobotReading {
                room: room.into(),
                pose: "idle".into(),
                held: Vec::new(),
                busy: false,
            },
            devices: Vec::new(),
            flags: Vec::new(),
        }
    }
}
