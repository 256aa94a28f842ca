use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Edge, Relation, SceneGraph, ROBOT};

/// Postconditions and step guards, evaluated against the scene graph only.
/// The agent never asks a tool whether it succeeded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Predicate {
    RobotIn {
        room: String,
    },
    ObjectInRoom {
        object: String,
        room: String,
    },
    Relation {
        subject: String,
        relation: Relation,
        object: String,
    },
    Held {
        object: String,
    },
    DeviceState {
        device: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        power: Option<bool>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        level: Option<i64>,
    },
    Attribute {
        object: String,
        key: String,
        value: String,
    },
    Flag {
        flag: String,
    },
    ClassPresent {
        class: String,
        room: String,
    },
    ClassAbsent {
        class: String,
        room: String,
    },
    Not(Box<Predicate>),
    All(Vec<Predicate>),
    Any(Vec<Predicate>),
}

/// Three-valued outcome: `Unknown` means the relevant room has not been seen
/// yet, which is not the same as false.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truth {
    True,
    False,
    Unknown,
}

impl From<bool> for Truth {
    fn from(b: bool) -> Self {
        if b {
            Truth::True
        } else {
            Truth::False
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PredicateError {
    #[error("unknown object `{0}`: never observed and not in the home catalogue")]
    UnknownObject(String),
    #[error("unknown device `{0}`")]
    UnknownDevice(String),
    #[error("unknown room `{0}`")]
    UnknownRoom(String),
}

impl Predicate {
    pub fn eval(&self, g: &SceneGraph) -> Result<Truth, PredicateError> {
        let known = |id: &str| -> Result<(), PredicateError> {
            if g.knows(id) {
                Ok(())
            } else {
                Err(PredicateError::UnknownObject(id.to_string()))
            }
        };
        let room_ok = |room: &str| -> Result<(), PredicateError> {
            if g.is_room(room) {
                Ok(())
            } else {
                Err(PredicateError::UnknownRoom(room.to_string()))
            }
        };
        Ok(match self {
            Predicate::RobotIn { room } => {
                room_ok(room)?;
                match &g.robot().room {
                    Some(r) => (r == room).into(),
                    None => Truth::Unknown,
                }
            }
            Predicate::ObjectInRoom { object, room } => {
                known(object)?;
                room_ok(room)?;
                match g.node(object) {
                    Some(n) => (n.room == *room).into(),
                    None => Truth::Unknown,
                }
            }
            Predicate::Relation {
                subject,
                relation,
                object,
            } => {
                known(subject)?;
                known(object)?;
                let edge = Edge::new(subject.clone(), *relation, object.clone());
                if g.edges().contains(&edge) {
                    Truth::True
                } else if g.node(subject).is_none() {
                    Truth::Unknown
                } else {
                    Truth::False
                }
            }
            Predicate::Held { object } => {
                known(object)?;
                let held = g.robot().held.iter().any(|h| h == object)
                    || g.edges().contains(&Edge::new(object.clone(), Relation::HeldBy, ROBOT));
                held.into()
            }
            Predicate::DeviceState { device, power, level } => match g.device(device) {
                None => return Err(PredicateError::UnknownDevice(device.clone())),
                Some(d) => (power.is_none_or(|p| d.power == p) && level.is_none_or(|l| d.level == l)).into(),
            },
            Predicate::Attribute { object, key, value } => {
                known(object)?;
                match g.node(object) {
                    Some(n) => (n.attributes.get(key) == Some(value)).into(),
                    None => Truth::Unknown,
                }
            }
            Predicate::Flag { flag } => g.has_flag(flag).into(),
            Predicate::ClassPresent { class, room } => {
                room_ok(room)?;
                if !g.was_observed(room) {
                    Truth::Unknown
                } else {
                    g.objects_in_room(room).any(|(_, n)| n.class == *class).into()
                }
            }
            Predicate::ClassAbsent { class, room } => {
                return Predicate::Not(Box::new(Predicate::ClassPresent {
                    class: class.clone(),
                    room: room.clone(),
                }))
                .eval(g)
            }
            Predicate::Not(inner) => match inner.eval(g)? {
                Truth::True => Truth::False,
                Truth::False => Truth::True,
                Truth::Unknown => Truth::Unknown,
            },
            Predicate::All(items) => {
                let mut unknown = false;
                for p in items {
                    match p.eval(g)? {
                        Truth::False => return Ok(Truth::False),
                        Truth::Unknown => unknown = true,
                        Truth::True => {}
                    }
                }
                if unknown {
                    Truth::Unknown
                } else {
                    Truth::True
                }
            }
            Predicate::Any(items) => {
                let mut unknown = false;
                for p in items {
                    match p.eval(g)? {
                        Truth::True => return Ok(Truth::True),
                        Truth::Unknown => unknown = true,
                        Truth::False => {}
                    }
                }
                if unknown {
                    Truth::Unknown
                } else {
                    Truth::False
                }
            }
        })
    }

    pub fn holds(&self, g: &SceneGraph) -> bool {
        matches!(self.eval(g), Ok(Truth::True))
    }
}
