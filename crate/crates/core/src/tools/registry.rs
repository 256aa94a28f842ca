use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{CommandId, TaskId, Tick};

pub const NAVIGATION: &str = "navigation";
pub const MANIPULATION: &str = "manipulation";
pub const IOT: &str = "iot";
pub const WEB: &str = "web";
pub const SPEAKER: &str = "speaker";

pub const MANDATORY_TOOLS: [&str; 2] = [NAVIGATION, MANIPULATION];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArgValue {
    Bool(bool),
    Int(i64),
    Text(String),
}

impl ArgValue {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            ArgValue::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            ArgValue::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            ArgValue::Bool(b) => Some(*b),
            ArgValue::Text(s) if s == "on" => Some(true),
            ArgValue::Text(s) if s == "off" => Some(false),
            _ => None,
        }
    }
}

impl fmt::Display for ArgValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArgValue::Bool(b) => write!(f, "{b}"),
            ArgValue::Int(i) => write!(f, "{i}"),
            ArgValue::Text(s) => f.write_str(s),
        }
    }
}

/// Semantic parameter types a tool operation can declare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    Room,
    Object,
    Device,
    Text,
    Int,
    Bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ParamType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpSpec {
    pub name: String,
    #[serde(default)]
    pub params: Vec<ParamSpec>,
    /// Ticks until the effect lands in the world. Built-in navigation
    /// ignores this and moves at a fixed speed per room hop.
    #[serde(default)]
    pub duration: Option<u64>,
}

/// A registered capability. There is deliberately no field for the tool to
/// report back: outcomes are only ever observed through perception.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub operations: Vec<OpSpec>,
    #[serde(default)]
    pub resources: BTreeSet<String>,
    #[serde(default)]
    pub mandatory: bool,
}

impl ToolSpec {
    pub fn op(&self, name: &str) -> Option<&OpSpec> {
        self.operations.iter().find(|o| o.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Command {
    pub id: CommandId,
    pub tool: String,
    pub op: String,
    pub args: BTreeMap<String, ArgValue>,
    pub task: Option<TaskId>,
    pub issued_at: Tick,
}

impl Command {
    pub fn arg(&self, name: &str) -> Option<&ArgValue> {
        self.args.get(name)
    }

    pub fn text(&self, name: &str) -> Option<&str> {
        self.args.get(name).and_then(ArgValue::as_text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("tool `{0}` is already registered")]
    Duplicate(String),
    #[error("tool `{tool}` declares operation `{op}` twice")]
    DuplicateOp { tool: String, op: String },
    #[error("tool `{tool}` has an invalid resource tag `{tag}`")]
    BadResource { tool: String, tag: String },
    #[error("tool name must not be empty")]
    EmptyName,
    #[error("mandatory tools missing: {}", .0.join(", "))]
    MissingMandatory(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("no tool named `{0}`")]
    UnknownTool(String),
    #[error("tool `{tool}` has no operation `{op}`")]
    UnknownOp { tool: String, op: String },
    #[error("`{tool}.{op}` expects parameters [{expected}], got [{got}]")]
    Arity {
        tool: String,
        op: String,
        expected: String,
        got: String,
    },
    #[error("argument `{param}` should be a {expected:?}")]
    Type { param: String, expected: ParamType },
    #[error("argument `{param}` names unknown room `{room}`")]
    UnknownRoom { param: String, room: String },
}

fn valid_tag(tag: &str) -> bool {
    matches!(tag, "body" | "audio" | "network") || tag.strip_prefix("device:").is_some_and(|d| !d.is_empty())
}

#[derive(Debug, Clone, Default)]
pub struct ToolRegistry {
    tools: BTreeMap<String, ToolSpec>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry with the five simulated tool agents.
    pub fn with_builtins() -> Self {
        let mut r = Self::new();
        for spec in builtin_specs() {
            r.register(spec).expect("builtins are distinct");
        }
        r
    }

    pub fn register(&mut self, spec: ToolSpec) -> Result<(), RegistryError> {
        if spec.name.trim().is_empty() {
            return Err(RegistryError::EmptyName);
        }
        if self.tools.contains_key(&spec.name) {
            return Err(RegistryError::Duplicate(spec.name));
        }
        let mut seen = BTreeSet::new();
        for op in &spec.operations {
            if !seen.insert(op.name.as_str()) {
                return Err(RegistryError::DuplicateOp {
                    tool: spec.name.clone(),
                    op: op.name.clone(),
                });
            }
        }
        if let Some(tag) = spec.resources.iter().find(|t| !valid_tag(t)) {
            return Err(RegistryError::BadResource {
                tool: spec.name.clone(),
                tag: tag.clone(),
            });
        }
        self.tools.insert(spec.name.clone(), spec);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tools.keys()
    }

    pub fn check_mandatory(&self) -> Result<(), RegistryError> {
        let missing: Vec<String> = MANDATORY_TOOLS
            .iter()
            .filter(|t| !self.tools.contains_key(**t))
            .map(|t| t.to_string())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(RegistryError::MissingMandatory(missing))
        }
    }

    /// Arity and semantic-type check of a command against its tool's schema.
    pub fn schema_check(
        &self,
        tool: &str,
        op: &str,
        args: &BTreeMap<String, ArgValue>,
        rooms: &BTreeSet<String>,
    ) -> Result<&OpSpec, SchemaError> {
        let spec = self
            .tools
            .get(tool)
            .ok_or_else(|| SchemaError::UnknownTool(tool.to_string()))?;
        let op_spec = spec.op(op).ok_or_else(|| SchemaError::UnknownOp {
            tool: tool.to_string(),
            op: op.to_string(),
        })?;
        let expected: BTreeSet<&str> = op_spec.params.iter().map(|p| p.name.as_str()).collect();
        let got: BTreeSet<&str> = args.keys().map(String::as_str).collect();
        if expected != got {
            return Err(SchemaError::Arity {
                tool: tool.to_string(),
                op: op.to_string(),
                expected: expected.into_iter().collect::<Vec<_>>().join(", "),
                got: got.into_iter().collect::<Vec<_>>().join(", "),
            });
        }
        for p in &op_spec.params {
            let v = &args[&p.name];
            let ok = match p.ty {
                ParamType::Room | ParamType::Object | ParamType::Device | ParamType::Text => v.as_text().is_some(),
                ParamType::Int => v.as_int().is_some(),
                ParamType::Bool => v.as_bool().is_some(),
            };
            if !ok {
                return Err(SchemaError::Type {
                    param: p.name.clone(),
                    expected: p.ty,
                });
            }
            if p.ty == ParamType::Room {
                let room = v.as_text().expect("checked");
                if !rooms.contains(room) {
                    return Err(SchemaError::UnknownRoom {
                        param: p.name.clone(),
                        room: room.to_string(),
                    });
                }
            }
        }
        Ok(op_spec)
    }

    /// Union of resource tags over the tools a task will touch.
    pub fn resources_for<'a>(&self, tools: impl IntoIterator<Item = &'a str>) -> BTreeSet<String> {
        tools
            .into_iter()
            .filter_map(|t| self.tools.get(t))
            .flat_map(|s| s.resources.iter().cloned())
            .collect()
    }
}

fn op(name: &str, params: &[(&str, ParamType)], duration: Option<u64>) -> OpSpec {
    OpSpec {
        name: name.into(),
        params: params
            .iter()
            .map(|(n, t)| ParamSpec {
                name: n.to_string(),
                ty: *t,
            })
            .collect(),
        duration,
    }
}

fn tags(t: &[&str]) -> BTreeSet<String> {
    t.iter().map(|s| s.to_string()).collect()
}

pub fn builtin_specs() -> Vec<ToolSpec> {
    use ParamType::*;
    vec![
        ToolSpec {
            name: NAVIGATION.into(),
            description: "Moves the robot base between rooms.".into(),
            operations: vec![op("go_to", &[("room", Room)], None)],
            resources: tags(&["body"]),
            mandatory: true,
        },
        ToolSpec {
            name: MANIPULATION.into(),
            description: "Dual-arm grasping, placing and wrist-camera photos.".into(),
            operations: vec![
                op("grasp", &[("object", Object)], Some(5)),
                op(
                    "place",
                    &[("object", Object), ("target", Object), ("relation", Text)],
                    Some(5),
                ),
                op("photo", &[("object", Object)], Some(2)),
            ],
            resources: tags(&["body"]),
            mandatory: true,
        },
        ToolSpec {
            name: IOT.into(),
            description: "Smart-home device control.".into(),
            operations: vec![
                op("set_device", &[("device", Device), ("power", Bool)], Some(1)),
                op("set_level", &[("device", Device), ("level", Int)], Some(1)),
            ],
            resources: tags(&["network"]),
            mandatory: false,
        },
        ToolSpec {
            name: WEB.into(),
            description: "Web services: lookups, orders, media.".into(),
            operations: vec![
                op("query", &[("key", Text)], Some(0)),
                op("order", &[("item", Text)], Some(0)),
                op("play_music", &[("track", Text)], Some(0)),
            ],
            resources: tags(&["network"]),
            mandatory: false,
        },
        ToolSpec {
            name: SPEAKER.into(),
            description: "Speaks text aloud.".into(),
            operations: vec![op("say", &[("text", Text)], Some(0))],
            resources: tags(&["audio"]),
            mandatory: false,
        },
    ]
}
