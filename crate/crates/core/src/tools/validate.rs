use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use super::registry::{Command, MANIPULATION};
use crate::memory::SceneGraph;

/// Object classes the arms must never act on.
pub fn default_deny_list() -> BTreeSet<String> {
    ["human", "animal"].iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    DenyList,
    UnknownObject,
    Unreachable,
    Schema,
    Impossible,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::DenyList => "deny_list",
            RejectReason::UnknownObject => "unknown_object",
            RejectReason::Unreachable => "unreachable",
            RejectReason::Schema => "schema",
            RejectReason::Impossible => "impossible",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}: {detail}", reason.as_str())]
pub struct Rejection {
    pub reason: RejectReason,
    pub detail: String,
}

impl Rejection {
    pub fn new(reason: RejectReason, detail: impl Into<String>) -> Self {
        Rejection {
            reason,
            detail: detail.into(),
        }
    }
}

/// Pre-flight check for arm commands, done against what the agent believes
/// (the scene graph), not against ground truth.
pub fn validate_manipulation(cmd: &Command, sg: &SceneGraph, deny: &BTreeSet<String>) -> Result<(), Rejection> {
    if cmd.tool != MANIPULATION {
        return Ok(());
    }
    let here = sg.robot().room.as_deref();
    let mut targets = Vec::new();
    if let Some(o) = cmd.text("object") {
        targets.push(o);
    }
    if let Some(t) = cmd.text("target") {
        targets.push(t);
    }
    for id in targets {
        if deny.contains(id) {
            return Err(Rejection::new(
                RejectReason::DenyList,
                format!("`{id}` is on the deny list"),
            ));
        }
        let Some(node) = sg.node(id) else {
            return Err(Rejection::new(
                RejectReason::UnknownObject,
                format!("`{id}` is not in the scene graph"),
            ));
        };
        if deny.contains(&node.class) {
            return Err(Rejection::new(
                RejectReason::DenyList,
                format!("`{id}` is a {}, which is on the deny list", node.class),
            ));
        }
        if Some(node.room.as_str()) != here {
            return Err(Rejection::new(
                RejectReason::Unreachable,
                format!(
                    "`{id}` is in {}, robot is in {}",
                    node.room,
                    here.unwrap_or("an unknown room")
                ),
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::{CommandId, Tick};
    use crate::perception::{Frame, Observation};
    use crate::tools::ArgValue;

    fn graph() -> SceneGraph {
        let mut g = SceneGraph::new(["lab".to_string(), "office".to_string()]);
        let mut f = Frame::blank(1, Tick(1), "office");
        for (id, class) in [("paper", "scrap_paper"), ("alice", "human")] {
            f.observations.push(Observation {
                object: id.into(),
                class: class.into(),
                attributes: Default::default(),
                room: "office".into(),
                position: None,
            });
        }
        g.apply_delta(&f);
        let mut lab = Frame::blank(2, Tick(2), "lab");
        lab.observations.push(Observation {
            object: "cup".into(),
            class: "cup".into(),
            attributes: Default::default(),
            room: "lab".into(),
            position: None,
        });
        g.apply_delta(&lab);
        // Walk back to the office.
        let mut back = f.clone();
        back.frame_index = 3;
        g.apply_delta(&back);
        g
    }

    fn grasp(obj: &str) -> Command {
        Command {
            id: CommandId(1),
            tool: MANIPULATION.into(),
            op: "grasp".into(),
            args: [("object".to_string(), ArgValue::Text(obj.into()))].into(),
            task: None,
            issued_at: Tick(3),
        }
    }

    #[test]
    fn same_room_object_passes() {
        assert_eq!(
            validate_manipulation(&grasp("paper"), &graph(), &default_deny_list()),
            Ok(())
        );
    }

    #[test]
    fn deny_list_by_id_and_class() {
        let g = graph();
        let deny = default_deny_list();
        assert_eq!(
            validate_manipulation(&grasp("human"), &g, &deny).unwrap_err().reason,
            RejectReason::DenyList
        );
        assert_eq!(
            validate_manipulation(&grasp("alice"), &g, &deny).unwrap_err().reason,
            RejectReason::DenyList
        );
    }

    #[test]
    fn other_room_is_unreachable() {
        let r = validate_manipulation(&grasp("cup"), &graph(), &default_deny_list()).unwrap_err();
        assert_eq!(r.reason, RejectReason::Unreachable);
    }

    #[test]
    fn unseen_object_is_unknown() {
        let r = validate_manipulation(&grasp("ghost"), &graph(), &default_deny_list()).unwrap_err();
        assert_eq!(r.reason, RejectReason::UnknownObject);
    }
}
