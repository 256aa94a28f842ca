//! Spatial memory, event history, retrieval and context assembly.

mod context;
mod graph;
mod history;
mod predicate;
mod retrieval;
pub mod template;

pub use context::{assemble_context, ContextBundle, ContextConfig, ContextItem};
pub use graph::{Edge, GraphNode, RobotNode, SceneGraph, SceneGraphDelta};
pub use history::{EventHistory, EventRecord, EventSource, HistoryError};
pub use predicate::{Predicate, PredicateError, Truth};
pub use retrieval::{jaccard, retrieve_events, tokenize, LexicalRetriever, Retriever, ScoredEvent};

use serde::{Deserialize, Serialize};

/// Closed relation vocabulary shared by the scene graph, the world model and
/// postcondition predicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    On,
    In,
    Near,
    HeldBy,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::On => "on",
            Relation::In => "in",
            Relation::Near => "near",
            Relation::HeldBy => "held_by",
        }
    }
}

/// Node id of the robot in the scene graph.
pub const ROBOT: &str = "robot";
