use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::{Frame, Observation};
use crate::ids::Tick;
use crate::memory::template::{substitute, Vars};
use crate::memory::{Predicate, Relation, SceneGraph};
use crate::tasks::{Category, Step};
use crate::transport::Transport;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdapterError {
    #[error("captioner failed: {0}")]
    Caption(String),
    #[error("adapter returned malformed output: {0}")]
    Malformed(String),
}

/// A task the perceiver thinks should exist, with the plan to carry it out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Proposal {
    pub category: Category,
    pub description: String,
    pub situation: String,
    #[serde(default)]
    pub frame_index: u64,
    #[serde(default)]
    pub steps: Vec<Step>,
    #[serde(default)]
    pub postcondition: Option<Predicate>,
}

pub struct ProposalContext<'a> {
    pub graph: &'a SceneGraph,
    pub now: Tick,
}

/// The three model-backed capabilities of the perception module.
pub trait PerceiverAdapter {
    /// One caption per frame, in order.
    fn caption(&mut self, frames: &[Frame]) -> Result<Vec<String>, AdapterError>;
    /// Proposals for the newest frame in `window`.
    fn propose(&mut self, window: &[Frame], ctx: &ProposalContext<'_>) -> Vec<Proposal>;
    fn scene_elements(&self, frame: &Frame) -> Vec<Observation> {
        frame.observations.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttrMatch {
    pub key: String,
    #[serde(default)]
    pub value: Option<String>,
}

/// Attribute-triggered proposal template. Placeholders: `{object}`,
/// `{class}`, `{room}`, `{surface}`, `{surface_class}`, `{trash}`,
/// `{home}`, `{home_room}`, `{value}`. A rule whose template needs a value
/// that cannot be resolved from the scene is skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposerRule {
    pub name: String,
    pub when: AttrMatch,
    #[serde(default)]
    pub class: Option<String>,
    pub category: Category,
    pub description: String,
    pub steps: Vec<Step>,
    #[serde(default)]
    pub postcondition: Option<Predicate>,
}

const PLACEHOLDERS: [&str; 9] = [
    "object",
    "class",
    "room",
    "surface",
    "surface_class",
    "trash",
    "home",
    "home_room",
    "value",
];

/// Attribute keys any default rule reacts to. A tidy scene has none of them.
pub const TRIGGER_ATTRIBUTES: [&str; 4] = ["debris", "misplaced", "knocked_over", "hazard"];

fn rule(v: serde_json::Value) -> ProposerRule {
    serde_json::from_value(v).expect("built-in rule is well formed")
}

pub fn default_rules() -> Vec<ProposerRule> {
    vec![
        rule(json!({
            "name": "debris",
            "when": {"key": "debris", "value": "true"},
            "category": "clean_debris",
            "description": "Pick up the {class} on the {surface_class} and throw it in the trash can",
            "steps": [
                {"id": "navigate", "tool": "navigation", "op": "go_to", "args": {"room": "{room}"}},
                {"id": "grasp", "tool": "manipulation", "op": "grasp", "args": {"object": "{object}"}},
                {"id": "discard", "tool": "manipulation", "op": "place",
                 "args": {"object": "{object}", "target": "{trash}", "relation": "in"}}
            ],
            "postcondition": {"relation": {"subject": "{object}", "relation": "in", "object": "{trash}"}}
        })),
        rule(json!({
            "name": "misplaced",
            "when": {"key": "misplaced", "value": "true"},
            "category": "organize_item",
            "description": "Put the {class} back on the {home}",
            "steps": [
                {"id": "navigate", "tool": "navigation", "op": "go_to", "args": {"room": "{room}"}},
                {"id": "grasp", "tool": "manipulation", "op": "grasp", "args": {"object": "{object}"}},
                {"id": "carry", "tool": "navigation", "op": "go_to", "args": {"room": "{home_room}"}},
                {"id": "stow", "tool": "manipulation", "op": "place",
                 "args": {"object": "{object}", "target": "{home}", "relation": "on"}}
            ],
            "postcondition": {"relation": {"subject": "{object}", "relation": "on", "object": "{home}"}}
        })),
        rule(json!({
            "name": "knocked_over",
            "when": {"key": "knocked_over", "value": "true"},
            "category": "safety_check",
            "description": "Spill hazard: pick up the knocked-over {class} on the {surface_class}",
            "steps": [
                {"id": "navigate", "tool": "navigation", "op": "go_to", "args": {"room": "{room}"}},
                {"id": "grasp", "tool": "manipulation", "op": "grasp", "args": {"object": "{object}"}},
                {"id": "upright", "tool": "manipulation", "op": "place",
                 "args": {"object": "{object}", "target": "{surface}", "relation": "on"}}
            ],
            "postcondition": {"not": {"attribute": {"object": "{object}", "key": "knocked_over", "value": "true"}}}
        })),
        rule(json!({
            "name": "hazard",
            "when": {"key": "hazard"},
            "category": "safety_check",
            "description": "Hazard check: inspect the {value} hazard at the {class}",
            "steps": [
                {"id": "navigate", "tool": "navigation", "op": "go_to", "args": {"room": "{room}"}},
                {"id": "inspect", "tool": "manipulation", "op": "photo", "args": {"object": "{object}"}}
            ],
            "postcondition": {"flag": {"flag": "photo:{object}"}}
        })),
    ]
}

/// Scenario-authored proposal pinned to a frame index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedProposal {
    pub frame: u64,
    pub proposal: Proposal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerceiverScript {
    /// Use the built-in attribute rules in addition to `rules`.
    pub default_rules: bool,
    pub rules: Vec<ProposerRule>,
    pub proposals: Vec<ScriptedProposal>,
    /// Caption overrides by frame index.
    pub captions: BTreeMap<u64, String>,
    /// Probability that one caption attempt fails.
    pub caption_failure_rate: f64,
    /// Frame index -> number of leading caption attempts that fail.
    pub caption_failures: BTreeMap<u64, u32>,
}

impl Default for PerceiverScript {
    fn default() -> Self {
        PerceiverScript {
            default_rules: true,
            rules: Vec::new(),
            proposals: Vec::new(),
            captions: BTreeMap::new(),
            caption_failure_rate: 0.0,
            caption_failures: BTreeMap::new(),
        }
    }
}

impl PerceiverScript {
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if !(0.0..=1.0).contains(&self.caption_failure_rate) {
            issues.push(format!(
                "perceiver.caption_failure_rate {} is outside [0, 1]",
                self.caption_failure_rate
            ));
        }
        let mut names = BTreeSet::new();
        for r in &self.rules {
            if !names.insert(&r.name) {
                issues.push(format!("perceiver.rules: duplicate rule `{}`", r.name));
            }
        }
        issues
    }

    pub fn active_rules(&self) -> Vec<ProposerRule> {
        let mut out = if self.default_rules {
            default_rules()
        } else {
            Vec::new()
        };
        out.extend(self.rules.iter().cloned());
        out
    }
}

/// Deterministic perceiver: rule-based proposals, template captions, and
/// seeded caption-failure injection.
#[derive(Debug, Clone)]
pub struct ScriptedPerceiver {
    seed: u64,
    rules: Vec<ProposerRule>,
    proposals: BTreeMap<u64, Vec<Proposal>>,
    captions: BTreeMap<u64, String>,
    failure_rate: f64,
    failures: BTreeMap<u64, u32>,
    attempts: BTreeMap<u64, u32>,
}

impl ScriptedPerceiver {
    pub fn new(seed: u64, script: &PerceiverScript) -> Self {
        let mut proposals: BTreeMap<u64, Vec<Proposal>> = BTreeMap::new();
        for p in &script.proposals {
            proposals.entry(p.frame).or_default().push(p.proposal.clone());
        }
        ScriptedPerceiver {
            seed,
            rules: script.active_rules(),
            proposals,
            captions: script.captions.clone(),
            failure_rate: script.caption_failure_rate,
            failures: script.caption_failures.clone(),
            attempts: BTreeMap::new(),
        }
    }

    pub fn with_defaults(seed: u64) -> Self {
        Self::new(seed, &PerceiverScript::default())
    }

    fn attempt_fails(&mut self, frame_index: u64) -> bool {
        let attempt = self.attempts.entry(frame_index).or_insert(0);
        *attempt += 1;
        let n = *attempt;
        if self.failures.get(&frame_index).is_some_and(|&k| n <= k) {
            return true;
        }
        if self.failure_rate <= 0.0 {
            return false;
        }
        let mut rng =
            ChaCha8Rng::seed_from_u64(self.seed ^ frame_index.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ u64::from(n) << 48);
        rng.gen_bool(self.failure_rate.min(1.0))
    }
}

/// Deterministic one-line description of a frame.
pub fn describe_frame(frame: &Frame) -> String {
    let mut seen: Vec<String> = frame
        .observations
        .iter()
        .map(|o| {
            let notes: Vec<&str> = TRIGGER_ATTRIBUTES
                .iter()
                .copied()
                .filter(|k| o.attributes.contains_key(*k))
                .collect();
            if notes.is_empty() {
                o.class.clone()
            } else {
                format!("{} ({})", o.class, notes.join(", "))
            }
        })
        .collect();
    seen.dedup();
    let held = if frame.robot.held.is_empty() {
        "holding nothing".to_string()
    } else {
        format!("holding {}", frame.robot.held.join(", "))
    };
    let sees = if seen.is_empty() {
        "nothing in view".to_string()
    } else {
        format!("sees {}", seen.join(", "))
    };
    format!(
        "{}: robot {} in {}, {}; {}",
        frame.time, frame.robot.pose, frame.room, held, sees
    )
}

fn scene_vars(obs: &Observation, frame: &Frame, graph: &SceneGraph) -> Vars {
    let mut vars = Vars::new();
    vars.insert("object".into(), obs.object.clone());
    vars.insert("class".into(), obs.class.clone());
    vars.insert("room".into(), obs.room.clone());
    if let Some(p) = obs.position.as_ref().filter(|p| p.relation != Relation::HeldBy) {
        vars.insert("surface".into(), p.target.clone());
        let class = frame
            .observations
            .iter()
            .find(|o| o.object == p.target)
            .map(|o| o.class.clone())
            .or_else(|| graph.node(&p.target).map(|n| n.class.clone()))
            .unwrap_or_else(|| p.target.clone());
        vars.insert("surface_class".into(), class);
    }
    if let Some(t) = frame
        .observations
        .iter()
        .find(|o| o.class == "trash_can" && o.room == obs.room)
    {
        vars.insert("trash".into(), t.object.clone());
    }
    if let Some(home) = obs.attributes.get("home") {
        vars.insert("home".into(), home.clone());
        let room = obs
            .attributes
            .get("home_room")
            .cloned()
            .or_else(|| graph.node(home).map(|n| n.room.clone()));
        if let Some(r) = room {
            vars.insert("home_room".into(), r);
        }
    }
    vars
}

/// Where a proposal is expected to play out, e.g. `office desk`.
pub fn situation_of(vars: &Vars) -> String {
    match (vars.get("room"), vars.get("surface_class")) {
        (Some(r), Some(s)) => format!("{r} {s}"),
        (Some(r), None) => r.clone(),
        _ => String::new(),
    }
}

fn unresolved(text: &str) -> bool {
    PLACEHOLDERS.iter().any(|p| text.contains(&format!("{{{p}}}")))
}

/// Applies rules to one observation. Returns `None` when the rule does not
/// match or its template cannot be resolved.
pub fn apply_rule(rule: &ProposerRule, obs: &Observation, frame: &Frame, graph: &SceneGraph) -> Option<Proposal> {
    let value = obs.attributes.get(&rule.when.key)?;
    if rule.when.value.as_ref().is_some_and(|v| v != value) {
        return None;
    }
    if rule.class.as_ref().is_some_and(|c| *c != obs.class) {
        return None;
    }
    let mut vars = scene_vars(obs, frame, graph);
    vars.insert("value".into(), value.clone());
    let steps: Vec<Step> = substitute(&rule.steps, &vars);
    let postcondition: Option<Predicate> = substitute(&rule.postcondition, &vars);
    let spoken: Vars = vars.iter().map(|(k, v)| (k.clone(), v.replace('_', " "))).collect();
    let description = crate::memory::template::fill(&rule.description, &spoken);
    let rendered = serde_json::to_string(&(&steps, &postcondition)).expect("serializable");
    if unresolved(&rendered) || unresolved(&description) {
        return None;
    }
    if postcondition.as_ref().is_some_and(|p| p.holds(graph)) {
        return None;
    }
    Some(Proposal {
        category: rule.category,
        description,
        situation: situation_of(&vars),
        frame_index: frame.frame_index,
        steps,
        postcondition,
    })
}

impl PerceiverAdapter for ScriptedPerceiver {
    fn caption(&mut self, frames: &[Frame]) -> Result<Vec<String>, AdapterError> {
        let mut failed = Vec::new();
        for f in frames {
            if self.attempt_fails(f.frame_index) {
                failed.push(f.frame_index);
            }
        }
        if !failed.is_empty() {
            return Err(AdapterError::Caption(format!("frames {failed:?} timed out")));
        }
        Ok(frames
            .iter()
            .map(|f| {
                self.captions
                    .get(&f.frame_index)
                    .cloned()
                    .unwrap_or_else(|| describe_frame(f))
            })
            .collect())
    }

    fn propose(&mut self, window: &[Frame], ctx: &ProposalContext<'_>) -> Vec<Proposal> {
        let Some(frame) = window.last() else {
            return Vec::new();
        };
        let mut out: Vec<Proposal> = self
            .proposals
            .get(&frame.frame_index)
            .cloned()
            .unwrap_or_default()
            .into_iter()
            .map(|mut p| {
                p.frame_index = frame.frame_index;
                p
            })
            .collect();
        for obs in self.scene_elements(frame) {
            if obs.position.as_ref().is_some_and(|p| p.relation == Relation::HeldBy) {
                continue;
            }
            for r in &self.rules {
                if let Some(p) = apply_rule(r, &obs, frame, ctx.graph) {
                    out.push(p);
                }
            }
        }
        out
    }
}

/// Captions through a remote model endpoint; proposals still come from the
/// local rules so runs stay reproducible when the endpoint is down.
pub struct RemotePerceiver {
    pub transport: Rc<dyn Transport>,
    pub endpoint: String,
    pub prompt: String,
    pub fallback: ScriptedPerceiver,
}

impl PerceiverAdapter for RemotePerceiver {
    fn caption(&mut self, frames: &[Frame]) -> Result<Vec<String>, AdapterError> {
        let body = json!({"prompt": self.prompt, "frames": frames});
        let reply = self
            .transport
            .post_json(&self.endpoint, &body)
            .map_err(|e| AdapterError::Caption(e.to_string()))?;
        let captions: Vec<String> = reply
            .get("captions")
            .cloned()
            .and_then(|v| serde_json::from_value(v).ok())
            .ok_or_else(|| AdapterError::Malformed("expected {\"captions\": [..]}".into()))?;
        if captions.len() != frames.len() || captions.iter().any(|c| c.trim().is_empty()) {
            return Err(AdapterError::Malformed(format!(
                "{} captions for {} frames",
                captions.len(),
                frames.len()
            )));
        }
        Ok(captions)
    }

    fn propose(&mut self, window: &[Frame], ctx: &ProposalContext<'_>) -> Vec<Proposal> {
        self.fallback.propose(window, ctx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::Placement;
    use crate::transport::{CannedTransport, TransportError};

    fn office_frame() -> Frame {
        let mut f = Frame::blank(7, Tick(7), "office");
        let obs = |id: &str, class: &str, attrs: &[(&str, &str)], on: Option<&str>| Observation {
            object: id.into(),
            class: class.into(),
            attributes: attrs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            room: "office".into(),
            position: on.map(|t| Placement {
                relation: Relation::On,
                target: t.into(),
            }),
        };
        f.observations = vec![
            obs("desk", "desk", &[], None),
            obs("paper", "scrap_paper", &[("debris", "true")], Some("desk")),
            obs("bin", "trash_can", &[], None),
        ];
        f
    }

    #[test]
    fn debris_on_desk_gives_one_cleanup() {
        let f = office_frame();
        let mut g = SceneGraph::new(["office".to_string()]);
        g.apply_delta(&f);
        let mut p = ScriptedPerceiver::with_defaults(42);
        let out = p.propose(
            &[f],
            &ProposalContext {
                graph: &g,
                now: Tick(7),
            },
        );
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].category, Category::CleanDebris);
        assert_eq!(out[0].situation, "office desk");
        assert_eq!(out[0].steps[2].args["target"].as_text(), Some("bin"));
    }

    #[test]
    fn no_trash_can_means_no_cleanup() {
        let mut f = office_frame();
        f.observations.retain(|o| o.class != "trash_can");
        let mut g = SceneGraph::new(["office".to_string()]);
        g.apply_delta(&f);
        let mut p = ScriptedPerceiver::with_defaults(42);
        assert!(p
            .propose(
                &[f],
                &ProposalContext {
                    graph: &g,
                    now: Tick(7)
                }
            )
            .is_empty());
    }

    #[test]
    fn forced_caption_failures_then_success() {
        let script = PerceiverScript {
            caption_failures: [(7, 2)].into(),
            ..Default::default()
        };
        let mut p = ScriptedPerceiver::new(1, &script);
        let f = office_frame();
        assert!(p.caption(std::slice::from_ref(&f)).is_err());
        assert!(p.caption(std::slice::from_ref(&f)).is_err());
        let c = p.caption(&[f]).unwrap();
        assert!(c[0].contains("scrap_paper (debris)"), "{}", c[0]);
    }

    #[test]
    fn remote_caption_count_must_match() {
        let t = Rc::new(CannedTransport::new([
            Ok(json!({"captions": ["a", "b"]})),
            Err(TransportError("down".into())),
        ]));
        let mut p = RemotePerceiver {
            transport: t.clone(),
            endpoint: "http://caption".into(),
            prompt: "describe".into(),
            fallback: ScriptedPerceiver::with_defaults(0),
        };
        assert!(matches!(p.caption(&[office_frame()]), Err(AdapterError::Malformed(_))));
        assert!(matches!(p.caption(&[office_frame()]), Err(AdapterError::Caption(_))));
        assert_eq!(t.requests().len(), 2);
    }
}
