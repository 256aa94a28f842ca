//! Line-oriented operator console. Every state-changing command goes through
//! the runtime's injection queue, so a transcript of accepted commands
//! replays to the same trace.

use serde::Deserialize;

use super::scenario::{ScenarioDoc, ScenarioError};
use crate::runtime::{Runtime, TaskTemplate, Trace};
use crate::tasks::ScheduleMode;
use crate::tools::{Mutation, ToolSpec};

pub const USAGE: &str = "commands:
  step N                    advance N ticks and print their events
  say \"<instruction>\"       queue a user instruction for the next tick
  disturb <mutation json>   queue a world disturbance for the next tick
  register-tool <file|json> register a tool spec
  schedule <json>           queue {\"template\": ..., \"mode\": ...} for the next tick
  dump tasks|graph|history  print current state
  quit";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplOutput {
    Text(String),
    /// Unknown or malformed input; nothing changed.
    Usage(String),
    Quit,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleArg {
    template: TaskTemplate,
    mode: ScheduleMode,
}

pub struct Repl {
    runtime: Runtime,
    transcript: Vec<String>,
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    s.strip_prefix('"').and_then(|r| r.strip_suffix('"')).unwrap_or(s)
}

impl Repl {
    pub fn new(doc: &ScenarioDoc) -> Result<Self, ScenarioError> {
        Ok(Repl {
            runtime: doc.build_runtime()?,
            transcript: Vec::new(),
        })
    }

    pub fn runtime(&self) -> &Runtime {
        &self.runtime
    }

    /// Accepted state-changing commands, in a self-contained form.
    pub fn transcript(&self) -> &[String] {
        &self.transcript
    }

    pub fn trace(&self) -> Trace {
        self.runtime.trace()
    }

    fn usage(why: impl std::fmt::Display) -> ReplOutput {
        ReplOutput::Usage(format!("{why}\n{USAGE}"))
    }

    pub fn execute(&mut self, line: &str) -> ReplOutput {
        let line = line.trim();
        let (cmd, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        let now = self.runtime.now();
        match cmd {
            "quit" | "exit" if rest.is_empty() => ReplOutput::Quit,
            "help" => ReplOutput::Text(USAGE.into()),
            "step" => {
                let Ok(n) = rest.parse::<u64>() else {
                    return Self::usage(format!("step needs a tick count, got `{rest}`"));
                };
                match self.runtime.advance(n) {
                    Ok(events) => {
                        self.transcript.push(format!("step {n}"));
                        ReplOutput::Text(events.iter().map(|e| e.to_line()).collect::<Vec<_>>().join("\n"))
                    }
                    Err(e) => Self::usage(e),
                }
            }
            "say" => {
                let text = unquote(rest);
                match self.runtime.submit_instruction(text, now) {
                    Ok(id) => {
                        self.transcript.push(format!("say {}", serde_json::Value::from(text)));
                        ReplOutput::Text(format!("queued {id} for tick {}", now.plus(1)))
                    }
                    Err(e) => Self::usage(e),
                }
            }
            "disturb" => match serde_json::from_str::<Mutation>(rest) {
                Ok(m) => match self.runtime.inject_disturbance(m.clone(), now) {
                    Ok(at) => {
                        self.transcript
                            .push(format!("disturb {}", serde_json::to_string(&m).expect("serializable")));
                        ReplOutput::Text(format!("disturbance queued for tick {at}"))
                    }
                    Err(e) => Self::usage(e),
                },
                Err(e) => Self::usage(format!("bad mutation: {e}")),
            },
            "register-tool" => {
                let text = if rest.starts_with('{') {
                    rest.to_string()
                } else {
                    match std::fs::read_to_string(rest) {
                        Ok(t) => t,
                        Err(e) => return Self::usage(format!("cannot read `{rest}`: {e}")),
                    }
                };
                let spec: ToolSpec = match serde_json::from_str(&text) {
                    Ok(s) => s,
                    Err(e) => return Self::usage(format!("bad tool spec: {e}")),
                };
                match self.runtime.register_tool(spec.clone()) {
                    Ok(()) => {
                        let inline = serde_json::to_string(&spec).expect("serializable");
                        self.transcript.push(format!("register-tool {inline}"));
                        ReplOutput::Text(format!("registered tool `{}`", spec.name))
                    }
                    Err(e) => Self::usage(e),
                }
            }
            "schedule" => match serde_json::from_str::<ScheduleArg>(rest) {
                Ok(s) => match self.runtime.schedule(s.template, s.mode, now) {
                    Ok(at) => {
                        self.transcript.push(format!("schedule {rest}"));
                        ReplOutput::Text(format!("schedule queued for tick {at}"))
                    }
                    Err(e) => Self::usage(e),
                },
                Err(e) => Self::usage(format!("bad schedule: {e}")),
            },
            "dump" => match dump(&self.runtime, rest) {
                Some(text) => ReplOutput::Text(text),
                None => Self::usage(format!("cannot dump `{rest}`")),
            },
            "" => ReplOutput::Text(String::new()),
            other => Self::usage(format!("unknown command `{other}`")),
        }
    }
}

/// Text dump of one part of runtime state.
pub fn dump(rt: &Runtime, what: &str) -> Option<String> {
    let lines = match what {
        "tasks" => rt.tasks().snapshot().dump_lines(),
        "graph" => rt.graph().dump_lines(),
        "history" => rt.history().dump_lines(),
        _ => return None,
    };
    Some(lines.join("\n"))
}

/// Re-executes a transcript against a fresh runtime built from `doc`.
pub fn replay(doc: &ScenarioDoc, transcript: &[String]) -> Result<Trace, ScenarioError> {
    let mut repl = Repl::new(doc)?;
    for (i, line) in transcript.iter().enumerate() {
        match repl.execute(line) {
            ReplOutput::Usage(msg) => {
                return Err(ScenarioError::Invalid(vec![format!(
                    "transcript line {}: {msg}",
                    i + 1
                )]));
            }
            ReplOutput::Quit => break,
            ReplOutput::Text(_) => {}
        }
    }
    Ok(repl.trace())
}
