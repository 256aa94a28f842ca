use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use serde_json::Value;

use crate::runtime::{EventKind, RuntimeEvent, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchOp {
    /// Scalar equality, or membership when the field is an array.
    Equals,
    /// Substring of a string field, or of any string in an array field.
    Contains,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Matcher {
    /// Dotted path into the payload, e.g. `args.device`. `@time` is the
    /// event's tick.
    pub path: String,
    pub op: MatchOp,
    pub value: String,
}

impl Matcher {
    fn scalar_matches(&self, v: &Value) -> bool {
        let text = match v {
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            Value::Bool(b) => b.to_string(),
            Value::Null => "null".into(),
            _ => return false,
        };
        match self.op {
            MatchOp::Equals => text == self.value,
            MatchOp::Contains => text.contains(&self.value),
        }
    }

    pub fn matches(&self, e: &RuntimeEvent) -> bool {
        if self.path == "@time" {
            return self.scalar_matches(&Value::from(e.time.0));
        }
        let mut cur = &e.payload;
        for part in self.path.split('.') {
            match cur.get(part) {
                Some(v) => cur = v,
                None => return false,
            }
        }
        match cur {
            Value::Array(items) => items.iter().any(|v| self.scalar_matches(v)),
            v => self.scalar_matches(v),
        }
    }
}

/// One expected step of an execution flow: an event kind plus payload
/// matchers, written `kind(key=value, other~=fragment)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Milestone {
    pub kind: EventKind,
    pub matchers: Vec<Matcher>,
}

impl Milestone {
    pub fn matches(&self, e: &RuntimeEvent) -> bool {
        e.kind == self.kind && self.matchers.iter().all(|m| m.matches(e))
    }

    fn score(&self, e: &RuntimeEvent) -> usize {
        self.matchers.iter().filter(|m| m.matches(e)).count()
    }

    /// Reflexive milestone for an event: kind plus every scalar field at the
    /// top level of its payload.
    pub fn of_event(e: &RuntimeEvent) -> Milestone {
        let mut matchers = Vec::new();
        if let Value::Object(map) = &e.payload {
            for (k, v) in map {
                let value = match v {
                    Value::String(s) => s.clone(),
                    Value::Number(n) => n.to_string(),
                    Value::Bool(b) => b.to_string(),
                    _ => continue,
                };
                matchers.push(Matcher {
                    path: k.clone(),
                    op: MatchOp::Equals,
                    value,
                });
            }
        }
        Milestone { kind: e.kind, matchers }
    }
}

fn needs_quotes(s: &str) -> bool {
    s.is_empty()
        || s.chars()
            .any(|c| matches!(c, ',' | '(' | ')' | '"' | '=' | '~') || c.is_whitespace())
}

impl fmt::Display for Milestone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        if self.matchers.is_empty() {
            return Ok(());
        }
        f.write_str("(")?;
        for (i, m) in self.matchers.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            let op = match m.op {
                MatchOp::Equals => "=",
                MatchOp::Contains => "~=",
            };
            if needs_quotes(&m.value) {
                write!(
                    f,
                    "{}{op}\"{}\"",
                    m.path,
                    m.value.replace('\\', "\\\\").replace('"', "\\\"")
                )?;
            } else {
                write!(f, "{}{op}{}", m.path, m.value)?;
            }
        }
        f.write_str(")")
    }
}

fn split_args(s: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut chars = s.chars();
    let mut quoted = false;
    while let Some(c) = chars.next() {
        match c {
            '\\' if quoted => cur.push(chars.next().ok_or("dangling escape")?),
            '"' => {
                quoted = !quoted;
                cur.push(c);
            }
            ',' if !quoted => out.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    if quoted {
        return Err("unterminated quote".into());
    }
    out.push(cur);
    Ok(out)
}

impl FromStr for Milestone {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (head, body) = match s.find('(') {
            None => (s, None),
            Some(i) => {
                let rest = s[i + 1..]
                    .strip_suffix(')')
                    .ok_or_else(|| format!("milestone `{s}` is missing `)`"))?;
                (&s[..i], Some(rest))
            }
        };
        let kind: EventKind = head.trim().parse()?;
        let mut matchers = Vec::new();
        if let Some(body) = body.filter(|b| !b.trim().is_empty()) {
            for part in split_args(body).map_err(|e| format!("milestone `{s}`: {e}"))? {
                let part = part.trim();
                let (path, op, raw) = if let Some(i) = part.find("~=") {
                    (&part[..i], MatchOp::Contains, &part[i + 2..])
                } else if let Some(i) = part.find('=') {
                    (&part[..i], MatchOp::Equals, &part[i + 1..])
                } else {
                    return Err(format!("milestone `{s}`: matcher `{part}` has no `=`"));
                };
                let path = path.trim();
                if path.is_empty() {
                    return Err(format!("milestone `{s}`: empty key"));
                }
                let raw = raw.trim();
                let value = raw
                    .strip_prefix('"')
                    .and_then(|r| r.strip_suffix('"'))
                    .unwrap_or(raw)
                    .to_string();
                matchers.push(Matcher {
                    path: path.into(),
                    op,
                    value,
                });
            }
        }
        Ok(Milestone { kind, matchers })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    /// Sequence numbers of the events each milestone matched.
    Matched { positions: Vec<u64> },
    Diverged {
        index: usize,
        milestone: String,
        /// Events before this sequence number were already consumed.
        searched_from: u64,
        /// Closest same-kind event after the last match, if any.
        nearest: Option<RuntimeEvent>,
    },
}

impl Verdict {
    pub fn is_match(&self) -> bool {
        matches!(self, Verdict::Matched { .. })
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Matched { positions } => write!(f, "matched {} milestones", positions.len()),
            Verdict::Diverged {
                index,
                milestone,
                searched_from,
                nearest,
            } => {
                write!(
                    f,
                    "diverged at milestone {index} `{milestone}` (searched from seq {searched_from})"
                )?;
                match nearest {
                    Some(e) => write!(f, "; nearest candidate: {}", e.to_line()),
                    None => write!(f, "; no event of that kind follows"),
                }
            }
        }
    }
}

/// Ordered subsequence match; unrelated events in between are ignored.
pub fn compare_golden(trace: &Trace, milestones: &[Milestone]) -> Verdict {
    let events = trace.events();
    let mut pos = 0usize;
    let mut positions = Vec::with_capacity(milestones.len());
    for (i, m) in milestones.iter().enumerate() {
        match events[pos..].iter().position(|e| m.matches(e)) {
            Some(off) => {
                positions.push(events[pos + off].seq);
                pos += off + 1;
            }
            None => {
                let nearest = events[pos..]
                    .iter()
                    .filter(|e| e.kind == m.kind)
                    .max_by_key(|e| (m.score(e), std::cmp::Reverse(e.seq)))
                    .cloned();
                return Verdict::Diverged {
                    index: i,
                    milestone: m.to_string(),
                    searched_from: events.get(pos).map_or(events.len() as u64, |e| e.seq),
                    nearest,
                };
            }
        }
    }
    Verdict::Matched { positions }
}
