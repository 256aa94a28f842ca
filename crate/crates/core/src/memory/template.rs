//! `{name}` placeholder substitution over any serde value.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

pub type Vars = BTreeMap<String, String>;

/// Replaces every `{key}` in every string inside `value`.
pub fn substitute<T: Serialize + DeserializeOwned>(value: &T, vars: &Vars) -> T {
    let mut v = serde_json::to_value(value).expect("template values serialize");
    walk(&mut v, vars);
    serde_json::from_value(v).expect("substitution preserves shape")
}

pub fn fill(text: &str, vars: &Vars) -> String {
    let mut out = text.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

fn walk(v: &mut Value, vars: &Vars) {
    match v {
        Value::String(s) => {
            if s.contains('{') {
                *s = fill(s, vars);
            }
        }
        Value::Array(items) => items.iter_mut().for_each(|i| walk(i, vars)),
        Value::Object(map) => map.values_mut().for_each(|i| walk(i, vars)),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::Predicate;

    #[test]
    fn fills_nested_predicates() {
        let p: Predicate =
            serde_json::from_str(r#"{"all":[{"held":{"object":"{object}"}},{"robot_in":{"room":"{room}"}}]}"#).unwrap();
        let vars: Vars = [
            ("object".to_string(), "paper".to_string()),
            ("room".to_string(), "office".to_string()),
        ]
        .into_iter()
        .collect();
        let filled = substitute(&p, &vars);
        assert_eq!(
            serde_json::to_string(&filled).unwrap(),
            r#"{"all":[{"held":{"object":"paper"}},{"robot_in":{"room":"office"}}]}"#
        );
    }
}
