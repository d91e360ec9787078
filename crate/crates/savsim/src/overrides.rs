//! `key=value` overrides addressed by dotted paths into a JSON document,
//! e.g. `policy.overdue_threshold=900` or `demand.party_size_weights.0=1`.

use std::str::FromStr;

use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OverrideError {
    #[error("override '{0}' is not of the form key=value")]
    Syntax(String),
    #[error("override path '{0}' does not name an existing field")]
    UnknownField(String),
}

impl FromStr for Override {
    type Err = OverrideError;

    /// The value is read as JSON when it parses as JSON and as a plain string
    /// otherwise, so `profile=aggressive` needs no quoting.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (key, raw) = s
            .split_once('=')
            .ok_or_else(|| OverrideError::Syntax(s.to_owned()))?;
        let key = key.trim();
        if key.is_empty() || key.split('.').any(str::is_empty) {
            return Err(OverrideError::Syntax(s.to_owned()));
        }
        let raw = raw.trim();
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
        Ok(Self {
            path: key.split('.').map(str::to_owned).collect(),
            value,
        })
    }
}

impl Override {
    pub fn key(&self) -> String {
        self.path.join(".")
    }
}

/// Replaces existing fields only; a path that does not resolve is an error.
pub fn apply_overrides(doc: &mut Value, overrides: &[Override]) -> Result<(), OverrideError> {
    for o in overrides {
        let mut at = &mut *doc;
        for segment in &o.path {
            at = match at {
                Value::Object(map) => map.get_mut(segment),
                Value::Array(items) => segment.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
                _ => None,
            }
            .ok_or_else(|| OverrideError::UnknownField(o.key()))?;
        }
        *at = o.value.clone();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn parses_json_and_bare_strings() {
        let o: Override = "policy.overdue_threshold=900".parse().unwrap();
        assert_eq!(o.path, vec!["policy", "overdue_threshold"]);
        assert_eq!(o.value, json!(900));
        let o: Override = "profile=aggressive".parse().unwrap();
        assert_eq!(o.value, json!("aggressive"));
        assert!("novalue".parse::<Override>().is_err());
        assert!("a..b=1".parse::<Override>().is_err());
    }

    #[test]
    fn only_existing_fields_are_replaced() {
        let mut doc = json!({"policy": {"capacity": 5}, "w": [0.5, 0.5]});
        apply_overrides(
            &mut doc,
            &[
                "policy.capacity=4".parse().unwrap(),
                "w.1=0.25".parse().unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(doc, json!({"policy": {"capacity": 4}, "w": [0.5, 0.25]}));
        let err = apply_overrides(&mut doc, &["policy.seats=4".parse().unwrap()]).unwrap_err();
        assert_eq!(err, OverrideError::UnknownField("policy.seats".into()));
        assert!(apply_overrides(&mut doc, &["w.7=1".parse().unwrap()]).is_err());
    }
}
