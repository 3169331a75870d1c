//! JSON config files merged under command-line flags.
//!
//! A config file is a JSON object whose keys are option names with
//! underscores (`time_limit`, `alphas`, ...). Keys at the top level apply to
//! every subcommand; an object keyed by a subcommand name (`"fit": {...}`)
//! applies to that subcommand only and wins over the top level. Flags given
//! on the command line win over both.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::InputError;

pub const SUBCOMMANDS: [&str; 7] = ["fit", "bench", "distcheck", "sweep", "simulate", "classify", "metrics"];

pub fn load(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| InputError(format!("cannot read config {}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| InputError(format!("config {}: {e}", path.display())))?;
    if !v.is_object() {
        bail!(InputError(format!("config {} is not a JSON object", path.display())));
    }
    Ok(v)
}

fn section(config: &Value, name: &str) -> Map<String, Value> {
    let mut out = Map::new();
    if let Some(obj) = config.as_object() {
        for (k, v) in obj {
            if !SUBCOMMANDS.contains(&k.as_str()) {
                out.insert(k.clone(), v.clone());
            }
        }
        if let Some(Value::Object(sub)) = obj.get(name) {
            for (k, v) in sub {
                out.insert(k.clone(), v.clone());
            }
        }
    }
    out
}

/// Overlays the flags that were actually given (non-null, non-false) on the
/// config section for `name`.
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Value>, name: &str) -> Result<T> {
    let mut merged = config.map(|c| section(c, name)).unwrap_or_default();
    let given = serde_json::to_value(flags).context("serializing flags")?;
    if let Value::Object(obj) = given {
        for (k, v) in obj {
            if !(v.is_null() || v == Value::Bool(false)) {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| InputError(format!("{name} options: {e}")).into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, PartialEq, Serialize, Deserialize)]
    #[serde(default)]
    struct Opts {
        n: Option<usize>,
        seed: Option<u64>,
        accelerated: bool,
    }

    #[test]
    fn flags_beat_sections_beat_top_level() {
        let cfg = serde_json::json!({"n": 5, "seed": 1, "sweep": {"seed": 2, "accelerated": true}, "fit": {"n": 9}});
        let flags = Opts { n: Some(7), ..Opts::default() };
        let got = merge(&flags, Some(&cfg), "sweep").unwrap();
        assert_eq!(got, Opts { n: Some(7), seed: Some(2), accelerated: true });
        let got = merge(&Opts::default(), Some(&cfg), "fit").unwrap();
        assert_eq!(got, Opts { n: Some(9), seed: Some(1), accelerated: false });
    }

    #[test]
    fn bad_types_are_input_errors() {
        let cfg = serde_json::json!({"n": "many"});
        let err = merge(&Opts::default(), Some(&cfg), "fit").unwrap_err();
        assert!(err.downcast_ref::<InputError>().is_some());
    }
}
