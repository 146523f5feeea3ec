//! Simulation config files: JSON, or `key = value` lines with dotted keys
//! for nested fields (`mu.tau = 0.5`). Values are parsed as JSON where
//! possible and taken as strings otherwise; `#` starts a comment.

use rdclust::simlab::SimulationConfig;
use serde_json::{Map, Value};

pub fn parse_config(text: &str) -> Result<SimulationConfig, String> {
    let value = if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| format!("invalid JSON config: {e}"))?
    } else {
        key_value_to_json(text)?
    };
    serde_json::from_value(value).map_err(|e| format!("invalid config: {e}"))
}

fn key_value_to_json(text: &str) -> Result<Value, String> {
    let mut root = Map::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", lineno + 1))?;
        let value = value.trim();
        let parsed = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
        let path: Vec<&str> = key.trim().split('.').map(str::trim).collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(format!("line {}: empty key segment in `{}`", lineno + 1, key.trim()));
        }
        insert(&mut root, &path, parsed).map_err(|e| format!("line {}: {e}", lineno + 1))?;
    }
    Ok(Value::Object(root))
}

fn insert(map: &mut Map<String, Value>, path: &[&str], value: Value) -> Result<(), String> {
    let (head, rest) = path.split_first().expect("nonempty path");
    if rest.is_empty() {
        if map.insert(head.to_string(), value).is_some() {
            return Err(format!("duplicate key `{head}`"));
        }
        return Ok(());
    }
    let entry = map.entry(head.to_string()).or_insert_with(|| Value::Object(Map::new()));
    match entry {
        Value::Object(inner) => insert(inner, rest, value),
        _ => Err(format!("`{head}` is both a value and a table")),
    }
}
