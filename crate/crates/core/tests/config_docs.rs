//! The shipped schema and example stay in step with the configuration types.

use std::path::Path;

use serde_json::Value;

use neuroisp::imgio::{load_config, parse_config, save_config, AppConfig};

fn docs(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs").join(name)
}

#[test]
fn example_parses_and_round_trips() {
    let config = load_config(&docs("example-config.json")).unwrap();
    assert_ne!(config, AppConfig::default());
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    save_config(&p, &config).unwrap();
    assert_eq!(load_config(&p).unwrap(), config);
}

/// Walks a serialized value alongside its schema and returns the paths where
/// the schema is missing a property or lists one the value lacks.
fn mismatches(value: &Value, schema: &Value, path: &str, out: &mut Vec<String>) {
    if let Some(variants) = schema.get("oneOf").and_then(Value::as_array) {
        let tag = value.get("type");
        let chosen = variants.iter().find(|v| v["properties"]["type"]["const"] == *tag.unwrap_or(&Value::Null));
        match chosen {
            Some(v) => mismatches(value, v, path, out),
            None => out.push(format!("{path}: no variant")),
        }
        return;
    }
    match value {
        Value::Object(map) => {
            let props = schema["properties"].as_object().cloned().unwrap_or_default();
            for k in map.keys().filter(|k| !props.contains_key(*k)) {
                out.push(format!("{path}.{k}: not in schema"));
            }
            for k in props.keys().filter(|k| !map.contains_key(*k)) {
                out.push(format!("{path}.{k}: not in config"));
            }
            for (k, v) in map {
                if let Some(s) = props.get(k) {
                    mismatches(v, s, &format!("{path}.{k}"), out);
                }
            }
        }
        Value::Array(items) if schema.get("items").is_some() => {
            for (i, v) in items.iter().enumerate() {
                mismatches(v, &schema["items"], &format!("{path}[{i}]"), out);
            }
        }
        _ => {}
    }
}

#[test]
fn schema_covers_every_field() {
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(docs("config.schema.json")).unwrap()).unwrap();
    let defaults = serde_json::to_value(AppConfig::default()).unwrap();
    let mut out = Vec::new();
    mismatches(&defaults, &schema, "", &mut out);
    assert!(out.is_empty(), "{out:#?}");
    assert_eq!(schema["properties"]["schema_version"]["const"], defaults["schema_version"]);
}

#[test]
fn defaults_serialize_to_a_valid_document() {
    let text = serde_json::to_string(&AppConfig::default()).unwrap();
    assert_eq!(parse_config(&text).unwrap(), AppConfig::default());
}
