//! Layered configuration: file, then `EVALSCALE_OVERRIDES`, then flags.

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::path::Path;

pub const ENV_OVERRIDES: &str = "EVALSCALE_OVERRIDES";

/// Where each layer of the effective configuration came from.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub file: Option<String>,
    pub env: Vec<String>,
    pub flags: Vec<String>,
}

/// `k=v` where `k` is a dotted path and `v` is JSON, or a bare string.
fn parse_pair(pair: &str) -> Result<(Vec<String>, Value)> {
    let (key, raw) = pair
        .split_once('=')
        .ok_or_else(|| anyhow!("override {pair:?} is not of the form key=value"))?;
    let key = key.trim();
    if key.is_empty() {
        bail!("override {pair:?} has an empty key");
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    Ok((key.split('.').map(str::to_string).collect(), value))
}

fn set_path(root: &mut Value, path: &[String], value: Value) -> Result<()> {
    let mut cur = root;
    for (i, seg) in path.iter().enumerate() {
        if !cur.is_object() {
            // Replacing `null` (an unset optional section) with an object.
            if cur.is_null() {
                *cur = Value::Object(Map::new());
            } else {
                bail!("cannot set {} inside a non-object value", path.join("."));
            }
        }
        let obj = cur.as_object_mut().expect("object");
        if i + 1 == path.len() {
            obj.insert(seg.clone(), value);
            return Ok(());
        }
        cur = obj.entry(seg.clone()).or_insert(Value::Null);
    }
    Ok(())
}

/// Entries of the environment layer, separated by `;`.
pub fn env_pairs() -> Vec<String> {
    std::env::var(ENV_OVERRIDES)
        .map(|v| v.split(';').map(str::trim).filter(|p| !p.is_empty()).map(str::to_string).collect())
        .unwrap_or_default()
}

/// Builds a config from an optional JSON file and override layers.
/// `alias` renames top-level keys (for example `C` to `width`).
pub fn layered<T>(file: Option<&Path>, flags: &[String], alias: fn(&str) -> Option<&'static str>) -> Result<(T, Provenance)>
where
    T: Serialize + DeserializeOwned + Default,
{
    let mut root = match file {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            // Round-trip so aliases in the file are normalized before overrides land.
            let t: T = serde_json::from_value(v).with_context(|| format!("invalid config {}", p.display()))?;
            serde_json::to_value(t)?
        }
        None => serde_json::to_value(T::default())?,
    };
    let env = env_pairs();
    for pair in env.iter().chain(flags) {
        let (mut path, value) = parse_pair(pair)?;
        if let Some(full) = alias(&path[0]) {
            path[0] = full.to_string();
        }
        set_path(&mut root, &path, value).with_context(|| format!("applying override {pair:?}"))?;
    }
    let config = serde_json::from_value(root).context("configuration after overrides")?;
    let provenance = Provenance {
        file: file.map(|p| p.display().to_string()),
        env,
        flags: flags.to_vec(),
    };
    Ok((config, provenance))
}

pub fn no_alias(_: &str) -> Option<&'static str> {
    None
}

pub fn run_alias(key: &str) -> Option<&'static str> {
    match key {
        "C" => Some("width"),
        "L" => Some("depth"),
        "K" => Some("samples"),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use evalscale::model::RunConfig;

    #[test]
    fn flags_override_defaults() {
        let flags = vec!["C=4".to_string(), "L=5".into(), "K=2".into(), "retry.attempts=7".into()];
        let (cfg, prov): (RunConfig, _) = layered(None, &flags, run_alias).unwrap();
        assert_eq!(cfg.planned_evaluations(), 40);
        assert_eq!(cfg.retry.attempts, 7);
        assert_eq!(prov.flags.len(), 4);
    }

    #[test]
    fn nested_optional_sections() {
        let flags = vec![r#"pruning={"cutoffs":[{"at_depth":2,"keep_fraction":0.5}]}"#.to_string()];
        let (cfg, _): (RunConfig, _) = layered(None, &flags, run_alias).unwrap();
        assert_eq!(cfg.pruning.unwrap().cutoffs[0].at_depth, 2);
        assert!(layered::<RunConfig>(None, &["nonsense".into()], run_alias).is_err());
        assert!(layered::<RunConfig>(None, &["no_such_field=1".into()], run_alias).is_err());
    }
}
