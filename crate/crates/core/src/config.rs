//! Plain-text run configuration.
//!
//! ```text
//! # comment
//! seed = 42
//!
//! [generator]
//! frames_per_clip = 500
//!
//! [generator.schema]
//! attr_cardinalities = [3, 2]
//!
//! [profiling.compressed_train]
//! learning_rate = 0.01
//! ```
//!
//! Section names are dotted paths into [`RunConfig`]; values are JSON
//! scalars or arrays. The top-level `seed` derives every stage seed, and an
//! explicit per-stage `seed` key overrides its derived value. Unknown keys
//! are rejected.

use std::path::Path;

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::pipeline::RunConfig;

/// One `key = value` assignment with its dotted path.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub path: Vec<String>,
    pub value: Value,
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub assignments: Vec<Assignment>,
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.trim_matches('"').to_string()))
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub fn parse_config(text: &str) -> Result<ConfigFile> {
    let mut file = ConfigFile::default();
    let mut section: Vec<String> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: "unterminated section header".into(),
            })?;
            section = name.trim().split('.').map(|s| s.trim().to_string()).collect();
            if !section.iter().all(|s| valid_name(s)) {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("bad section name {name:?}"),
                });
            }
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            msg: "expected `key = value`".into(),
        })?;
        let key = key.trim();
        if !valid_name(key) {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("bad key {key:?}"),
            });
        }
        let value = parse_value(value.trim());
        if section.is_empty() && key == "seed" {
            file.seed = Some(value.as_u64().ok_or_else(|| Error::Parse {
                line: line_no,
                msg: "seed must be a non-negative integer".into(),
            })?);
            continue;
        }
        let mut path = section.clone();
        path.push(key.to_string());
        file.assignments.push(Assignment {
            path,
            value,
            line: line_no,
        });
    }
    Ok(file)
}

fn set_path(root: &mut Value, a: &Assignment) -> Result<()> {
    let unknown = || Error::Parse {
        line: a.line,
        msg: format!("unknown key {}", a.path.join(".")),
    };
    let mut node = root;
    for part in &a.path {
        node = node.as_object_mut().and_then(|o| o.get_mut(part)).ok_or_else(unknown)?;
    }
    if node.is_object() {
        return Err(unknown());
    }
    *node = a.value.clone();
    Ok(())
}

impl ConfigFile {
    /// Build a [`RunConfig`] from defaults, a master seed, then every
    /// assignment in file order.
    pub fn resolve(&self, seed_override: Option<u64>) -> Result<RunConfig> {
        let seed = seed_override.or(self.seed).unwrap_or(42);
        let mut root = serde_json::to_value(RunConfig::with_seed(seed))?;
        for a in &self.assignments {
            set_path(&mut root, a)?;
        }
        let cfg: RunConfig = serde_json::from_value(root).map_err(|e| Error::Parse {
            line: 0,
            msg: format!("config value has the wrong type: {e}"),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn load_config(path: &Path, seed_override: Option<u64>) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)?.resolve(seed_override)
}

fn emit(out: &mut String, section: &[&str], map: &Map<String, Value>, derived: Option<&Value>) {
    let derived_at = |k: &str| derived.and_then(|d| d.get(k));
    let scalars: Vec<_> = map
        .iter()
        .filter(|(_, v)| !v.is_object() && !v.is_null())
        .filter(|(k, v)| k.as_str() != "seed" || derived_at(k) != Some(*v))
        .collect();
    if !scalars.is_empty() {
        if !section.is_empty() {
            out.push_str(&format!("\n[{}]\n", section.join(".")));
        }
        for (k, v) in scalars {
            out.push_str(&format!("{k} = {v}\n"));
        }
    }
    for (k, v) in map {
        if let Value::Object(child) = v {
            let mut path = section.to_vec();
            path.push(k);
            emit(out, &path, child, derived_at(k));
        }
    }
}

/// Render `cfg` as a config file under master seed `seed`. Stage seeds
/// appear only where they differ from the ones `seed` derives.
pub fn render_config(cfg: &RunConfig, seed: u64) -> Result<String> {
    let root = serde_json::to_value(cfg)?;
    let derived = serde_json::to_value(RunConfig::with_seed(seed))?;
    let mut out = format!("seed = {seed}\n");
    if let Value::Object(map) = root {
        emit(&mut out, &[], &map, Some(&derived));
    }
    Ok(out)
}
