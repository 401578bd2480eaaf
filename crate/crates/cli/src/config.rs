//! Config file loading: TOML (or a JSON run summary) merged over the
//! defaults, then `key=value` overrides, then validation.

use std::path::Path;

use learned_gc::{ConfigError, ExperimentConfig, MatrixSpec};
use thiserror::Error;
use toml::{Table, Value};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad override {0:?}: expected key=value")]
    BadOverride(String),
    #[error("config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// A single run's config, plus the matrix when the file has a `[matrix]`
/// section.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub config: ExperimentConfig,
    pub matrix: Option<MatrixSpec>,
}

pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Loaded, LoadError> {
    let mut file = match path {
        Some(p) => read_table(p)?,
        None => Table::new(),
    };
    let matrix = file.remove("matrix");
    let mut merged = defaults();
    merge(&mut merged, file);
    for ov in overrides {
        apply_override(&mut merged, ov)?;
    }
    let config: ExperimentConfig = Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| LoadError::Invalid(e.message().to_string()))?;
    config.validate()?;
    let matrix = match matrix {
        Some(m) => {
            let spec: MatrixSpec = m.try_into().map_err(|e: toml::de::Error| {
                LoadError::Invalid(format!("matrix: {}", e.message()))
            })?;
            spec.expand(&config)?;
            Some(spec)
        }
        None => None,
    };
    Ok(Loaded { config, matrix })
}

fn defaults() -> Table {
    match Value::try_from(ExperimentConfig::default()).expect("defaults serialize") {
        Value::Table(t) => t,
        _ => unreachable!("config is a struct"),
    }
}

fn read_table(path: &Path) -> Result<Table, LoadError> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Read {
        path: shown.clone(),
        source,
    })?;
    let parse_err = |reason: String| LoadError::Parse {
        path: shown.clone(),
        reason,
    };
    if path.extension().is_some_and(|e| e == "json") {
        // a run summary carries its config under "config"
        let mut json: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?;
        if json.get("epochs").is_some() {
            json = json["config"].take();
        }
        match Value::try_from(json).map_err(|e| parse_err(e.to_string()))? {
            Value::Table(t) => Ok(t),
            _ => Err(parse_err("expected an object".into())),
        }
    } else {
        text.parse::<Table>()
            .map_err(|e| parse_err(e.message().to_string()))
    }
}

/// The threshold may be spelled `threshold_M`.
fn canonical_key(k: &str) -> &str {
    if k == "threshold_M" {
        "threshold_m"
    } else {
        k
    }
}

/// File values replace defaults key by key; nested tables merge.
fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        let k = canonical_key(&k).to_string();
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn apply_override(table: &mut Table, ov: &str) -> Result<(), LoadError> {
    let (key, raw) = ov
        .split_once('=')
        .ok_or_else(|| LoadError::BadOverride(ov.to_string()))?;
    let key = key.trim();
    let path: Vec<String> = key
        .split('.')
        .map(|p| canonical_key(p).to_string())
        .collect();
    let value = parse_value(raw.trim());
    let (last, parents) = path.split_last().expect("split yields one part");
    let mut cur = table;
    for p in parents {
        cur = match cur.get_mut(p) {
            Some(Value::Table(t)) => t,
            _ => return Err(LoadError::UnknownKey(key.to_string())),
        };
    }
    if !cur.contains_key(last) {
        return Err(LoadError::UnknownKey(key.to_string()));
    }
    cur.insert(last.clone(), value);
    Ok(())
}

/// A TOML literal if it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}
