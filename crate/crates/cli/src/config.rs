use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sidkit::digest::config_digest;
use sidkit::{ProjectionParams, TrainConfig};
use toml::{Table, Value};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            threshold: sidkit::metrics::DEFAULT_THRESHOLD,
        }
    }
}

/// Effective settings for one invocation: config file values with
/// `--set` and flag overrides applied on top.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub projection: ProjectionParams,
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Loads `path` (TOML) if given, then applies `key=value` overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut tree = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                toml::from_str::<Table>(&text)
                    .map_err(|e| CliError::domain(format!("config {}: {}", p.display(), e.message())))?
            }
            None => Table::new(),
        };
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("override `{o}` is not of the form key=value")))?;
            set_dotted(&mut tree, key.trim(), parse_value(raw.trim()))?;
        }
        Value::Table(tree)
            .try_into::<RunConfig>()
            .map_err(|e| CliError::domain(format!("config: {}", e.message())))
    }

    /// Digest of the full effective configuration.
    pub fn digest(&self) -> String {
        config_digest(self)
    }
}

/// TOML literal if it parses as one (`5`, `1e-3`, `true`, `"x"`), bare string otherwise.
fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn set_dotted(tree: &mut Table, key: &str, value: Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::usage(format!("bad override key `{key}`")));
    }
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut node = tree;
    for p in path {
        let entry = node.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::domain(format!("override `{key}`: `{p}` is not a table")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}
