use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

/// Overlays command-line values on a JSON config file; flags win. Keys of
/// the file are the flag names with underscores.
pub fn resolve<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Path>) -> Result<T> {
    let flags = serde_json::to_value(flags)?;
    let Some(path) = config else {
        return Ok(serde_json::from_value(flags)?);
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut merged: Value =
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let Value::Object(base) = &mut merged else {
        bail!("config {} must be a JSON object", path.display());
    };
    if let Value::Object(overrides) = flags {
        for (k, v) in overrides {
            base.insert(k, v);
        }
    }
    serde_json::from_value(merged).with_context(|| format!("invalid config {}", path.display()))
}

/// The value of a setting that must come from a flag or the config file.
pub fn required<T: Clone>(value: &Option<T>, flag: &str) -> Result<T> {
    value
        .clone()
        .ok_or_else(|| anyhow::anyhow!("missing --{flag} (flag or config key `{}`)", flag.replace('-', "_")))
}

/// Splits `name=path` pairs.
pub fn named_path(spec: &str) -> Result<(String, std::path::PathBuf)> {
    match spec.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), path.into())),
        _ => bail!("expected NAME=PATH, got `{spec}`"),
    }
}

pub fn is_false(b: &bool) -> bool {
    !*b
}
