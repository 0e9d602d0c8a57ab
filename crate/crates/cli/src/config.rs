//! Resolved per-command settings. Each starts from defaults, is overlaid with
//! the `--config` file, then with explicit flags, and is echoed next to the
//! outputs so a run can be repeated with `--config <echo>`.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use qualrank_core::estimator::{FitOptions, ModelVariant};
use qualrank_core::evaluation::CohortRule;
use qualrank_core::ingest::{FilterConfig, FuzzBenchmark};
use qualrank_core::sim::{SimConfig, TruthSpec};
use qualrank_core::Mode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Read a config file; a missing `--config` is an empty overlay.
pub fn load_overlay(path: Option<&Path>) -> Result<Value> {
    let Some(path) = path else {
        return Ok(Value::Object(Default::default()));
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let value: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    anyhow::ensure!(value.is_object(), "config {} must hold a JSON object", path.display());
    Ok(value)
}

fn merge(base: &mut Value, overlay: &Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

/// `defaults` with every field present in `overlay` replaced.
pub fn overlay<T: Serialize + DeserializeOwned>(defaults: T, overlay: &Value) -> Result<T> {
    let mut value = serde_json::to_value(defaults)?;
    merge(&mut value, overlay);
    serde_json::from_value(value).context("config file does not match the command's settings")
}

/// The mode named by the overlay at `pointer`, if any.
pub fn overlay_mode(overlay: &Value, pointer: &str) -> Result<Option<Mode>> {
    overlay.pointer(pointer).map(|v| serde_json::from_value(v.clone())).transpose().context("invalid mode in config")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InputConfig {
    pub mode: Mode,
    pub apply_filter: bool,
    pub filter: FilterConfig,
}

impl InputConfig {
    pub fn for_mode(mode: Mode) -> Self {
        Self { mode, apply_filter: true, filter: FilterConfig::for_mode(mode) }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub sim: SimConfig,
    pub truth: TruthSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitConfig {
    pub input: InputConfig,
    pub variant: ModelVariant,
    pub fit: FitOptions,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QualityConfig {
    pub input: InputConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvaluateConfig {
    pub input: InputConfig,
    pub k: usize,
    pub seed: u64,
    pub variants: Vec<ModelVariant>,
    /// Variant of the accuracy table.
    pub variant: ModelVariant,
    pub fit: FitOptions,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DefuzzConfig {
    pub benchmark: FuzzBenchmark,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CohortConfig {
    pub input: InputConfig,
    pub page_size: u32,
    pub rule: CohortRule,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportConfig {
    pub input: InputConfig,
    pub dataset: Option<String>,
    pub figures: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overlay_replaces_only_named_fields() {
        let base = InputConfig::for_mode(Mode::Hn);
        let merged = overlay(base.clone(), &json!({"filter": {"max_age_hours": 3.0}})).unwrap();
        assert_eq!(merged.filter.max_age_hours, 3.0);
        assert_eq!(merged.filter.min_observations, base.filter.min_observations);
        assert!(merged.apply_filter);
    }

    #[test]
    fn bad_overlay_is_an_error() {
        assert!(overlay(InputConfig::for_mode(Mode::Hn), &json!({"mode": "myspace"})).is_err());
        assert_eq!(overlay_mode(&json!({"input": {"mode": "reddit"}}), "/input/mode").unwrap(), Some(Mode::Reddit));
    }
}
