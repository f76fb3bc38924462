//! Run configuration: one TOML document with a section per stage. Missing
//! keys take their defaults, unknown keys are errors.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::Tolerance;
use crate::flow::{InterpParams, SmoothParams};
use crate::matching::{BlockMatchParams, FilterParams};
use crate::motionedge::{AlignParams, HarvestParams};
use crate::sedge::{DetectOptions, ForestParams};

/// Environment variable naming a default config file.
pub const CONFIG_ENV: &str = "EDGEFLOW_CONFIG";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchingConfig {
    pub block: BlockMatchParams,
    pub filter: FilterParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub interp: InterpParams,
    /// Run the edge-stopped smoothing pass after interpolation.
    pub smooth_enabled: bool,
    pub smooth: SmoothParams,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            interp: InterpParams::default(),
            smooth_enabled: true,
            smooth: SmoothParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SedgeConfig {
    pub forest: ForestParams,
    pub detect: DetectOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionEdgeConfig {
    /// Suppression radius applied to motion edges before alignment.
    pub nms_radius: usize,
    /// Fixed flow saturation scale; 0 uses each field's 99th percentile.
    pub max_mag: f32,
    pub align: AlignParams,
    pub harvest: HarvestParams,
}

impl Default for MotionEdgeConfig {
    fn default() -> Self {
        MotionEdgeConfig {
            nms_radius: 1,
            max_mag: 0.0,
            align: AlignParams::default(),
            harvest: HarvestParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub iterations: usize,
    /// Frames contributing training samples per iteration.
    pub max_train_frames: usize,
    /// Training samples per iteration (positives plus negatives).
    pub samples_per_iteration: usize,
    /// Sample budget multiplier for the last iteration.
    pub final_boost: f32,
    /// Corpus-wide positives required to train.
    pub min_samples: usize,
    /// Fraction of frames allowed to fail per iteration.
    pub max_failed_fraction: f32,
    /// Only detect edges on evaluation frames in the last iteration.
    pub lazy: bool,
    /// Edge benchmark tolerance in pixels; 0 uses 0.75% of the image diagonal.
    pub eval_tolerance: f32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            iterations: 3,
            max_train_frames: 2000,
            samples_per_iteration: 200_000,
            final_boost: 4.0,
            min_samples: 100,
            max_failed_fraction: 0.1,
            lazy: false,
            eval_tolerance: 0.0,
        }
    }
}

impl PipelineConfig {
    pub fn tolerance(&self) -> Tolerance {
        if self.eval_tolerance > 0.0 {
            Tolerance::Pixels(self.eval_tolerance)
        } else {
            Tolerance::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub matching: MatchingConfig,
    pub flow: FlowConfig,
    pub sedge: SedgeConfig,
    pub motionedge: MotionEdgeConfig,
    pub pipeline: PipelineConfig,
}

/// Keys whose default depends on other values and so have no fixed entry.
const DERIVED_DEFAULTS: [(&str, &str); 2] = [
    ("flow.interp.k", "25 for nw, 100 for la"),
    ("flow.interp.kernel_bandwidth", "0.7 * alpha"),
];

impl Config {
    pub fn from_toml(text: &str) -> Result<Config> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Config> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Applies a `section.key=value` override. The value is read as a TOML
    /// value, falling back to a bare string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        let key = key.trim();
        let raw = raw.trim();
        let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
            Ok(mut t) => t.remove("v").expect("parsed key"),
            Err(_) => toml::Value::String(raw.to_string()),
        };
        let mut doc = toml::Value::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let parts: Vec<&str> = key.split('.').collect();
        let mut cur = &mut doc;
        for (i, part) in parts.iter().enumerate() {
            let table = cur
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))?;
            if i + 1 == parts.len() {
                table.insert(part.to_string(), value.clone());
                break;
            }
            cur = table
                .get_mut(*part)
                .ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))?;
        }
        *self = doc
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("{key}: {}", e.message())))?;
        Ok(())
    }

    /// Every key with its value, one `key = value` per line, sorted.
    pub fn describe(&self) -> Vec<String> {
        fn walk(prefix: &str, v: &toml::Value, out: &mut Vec<String>) {
            match v {
                toml::Value::Table(t) => {
                    for (k, v) in t {
                        let key = if prefix.is_empty() {
                            k.clone()
                        } else {
                            format!("{prefix}.{k}")
                        };
                        walk(&key, v, out);
                    }
                }
                other => out.push(format!("{prefix} = {}", show(other))),
            }
        }
        // parameters are f32; print them without the f64 widening noise
        fn show(v: &toml::Value) -> String {
            match v {
                toml::Value::Float(f) => format!("{:?}", *f as f32),
                toml::Value::Array(a) => format!("[{}]", a.iter().map(show).collect::<Vec<_>>().join(", ")),
                other => other.to_string(),
            }
        }
        let mut out = Vec::new();
        walk("", &toml::Value::try_from(self).expect("config serializes"), &mut out);
        for (k, d) in DERIVED_DEFAULTS {
            if !out.iter().any(|l| l.starts_with(&format!("{k} ="))) {
                out.push(format!("{k} = <{d}>"));
            }
        }
        out.sort();
        out
    }
}
