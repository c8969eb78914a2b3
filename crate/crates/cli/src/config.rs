//! Run configuration: JSON file, dotted-path overrides, validation and the
//! resolved-config hash embedded in every output.

use std::path::Path;

use mtsearch_core::bounds::AchievabilityMode;
use mtsearch_core::channels::{ChannelModel, SizeFunction};
use mtsearch_core::kinematics::SlotSchedule;
use mtsearch_core::montecarlo::{StateDistribution, SweepAxis};
use mtsearch_core::search::DecodeRule;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Version string written next to the config hash.
pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// A number or the literal string `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum AutoOr {
    #[default]
    Auto,
    Value(f64),
}

impl Serialize for AutoOr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Auto => s.serialize_str("auto"),
            Self::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for AutoOr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::String(s) if s == "auto" => Ok(Self::Auto),
            Value::Number(n) => Ok(Self::Value(n.as_f64().expect("finite JSON number"))),
            other => Err(serde::de::Error::custom(format!(
                "expected \"auto\" or a number, got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Slot ending times `n_1 < ... < n_B`.
    pub n: Vec<u32>,
    pub d: usize,
    pub v_plus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub m: u32,
    pub p: AutoOr,
    pub eta: AutoOr,
    pub rule: DecodeRule,
    pub resolution_factor: u32,
    pub cap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub trials: u64,
    pub base_seed: u64,
    pub axis: SweepAxis,
    pub states: StateDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    /// Achievability mode; `None` picks `rcu_exact` for the BSC and
    /// `gaussian_approx` otherwise.
    pub mode: Option<AchievabilityMode>,
    pub eps: f64,
    pub q_grid: usize,
    pub statement_form: bool,
    pub capacity_grid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub n: Vec<u32>,
    /// Rates to evaluate; `None` spans `[0, 2 * threshold]` in 61 points.
    pub rates: Option<Vec<f64>>,
    pub eps_for_veps: f64,
    pub printed_form: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub csv_path: Option<String>,
    pub json_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schedule: ScheduleConfig,
    pub channel: ChannelModel,
    pub design: DesignConfig,
    pub simulation: SimulationConfig,
    pub bounds: BoundsConfig,
    pub phase: PhaseConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schedule: ScheduleConfig {
                n: vec![20],
                d: 1,
                v_plus: 0.025,
            },
            channel: ChannelModel::bsc(0.2, SizeFunction::new(2.0, 0.5)),
            design: DesignConfig {
                m: 2,
                p: AutoOr::Auto,
                eta: AutoOr::Auto,
                rule: DecodeRule::MaxInfoDensity,
                resolution_factor: mtsearch_core::trajectories::DEFAULT_RESOLUTION_FACTOR,
                cap: mtsearch_core::trajectories::DEFAULT_CAP,
            },
            simulation: SimulationConfig {
                trials: 1000,
                base_seed: 1,
                axis: SweepAxis::M(vec![2]),
                states: StateDistribution::Uniform,
            },
            bounds: BoundsConfig {
                mode: None,
                eps: 0.1,
                q_grid: 999,
                statement_form: false,
                capacity_grid: mtsearch_core::infodensity::DEFAULT_GRID,
            },
            phase: PhaseConfig {
                n: vec![100, 200, 400],
                rates: None,
                eps_for_veps: 0.5,
                printed_form: false,
            },
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads `path` (or the defaults), applies `key=value` overrides in order
    /// and validates the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut value = serde_json::to_value(Self::default()).expect("defaults serialize");
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let file: Value =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            merge(&mut value, file);
        }
        for kv in overrides {
            apply_override(&mut value, kv)?;
        }
        let cfg: Self = serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.schedule()?;
        self.channel.validate()?;
        if let AutoOr::Value(p) = self.design.p {
            if !(p > 0.0 && p < 1.0) {
                return Err(CliError::Config(format!("design.p = {p} must lie in (0,1)")));
            }
        }
        if let AutoOr::Value(eta) = self.design.eta {
            if eta.is_nan() || eta < 0.0 {
                return Err(CliError::Config(format!("design.eta = {eta} must be >= 0")));
            }
        }
        if self.design.m == 0 || self.design.resolution_factor == 0 {
            return Err(CliError::Config(
                "design.m and design.resolution_factor must be positive".into(),
            ));
        }
        if !(self.bounds.eps > 0.0 && self.bounds.eps < 1.0) {
            return Err(CliError::Config(format!(
                "bounds.eps = {} must lie in (0,1)",
                self.bounds.eps
            )));
        }
        if self.bounds.q_grid == 0 {
            return Err(CliError::Config("bounds.q_grid must be positive".into()));
        }
        if self.phase.n.is_empty() || self.phase.n.contains(&0) {
            return Err(CliError::Config("phase.n must list positive lengths".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<SlotSchedule, CliError> {
        Ok(SlotSchedule::new(
            self.schedule.n.clone(),
            self.schedule.d,
            self.schedule.v_plus,
        )?)
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form,
    /// ignoring output paths.
    pub fn hash(&self) -> String {
        let resolved = Self {
            output: OutputConfig::default(),
            ..self.clone()
        };
        let canonical = serde_json::to_string(&resolved).expect("config serializes");
        hex::encode(&Sha256::digest(canonical.as_bytes())[..8])
    }
}

/// Recursively overlays `patch` onto `base`.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies `a.b.c=value`; the value is parsed as JSON, falling back to a
/// plain string.
fn apply_override(root: &mut Value, kv: &str) -> Result<(), CliError> {
    let (key, raw) = kv
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {kv:?} is not of the form key=value")))?;
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::Config(format!("override key {key:?} has an empty segment")));
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("override key {key:?}: {part:?} is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}
