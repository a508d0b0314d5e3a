//! Training configs and experiment plans from TOML or JSON files.
//!
//! A training config has the sections `[model]`, `[discriminator]`, `[loss]`,
//! `[schedule]`, `[data]` and `[augment]` plus top-level `name`, `seed` and
//! `run_dir`. `[model]`, `[discriminator]` and `[schedule]` accept a
//! `preset` key whose fields the remaining keys override.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::augment::AugmentPolicy;
use crate::error::{Error, Result};
use crate::experiments::ExperimentPlan;
use crate::nets::{ArchSpec, DiscSpec};
use crate::optim::PlateauSchedule;
use crate::raster::Split;
use crate::seg::{ModeKind, NirSource};
use crate::train::{GanLossSpec, TrainConfig};

/// Parses a file as JSON when its extension is `.json`, TOML otherwise.
pub fn load_value(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        serde_json::from_str(&text).map_err(|e| Error::format(path, e))
    } else {
        let v: toml::Value = toml::from_str(&text).map_err(|e| Error::format(path, e))?;
        serde_json::to_value(v).map_err(|e| Error::format(path, e))
    }
}

/// Recursively overlays `over` onto `base`; non-object values replace.
pub fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

fn decode<T: DeserializeOwned>(v: Value, what: &str) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::Config(format!("invalid [{what}] section: {e}")))
}

fn overlay<T: Serialize + DeserializeOwned>(base: T, over: Value, what: &str) -> Result<T> {
    let mut v = serde_json::to_value(base).expect("config types serialize");
    merge(&mut v, &over);
    decode(v, what)
}

fn section(root: &Map<String, Value>, key: &str) -> Result<Map<String, Value>> {
    match root.get(key) {
        None => Ok(Map::new()),
        Some(Value::Object(m)) => Ok(m.clone()),
        Some(other) => Err(Error::Config(format!("[{key}] must be a table, got {other}"))),
    }
}

fn take_str(m: &mut Map<String, Value>, key: &str, what: &str) -> Result<Option<String>> {
    match m.remove(key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(other) => Err(Error::Config(format!("[{what}] {key} must be a string, got {other}"))),
    }
}

fn model_section(m: Map<String, Value>, default: ArchSpec) -> Result<ArchSpec> {
    let mut m = m;
    let base = match take_str(&mut m, "preset", "model")? {
        Some(p) => ArchSpec::preset(&p)?,
        None => default,
    };
    let spec: ArchSpec = overlay(base, Value::Object(m), "model")?;
    spec.validate()?;
    Ok(spec)
}

fn disc_section(m: Map<String, Value>) -> Result<DiscSpec> {
    let mut m = m;
    let base_filters = match m.remove("base_filters") {
        None => 16,
        Some(v) => v
            .as_u64()
            .ok_or_else(|| Error::Config("[discriminator] base_filters must be an integer".into()))?
            as usize,
    };
    let base = match take_str(&mut m, "preset", "discriminator")?.as_deref() {
        None | Some("rf70") => DiscSpec::rf70(base_filters),
        Some("rf34") => DiscSpec::rf34(base_filters),
        Some("rf142") => DiscSpec::rf142(base_filters),
        Some(other) => return Err(Error::Config(format!("unknown discriminator preset `{other}`"))),
    };
    overlay(base, Value::Object(m), "discriminator")
}

fn schedule_section(m: Map<String, Value>, default: TrainConfig) -> Result<TrainConfig> {
    let mut m = m;
    let mut cfg = match take_str(&mut m, "preset", "schedule")? {
        Some(p) => TrainConfig::preset(&p)?,
        None => default,
    };
    if let Some(p) = m.remove("plateau") {
        cfg.schedule = match p {
            Value::Bool(false) | Value::Null => None,
            Value::Bool(true) => Some(PlateauSchedule::default()),
            table => Some(overlay(PlateauSchedule::default(), table, "schedule.plateau")?),
        };
    }
    if let Some(lr) = m.remove("lr") {
        let lr = lr.as_f64().ok_or_else(|| Error::Config("[schedule] lr must be a number".into()))?;
        cfg.optimizer = cfg.optimizer.with_lr(lr);
    }
    overlay(cfg, Value::Object(m), "schedule")
}

/// The `[data]` section: inputs and outputs of a command.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub manifest: Option<PathBuf>,
    /// Checkpoint to fine-tune or evaluate.
    pub checkpoint: Option<PathBuf>,
    /// Generator checkpoint for the RGB+artificial NIR mode.
    pub generator: Option<PathBuf>,
    pub mode: Option<ModeKind>,
    pub nir_source_at_train: NirSource,
    /// Scene image directory or tile for `gen-nir` and `ndvi`.
    pub scene: Option<PathBuf>,
    pub stride: Option<usize>,
    pub split: Option<Split>,
}

/// A fully resolved training config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainFile {
    pub model: ArchSpec,
    pub discriminator: DiscSpec,
    pub loss: GanLossSpec,
    pub schedule: TrainConfig,
    pub data: DataSection,
}

impl TrainFile {
    /// Resolves `root` on top of the given model and schedule defaults.
    pub fn from_value(root: &Value, model: ArchSpec, schedule: TrainConfig) -> Result<Self> {
        let empty = Map::new();
        let root = match root {
            Value::Object(m) => m,
            Value::Null => &empty,
            other => return Err(Error::Config(format!("config root must be a table, got {other}"))),
        };
        for key in root.keys() {
            if !matches!(
                key.as_str(),
                "name" | "seed" | "run_dir" | "model" | "discriminator" | "loss" | "schedule" | "data" | "augment"
            ) {
                return Err(Error::Config(format!("unknown config key `{key}`")));
            }
        }
        let model = model_section(section(root, "model")?, model)?;
        let discriminator = disc_section(section(root, "discriminator")?)?;
        let loss: GanLossSpec = overlay(GanLossSpec::default(), Value::Object(section(root, "loss")?), "loss")?;
        loss.validate()?;
        let mut schedule = schedule_section(section(root, "schedule")?, schedule)?;
        if let Some(name) = root.get("name") {
            schedule.name = decode(name.clone(), "name")?;
        }
        if let Some(seed) = root.get("seed") {
            schedule.seed = decode(seed.clone(), "seed")?;
        }
        if let Some(dir) = root.get("run_dir") {
            schedule.run_dir = Some(decode(dir.clone(), "run_dir")?);
        }
        if let Some(aug) = root.get("augment") {
            schedule.augment = overlay(schedule.augment.clone(), aug.clone(), "augment")?;
        }
        schedule.validate()?;
        let data: DataSection = decode(Value::Object(section(root, "data")?), "data")?;
        Ok(TrainFile {
            model,
            discriminator,
            loss,
            schedule,
            data,
        })
    }

    pub fn load(path: &Path, model: ArchSpec, schedule: TrainConfig) -> Result<Self> {
        Self::from_value(&load_value(path)?, model, schedule)
    }

    pub fn augment(&self) -> &AugmentPolicy {
        &self.schedule.augment
    }
}

/// Resolves an experiment plan. Keys of an `[experiment]` table apply at top
/// level, `[model]` is the segmenter and `[schedule]` its training schedule;
/// `[generator]` accepts the same `model`, `discriminator`, `loss` and
/// `schedule` keys as a training config plus `checkpoint` and `recipe`.
pub fn plan_from_value(root: &Value) -> Result<ExperimentPlan> {
    let mut root = match root {
        Value::Object(m) => m.clone(),
        other => return Err(Error::Config(format!("plan root must be a table, got {other}"))),
    };
    if let Some(Value::Object(exp)) = root.remove("experiment") {
        root.extend(exp);
    }
    let defaults = ExperimentPlan::default();
    let segmenter = model_section(section(&root, "model")?, defaults.segmenter.clone())?;
    let schedule = schedule_section(section(&root, "schedule")?, defaults.schedule.clone())?;
    let mut generator = defaults.generator.clone();
    let mut gen = section(&root, "generator")?;
    if !gen.is_empty() {
        if let Some(ck) = gen.remove("checkpoint") {
            generator.checkpoint = decode(ck, "generator.checkpoint")?;
        }
        if let Some(r) = gen.remove("recipe") {
            generator.recipe = Some(overlay(defaults.dataset.clone(), r, "generator.recipe")?);
        }
        let file = TrainFile::from_value(&Value::Object(gen), generator.model.clone(), generator.schedule.clone())?;
        generator.model = file.model;
        generator.discriminator = file.discriminator;
        generator.loss = file.loss;
        generator.schedule = file.schedule;
    }
    for key in ["model", "schedule", "generator"] {
        root.remove(key);
    }
    let mut plan: ExperimentPlan = overlay(defaults, Value::Object(root), "experiment")?;
    plan.segmenter = segmenter;
    plan.schedule = schedule;
    plan.generator = generator;
    plan.validate()?;
    Ok(plan)
}

pub fn load_plan(path: &Path) -> Result<ExperimentPlan> {
    plan_from_value(&load_value(path)?)
}
