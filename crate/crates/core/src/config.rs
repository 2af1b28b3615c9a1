//! Run configuration: defaults, an optional TOML file, then `key=value`
//! overrides, in that order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::descriptors::SwdConfig;
use crate::error::{Error, Result};
use crate::evaluator::TrainConfig;
use crate::meta::ReptileConfig;
use crate::metaset::{Caps, CostModel};
use crate::seed::{self, tag};
use crate::workload::DEFAULT_VARIANCE_FLOOR;

pub const SEED_ENV: &str = "DRIFTGAUGE_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; per-stage seeds derive from it unless set explicitly.
    pub seed: u64,
    pub alpha: f64,
    pub variance_floor: f64,
    pub swd: SwdConfig,
    pub train: TrainConfig,
    pub reptile: ReptileConfig,
    pub cost: CostModel,
    pub caps: Caps,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            alpha: 0.1,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
            swd: SwdConfig::default(),
            train: TrainConfig::default(),
            reptile: ReptileConfig::default(),
            cost: CostModel::default(),
            caps: Caps::default(),
        }
    }
}

fn parse_err(what: &str, e: impl std::fmt::Display) -> Error {
    Error::ParseError(format!("{what}: {e}"))
}

/// Every key of `overlay` must already exist in `base`.
fn merge(base: &mut toml::Table, overlay: toml::Table, prefix: &str) -> Result<()> {
    for (key, value) in overlay {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match (base.get_mut(&key), value) {
            (None, _) => return Err(Error::UnknownKey(path)),
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o, &path)?,
            (Some(toml::Value::Table(_)), _) => {
                return Err(Error::InvalidValue {
                    key: path,
                    reason: "expected a table".into(),
                })
            }
            (Some(slot), v) => *slot = v,
        }
    }
    Ok(())
}

fn override_table(assignment: &str) -> Result<toml::Table> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| parse_err("override", format!("{assignment:?} is not key=value")))?;
    let (key, raw) = (key.trim(), raw.trim());
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(parse_err("override", format!("bad key in {assignment:?}")));
    }
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("non-empty key");
    let mut table = toml::Table::new();
    table.insert(last.to_string(), value);
    for part in parts.into_iter().rev() {
        let mut outer = toml::Table::new();
        outer.insert(part.to_string(), toml::Value::Table(table));
        table = outer;
    }
    Ok(table)
}

fn has_key(table: &toml::Table, path: &[&str]) -> bool {
    match path {
        [] => true,
        [head, rest @ ..] => match table.get(*head) {
            Some(toml::Value::Table(t)) => has_key(t, rest),
            Some(_) => rest.is_empty(),
            None => false,
        },
    }
}

impl RunConfig {
    /// Builds the effective configuration. `seed_env` is the value of
    /// `DRIFTGAUGE_SEED`, if set; it replaces the master seed.
    pub fn resolve(file_text: Option<&str>, overrides: &[String], seed_env: Option<&str>) -> Result<Self> {
        let mut merged = toml::Table::try_from(RunConfig::default()).map_err(|e| parse_err("defaults", e))?;
        let mut explicit = toml::Table::new();
        if let Some(text) = file_text {
            let file: toml::Table = toml::from_str(text).map_err(|e| parse_err("config file", e))?;
            merge(&mut merged, file.clone(), "")?;
            merge_loose(&mut explicit, file);
        }
        for o in overrides {
            let t = override_table(o)?;
            merge(&mut merged, t.clone(), "")?;
            merge_loose(&mut explicit, t);
        }
        let mut cfg: RunConfig = toml::Value::Table(merged).try_into().map_err(|e: toml::de::Error| {
            Error::InvalidValue {
                key: "config".into(),
                reason: e.message().to_string(),
            }
        })?;
        if let Some(raw) = seed_env {
            cfg.seed = raw.trim().parse().map_err(|_| Error::InvalidValue {
                key: SEED_ENV.into(),
                reason: format!("{raw:?} is not an unsigned integer"),
            })?;
        }
        if !has_key(&explicit, &["swd", "seed"]) {
            cfg.swd.seed = seed::derive(cfg.seed, tag::SWD);
        }
        if !has_key(&explicit, &["train", "seed"]) {
            cfg.train.seed = seed::derive(cfg.seed, tag::TRAIN);
        }
        if !has_key(&explicit, &["reptile", "seed"]) {
            cfg.reptile.seed = seed::derive(cfg.seed, tag::REPTILE);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => Some(String::from_utf8(crate::fsutil::read(p)?).map_err(|e| parse_err("config file", e))?),
            None => None,
        };
        let env = std::env::var(SEED_ENV).ok();
        Self::resolve(text.as_deref(), overrides, env.as_deref())
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |key: &str, e: Error| Error::InvalidValue {
            key: key.into(),
            reason: e.to_string(),
        };
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidValue {
                key: "alpha".into(),
                reason: format!("{} outside (0, 1)", self.alpha),
            });
        }
        if !(self.variance_floor > 0.0) {
            return Err(Error::InvalidValue {
                key: "variance_floor".into(),
                reason: "must be positive".into(),
            });
        }
        self.swd.validate().map_err(|e| wrap("swd", e))?;
        self.train.validate().map_err(|e| wrap("train", e))?;
        self.reptile.validate().map_err(|e| wrap("reptile", e))?;
        self.cost.validate().map_err(|e| match e {
            e @ Error::InvalidValue { .. } => e,
            e => wrap("cost", e),
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

fn merge_loose(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_loose(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
