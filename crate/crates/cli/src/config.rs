//! Flat JSON run configuration.
//!
//! One object holds the keys of the network, training and scene settings
//! side by side, plus the optional paths `data_dir`, `out_dir` and
//! `checkpoint`. Omitted keys take their defaults; unknown keys are errors.

use std::path::{Path, PathBuf};

use selfadv_core::dataset::SyntheticSceneConfig;
use selfadv_core::trainer::TrainConfig;
use selfadv_core::{Error, NetworkConfig, Result};
use serde_json::{Map, Value};

const PATH_KEYS: [&str; 3] = ["data_dir", "out_dir", "checkpoint"];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub scene: SyntheticSceneConfig,
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            network: NetworkConfig::desk(14),
            train: TrainConfig::default(),
            scene: SyntheticSceneConfig::default(),
            data_dir: None,
            out_dir: None,
            checkpoint: None,
        }
    }
}

fn object(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("settings serialize to objects"),
    }
}

fn to_object<S: serde::Serialize>(s: &S) -> Map<String, Value> {
    object(serde_json::to_value(s).expect("settings are serializable"))
}

fn config_err(msg: impl std::fmt::Display) -> Error {
    Error::Config(msg.to_string())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(config_err)?;
        let Value::Object(entries) = value else {
            return Err(config_err("run configuration must be a JSON object"));
        };
        let mut cfg = RunConfig::default();
        let mut parts = [to_object(&cfg.network), to_object(&cfg.train), to_object(&cfg.scene)];
        for (key, v) in entries {
            if PATH_KEYS.contains(&key.as_str()) {
                let p = match v {
                    Value::Null => None,
                    Value::String(s) => Some(PathBuf::from(s)),
                    other => return Err(config_err(format!("{key} must be a string path, got {other}"))),
                };
                match key.as_str() {
                    "data_dir" => cfg.data_dir = p,
                    "out_dir" => cfg.out_dir = p,
                    _ => cfg.checkpoint = p,
                }
                continue;
            }
            match parts.iter_mut().find(|m| m.contains_key(&key)) {
                Some(m) => {
                    m.insert(key, v);
                }
                None => return Err(config_err(format!("unknown configuration key `{key}`"))),
            }
        }
        let [n, t, s] = parts;
        cfg.network = serde_json::from_value(Value::Object(n)).map_err(|e| config_err(format!("network: {e}")))?;
        cfg.train = serde_json::from_value(Value::Object(t)).map_err(|e| config_err(format!("training: {e}")))?;
        cfg.scene = serde_json::from_value(Value::Object(s)).map_err(|e| config_err(format!("scene: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Reads `path` when given, otherwise the defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn to_json(&self) -> String {
        let mut all = Map::new();
        for part in [to_object(&self.network), to_object(&self.train), to_object(&self.scene)] {
            all.extend(part);
        }
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(Value::Null, |p| Value::String(p.display().to_string()));
        all.insert("data_dir".into(), path(&self.data_dir));
        all.insert("out_dir".into(), path(&self.out_dir));
        all.insert("checkpoint".into(), path(&self.checkpoint));
        serde_json::to_string_pretty(&Value::Object(all)).expect("serializable") + "\n"
    }

    /// Re-checks every component and that each path in `required` is set and
    /// exists.
    pub fn validate(&self, required: &[&str]) -> Result<()> {
        self.network.validate().map_err(|e| config_err(format!("network: {e}")))?;
        self.train.validate()?;
        self.scene.validate()?;
        if self.network.num_joints != self.scene.schema.num_joints() {
            return Err(config_err(format!(
                "num_joints {} does not match the {} joints of schema {:?}",
                self.network.num_joints,
                self.scene.schema.num_joints(),
                self.scene.schema
            )));
        }
        for key in required {
            let p = match *key {
                "data_dir" => &self.data_dir,
                "checkpoint" => &self.checkpoint,
                other => unreachable!("no required path {other}"),
            };
            match p {
                None => return Err(config_err(format!("{key} is not set"))),
                Some(p) if !p.exists() => return Err(config_err(format!("{key} {} does not exist", p.display()))),
                Some(_) => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn component_keys_are_disjoint() {
        let c = RunConfig::default();
        let parts = [to_object(&c.network), to_object(&c.train), to_object(&c.scene)];
        let mut seen = std::collections::HashSet::new();
        for p in &parts {
            for k in p.keys() {
                assert!(seen.insert(k.clone()), "key {k} appears twice");
                assert!(!PATH_KEYS.contains(&k.as_str()));
            }
        }
    }

    #[test]
    fn round_trip_and_overrides() {
        let mut c = RunConfig::default();
        c.train.epochs = 3;
        c.network.conditional = false;
        c.scene.occluders = [1, 2];
        c.out_dir = Some("runs/a".into());
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
        let partial = RunConfig::from_json(r#"{"epochs": 5, "base_channels": 16, "held_out": 3}"#).unwrap();
        assert_eq!((partial.train.epochs, partial.network.base_channels, partial.scene.held_out), (5, 16, 3));
        assert_eq!(partial.train.batch_size, TrainConfig::default().batch_size);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(RunConfig::from_json(r#"{"epoch": 5}"#), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json(r#"{"epochs": "five"}"#), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json("[1]"), Err(Error::Config(_))));
        let c = RunConfig::from_json(r#"{"batch_size": 0}"#).unwrap();
        assert!(matches!(c.validate(&[]), Err(Error::Config(_))));
        let c = RunConfig::from_json(r#"{"num_joints": 16}"#).unwrap();
        assert!(c.validate(&[]).is_err());
        let c = RunConfig::from_json(r#"{"data_dir": "/definitely/not/here"}"#).unwrap();
        assert!(c.validate(&[]).is_ok());
        assert!(c.validate(&["data_dir"]).is_err());
    }
}
