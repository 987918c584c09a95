//! Experiment configuration: one TOML document covering data, clustering,
//! recognition, plant, agents, training and reporting. Every field has a
//! default, so a file only needs the values it changes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::train::TrainConfig;
use crate::agents::AgentsConfig;
use crate::control::BaselineEmsConfig;
use crate::plant::params::PlantParams;
use crate::recognizer::{ClassifierConfig, UpdateMode};
use crate::report::AggregateConfig;
use crate::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// Directory holding `<name>.csv` cycle files; relative to the config file.
    pub cycles_dir: PathBuf,
    /// Cycles used for clustering and agent training.
    pub training: Vec<String>,
    /// Cycle used to pick the best checkpoint during training.
    pub validation: String,
    /// Held-out evaluation cycle.
    pub evaluation: String,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            cycles_dir: PathBuf::from("../data/cycles"),
            training: [
                "udds",
                "hwfet",
                "us06",
                "wltc_medium3",
                "wltc_high3",
                "wltc_extrahigh3",
                "nrel13",
                "tsdc_42648",
                "ftp_mc1b",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            validation: "wmtc_part1".into(),
            evaluation: "wltc_low3".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusteringConfig {
    pub window_s: f64,
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            window_s: 20.0,
            k: 3,
            seed: 7,
            max_iter: 300,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecognizerConfig {
    pub classifier: ClassifierConfig,
    pub val_fraction: f64,
    pub split_seed: u64,
    pub update_mode: UpdateMode,
}

impl Default for RecognizerConfig {
    fn default() -> Self {
        RecognizerConfig {
            classifier: ClassifierConfig::default(),
            val_fraction: 0.2,
            split_seed: 5,
            update_mode: UpdateMode::Sliding,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub version: u32,
    pub data: DataConfig,
    pub clustering: ClusteringConfig,
    pub recognizer: RecognizerConfig,
    pub plant: PlantParams,
    pub agents: AgentsConfig,
    pub training: TrainConfig,
    pub baseline: BaselineEmsConfig,
    pub report: AggregateConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            version: CONFIG_VERSION,
            data: DataConfig::default(),
            clustering: ClusteringConfig::default(),
            recognizer: RecognizerConfig::default(),
            plant: PlantParams::default(),
            agents: AgentsConfig::default(),
            training: TrainConfig::default(),
            baseline: BaselineEmsConfig::default(),
            report: AggregateConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let cfg: Config =
            toml::from_str(text).map_err(|e| Error::Format(format!("{origin}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a file and resolves `data.cycles_dir` against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text, &path.display().to_string())?;
        if cfg.data.cycles_dir.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.data.cycles_dir = base.join(&cfg.data.cycles_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Format(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.clustering.k == 0 || !(self.clustering.window_s > 0.0) {
            return Err(Error::Validation("clustering needs k >= 1 and a positive window".into()));
        }
        self.plant.validate()?;
        self.agents.validate()?;
        let b = &self.baseline;
        if !(b.soc_low < b.soc_high) {
            return Err(Error::Validation("baseline SOC band must satisfy low < high".into()));
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("config encoding failed: {e}")))
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml_string()?.as_bytes())))
    }

    pub fn cycle_path(&self, name: &str) -> PathBuf {
        self.data.cycles_dir.join(format!("{name}.csv"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = Config::from_toml_str("", "inline").unwrap();
        assert_eq!(c, Config::default());
    }

    #[test]
    fn round_trip_preserves_hash() {
        let c = Config::default();
        let text = c.to_toml_string().unwrap();
        let back = Config::from_toml_str(&text, "inline").unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash().unwrap(), c.hash().unwrap());
    }

    #[test]
    fn overrides_and_validation() {
        let c = Config::from_toml_str("[plant.vehicle]\nmass_kg = 1600.0\n", "inline").unwrap();
        assert_eq!(c.plant.vehicle.mass_kg, 1600.0);
        assert!(Config::from_toml_str("[plant.vehicle]\nmass_kg = -1.0\n", "inline").is_err());
        assert!(Config::from_toml_str("version = 9\n", "inline").is_err());
        assert!(Config::from_toml_str("[plant\n", "inline").is_err());
    }
}
