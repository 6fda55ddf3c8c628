//! The run configuration file (TOML).
//!
//! ```toml
//! scorer = "proxy"
//!
//! [train]
//! max_rounds = 2000
//! workers = 4
//!
//! [reward]
//! w_iq = 1000.0
//! w_amp = 60.0
//! zfc_bar = { mode = "normalized", value = 0.45 }
//!
//! [dataset]
//! synthetic = { seed = 7, count = 16, size = 64 }
//! ```
//!
//! Every section and key is optional; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::InferenceConfig;
use crate::nn::TrainConfig;
use crate::rl::{scorer_by_name, EpisodeConfig, RewardWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub count: usize,
    pub size: usize,
}

impl std::str::FromStr for SyntheticSpec {
    type Err = Error;

    /// Parses `seed,count,size`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = || Error::Config(format!("expected seed,count,size but got {s:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        Ok(Self {
            seed: parts[0].parse().map_err(|_| bad())?,
            count: parts[1].parse().map_err(|_| bad())?,
            size: parts[2].parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetPaths {
    /// Paired dataset root (`low/` and `high/`) used for training.
    pub train_dir: Option<PathBuf>,
    /// Paired dataset root used by evaluation.
    pub eval_dir: Option<PathBuf>,
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scorer: String,
    pub train: TrainConfig,
    pub reward: RewardWeights,
    pub episode: EpisodeConfig,
    pub inference: InferenceConfig,
    pub dataset: DatasetPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scorer: "proxy".into(),
            train: TrainConfig::default(),
            reward: RewardWeights::default(),
            episode: EpisodeConfig::default(),
            inference: InferenceConfig::default(),
            dataset: DatasetPaths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("run configuration always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        scorer_by_name(&self.scorer)?;
        self.train.validate()?;
        self.reward.validate()?;
        self.episode.validate()?;
        self.inference.validate()?;
        if self.train.steps_per_episode != self.episode.steps_per_episode || self.train.gamma != self.episode.gamma {
            return Err(Error::Config(
                "train.steps_per_episode and train.gamma must agree with the [episode] section".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::ZfcTarget;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.reward.w_iq, 1000.0);
        assert_eq!(cfg.reward.w_amp, 60.0);
        assert_eq!(cfg.train.learning_rate, 0.002);
        assert_eq!(cfg.train.gamma, 0.95);
        assert_eq!(cfg.train.max_rounds, 10_000);
        assert_eq!(cfg.train.batch_size, 2);
        assert_eq!(cfg.episode.steps_per_episode, 10);
    }

    #[test]
    fn printed_config_parses_back() {
        let mut cfg = RunConfig::default();
        cfg.reward.zfc_bar = ZfcTarget::Raw(3.0e5);
        cfg.dataset.synthetic = Some(SyntheticSpec { seed: 7, count: 16, size: 64 });
        cfg.train.max_grad_norm = 0.0;
        cfg.inference.stochastic_seed = Some(3);
        let text = cfg.to_toml_string();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_sections_and_raw_target() {
        let cfg = RunConfig::from_toml_str(
            "[reward]\nw_iq = 0.0\nzfc_bar = { mode = \"raw\", value = 2.0e5 }\n[train]\nworkers = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.reward.w_iq, 0.0);
        assert_eq!(cfg.reward.w_amp, 60.0);
        assert_eq!(cfg.reward.zfc_bar, ZfcTarget::Raw(2.0e5));
        assert_eq!(cfg.train.workers, 2);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(RunConfig::from_toml_str("bogus = 1").is_err());
        assert!(RunConfig::from_toml_str("[train]\nlearnig_rate = 0.1").is_err());
        assert!(RunConfig::from_toml_str("scorer = \"unique\"").is_err());
        assert!(RunConfig::from_toml_str("[train]\nworkers = 0").is_err());
        assert!(RunConfig::from_toml_str("[inference]\nepsilon = -1.0").is_err());
        assert!(RunConfig::from_toml_str("[episode]\ngamma = 0.9").is_err());
        assert!(matches!(RunConfig::load(Path::new("/nonexistent/run.toml")), Err(Error::MissingFile(_))));
    }

    #[test]
    fn synthetic_spec_parsing() {
        assert_eq!("7,16,64".parse::<SyntheticSpec>().unwrap(), SyntheticSpec { seed: 7, count: 16, size: 64 });
        assert!("7,16".parse::<SyntheticSpec>().is_err());
        assert!("a,b,c".parse::<SyntheticSpec>().is_err());
    }
}
