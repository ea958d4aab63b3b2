//! Run configuration: one TOML file, every key optional.
//!
//! ```toml
//! seed = 0
//! [detector]      # score_kind, sidedness, martingale_epsilons, detection_fpr, smoothed_pvalues
//! [gan]           # architecture, optimizer and evaluation settings for `train`
//! [alpha_sweep]   # block counts, block_size, visibility, grid, eve_pool
//! [prbox_sweep]   # block counts, block_size, visibility, grid, lhv_endpoint
//! [leakage]       # block counts, block_size, visibility, shifted_visibility
//! [strategies]    # block counts, block_size, visibility, noisy_visibility, reference
//! [hardware]      # data, n_samples
//! ```
//!
//! Relative paths inside the file are resolved against the file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlations::Correlators;
use crate::detectors::DetectorConfig;
use crate::evegan::GanConfig;
use crate::experiments::{ExperimentConfig, LeakageConfig};
use crate::sources::{lhv_correlators, LhvStrategy};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub detector: DetectorConfig,
    pub gan: GanConfig,
    pub alpha_sweep: AlphaSweepConfig,
    pub prbox_sweep: PrboxSweepConfig,
    pub leakage: LeakageSection,
    pub strategies: StrategiesConfig,
    pub hardware: HardwareConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            detector: DetectorConfig::default(),
            gan: GanConfig::default(),
            alpha_sweep: AlphaSweepConfig::default(),
            prbox_sweep: PrboxSweepConfig::default(),
            leakage: LeakageSection::default(),
            strategies: StrategiesConfig::default(),
            hardware: HardwareConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlphaSweepConfig {
    pub n_calibration_blocks: usize,
    pub n_test_blocks: usize,
    pub block_size: usize,
    pub visibility: f64,
    pub grid: Vec<f64>,
    /// Generated correlator vectors behind each Eve block.
    pub eve_pool: usize,
}

impl Default for AlphaSweepConfig {
    fn default() -> Self {
        Self {
            n_calibration_blocks: 200,
            n_test_blocks: 200,
            block_size: 4000,
            visibility: 1.0,
            grid: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 1.0],
            eve_pool: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrboxSweepConfig {
    pub n_calibration_blocks: usize,
    pub n_test_blocks: usize,
    pub block_size: usize,
    /// Visibility of the quantum calibration source.
    pub visibility: f64,
    pub grid: Vec<f64>,
    /// Local endpoint `[E00, E01, E10, E11]`; the default mixture when absent.
    pub lhv_endpoint: Option<[f64; 4]>,
}

impl Default for PrboxSweepConfig {
    fn default() -> Self {
        Self {
            n_calibration_blocks: 200,
            n_test_blocks: 200,
            block_size: 4000,
            visibility: 0.73,
            grid: vec![1.95, 2.0, 2.05, 2.1, 2.2, 2.4],
            lhv_endpoint: None,
        }
    }
}

impl PrboxSweepConfig {
    pub fn lhv_endpoint(&self) -> Correlators {
        match self.lhv_endpoint {
            Some(e) => Correlators::from_array(e),
            None => lhv_correlators(&LhvStrategy::default_mixture()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeakageSection {
    pub n_calibration_blocks: usize,
    pub n_test_blocks: usize,
    pub block_size: usize,
    pub visibility: f64,
    pub shifted_visibility: f64,
}

impl Default for LeakageSection {
    fn default() -> Self {
        Self { n_calibration_blocks: 200, n_test_blocks: 200, block_size: 400, visibility: 0.99, shifted_visibility: 0.93 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategiesConfig {
    pub n_calibration_blocks: usize,
    pub n_test_blocks: usize,
    pub block_size: usize,
    pub visibility: f64,
    pub noisy_visibility: f64,
    /// Published figures to print beside ours; the bundled table when absent.
    pub reference: Option<PathBuf>,
}

impl Default for StrategiesConfig {
    fn default() -> Self {
        Self {
            n_calibration_blocks: 200,
            n_test_blocks: 200,
            block_size: 100,
            visibility: 1.0,
            noisy_visibility: 0.968,
            reference: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HardwareConfig {
    pub data: Option<PathBuf>,
    pub n_samples: usize,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        Self { data: None, n_samples: 1000 }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Parse `path`, resolving relative paths inside it against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.strategies.reference, &mut cfg.hardware.data].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain config serializes")
    }

    /// Range checks that need no experiment to run.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.detector.validate().map_err(|e| inv(&e))?;
        self.gan.validate().map_err(|e| inv(&e))?;
        self.alpha().validate(true).map_err(|e| inv(&e))?;
        self.prbox().validate(true).map_err(|e| inv(&e))?;
        self.leakage().experiment.validate(false).map_err(|e| inv(&e))?;
        self.strategies().validate(false).map_err(|e| inv(&e))?;
        if let Some(a) = self.alpha_sweep.grid.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(ConfigError::Invalid(format!("alpha_sweep.grid value {a} outside [0, 1]")));
        }
        if self.alpha_sweep.eve_pool == 0 {
            return Err(ConfigError::Invalid("alpha_sweep.eve_pool must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.leakage.shifted_visibility) {
            return Err(ConfigError::Invalid(format!(
                "leakage.shifted_visibility = {} outside [0, 1]",
                self.leakage.shifted_visibility
            )));
        }
        if !(0.0..=1.0).contains(&self.strategies.noisy_visibility) {
            return Err(ConfigError::Invalid(format!(
                "strategies.noisy_visibility = {} outside [0, 1]",
                self.strategies.noisy_visibility
            )));
        }
        if self.hardware.n_samples == 0 {
            return Err(ConfigError::Invalid("hardware.n_samples must be at least 1".into()));
        }
        Ok(())
    }

    fn experiment(&self, n_cal: usize, n_test: usize, block_size: usize, visibility: f64, grid: &[f64]) -> ExperimentConfig {
        ExperimentConfig {
            seed: self.seed,
            n_calibration_blocks: n_cal,
            n_test_blocks: n_test,
            block_size,
            visibility,
            detector: self.detector.clone(),
            grid: grid.to_vec(),
        }
    }

    pub fn alpha(&self) -> ExperimentConfig {
        let a = &self.alpha_sweep;
        self.experiment(a.n_calibration_blocks, a.n_test_blocks, a.block_size, a.visibility, &a.grid)
    }

    pub fn prbox(&self) -> ExperimentConfig {
        let p = &self.prbox_sweep;
        self.experiment(p.n_calibration_blocks, p.n_test_blocks, p.block_size, p.visibility, &p.grid)
    }

    pub fn leakage(&self) -> LeakageConfig {
        let l = &self.leakage;
        LeakageConfig {
            experiment: self.experiment(l.n_calibration_blocks, l.n_test_blocks, l.block_size, l.visibility, &[]),
            shifted_visibility: l.shifted_visibility,
        }
    }

    pub fn strategies(&self) -> ExperimentConfig {
        let s = &self.strategies;
        self.experiment(s.n_calibration_blocks, s.n_test_blocks, s.block_size, s.visibility, &[])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        let cfg = Config::from_toml("").unwrap();
        assert_eq!(cfg, Config::default());
        cfg.validate().unwrap();
        assert_eq!(cfg.alpha().grid.len(), 12);
        assert_eq!(cfg.prbox_sweep.lhv_endpoint().chsh(), 1.5);
    }

    #[test]
    fn round_trip_through_toml() {
        let mut cfg = Config::default();
        cfg.seed = 42;
        cfg.prbox_sweep.lhv_endpoint = Some([1.0, 1.0, 1.0, 1.0]);
        cfg.hardware.data = Some("data/x.csv".into());
        assert_eq!(Config::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg = Config::from_toml("seed = 7\n[alpha_sweep]\nblock_size = 50\n[gan]\nepochs = 3\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.alpha_sweep.block_size, 50);
        assert_eq!(cfg.alpha_sweep.eve_pool, 64);
        assert_eq!(cfg.gan.epochs, 3);
        assert_eq!(cfg.gan.batch_size, 128);
        assert_eq!(cfg.alpha().seed, 7);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(Config::from_toml("sede = 1").is_err());
        assert!(Config::from_toml("[alpha_sweep]\nblok_size = 1").is_err());
        assert!(Config::from_toml("seed = \"x\"").is_err());
        for bad in [
            "[alpha_sweep]\ngrid = [0.5, 0.2]",
            "[alpha_sweep]\ngrid = [0.5, 1.5]",
            "[leakage]\nn_test_blocks = 3",
            "[gan]\nbatch_size = 0",
            "[detector]\ndetection_fpr = 2.0",
            "[hardware]\nn_samples = 0",
        ] {
            assert!(Config::from_toml(bad).unwrap().validate().is_err(), "{bad}");
        }
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[hardware]\ndata = \"hw.csv\"\n[strategies]\nreference = \"/abs/ref.csv\"\n").unwrap();
        let cfg = Config::load(&path).unwrap();
        assert_eq!(cfg.hardware.data.unwrap(), dir.path().join("hw.csv"));
        assert_eq!(cfg.strategies.reference.unwrap(), PathBuf::from("/abs/ref.csv"));
        assert!(matches!(Config::load(&dir.path().join("missing.toml")), Err(ConfigError::Read { .. })));
    }
}
