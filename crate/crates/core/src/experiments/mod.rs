//! End-to-end experiments: the α mixing sweep, the PR-box sweep, the
//! calibration-leakage comparison, the attack catalog and the hardware
//! comparison.
//!
//! Every random stream is derived from the master seed plus a tag naming
//! its role and an index (block or grid point), so results do not depend
//! on how rayon schedules the work.

mod alpha;
mod hardware;
mod leakage;
mod prbox;
mod strategies;
pub mod svg;

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::correlations::{estimate_correlators, CorrelationError, Correlators, TrialBlock};
use crate::detectors::{score_correlators, CalibrationSet, DetectionReport, DetectorConfig, DetectorError};
use crate::evegan::GanError;
use crate::format::sig;
use crate::seed::{self, StreamRng};
use crate::correlations::sample_trials;
use crate::sources::{quantum_correlators, QuantumSourceConfig, SourceError};

pub use alpha::{alpha_sweep, AlphaSweep};
pub use hardware::{hardware_compare, load_hardware_csv, parse_hardware_csv, HardwareComparison};
pub use leakage::{leakage_experiment, LeakageConfig, LeakageResult};
pub use prbox::prbox_sweep;
pub use strategies::{
    load_strategy_reference, parse_strategy_reference, strategy_catalog, write_strategy_csv, ReferenceEntry, StrategyMetrics,
    StrategyReference, StrategyRow, STRATEGY_CSV_HEADER,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("line {line}: {message}")]
    Data { line: usize, message: String },
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Correlation(#[from] CorrelationError),
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Shared parameters of a block-based experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_calibration_blocks: usize,
    pub n_test_blocks: usize,
    /// Trials per setting in every block; overrides `detector.block_size`.
    pub block_size: usize,
    pub visibility: f64,
    pub detector: DetectorConfig,
    pub grid: Vec<f64>,
}

impl ExperimentConfig {
    pub fn validate(&self, needs_grid: bool) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.n_calibration_blocks < 20 || self.n_test_blocks < 20 {
            return bad(format!(
                "block counts must be at least 20 (calibration {}, test {})",
                self.n_calibration_blocks, self.n_test_blocks
            ));
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return bad(format!("visibility = {} outside [0, 1]", self.visibility));
        }
        self.detector().validate()?;
        if needs_grid {
            if self.grid.is_empty() {
                return bad("grid is empty".into());
            }
            if let Some(v) = self.grid.iter().find(|v| !v.is_finite()) {
                return bad(format!("grid value {v} is not finite"));
            }
            if self.grid.windows(2).any(|w| w[0] >= w[1]) {
                return bad("grid must be strictly increasing".into());
            }
        }
        Ok(())
    }

    /// Detector settings with the experiment's block size.
    pub fn detector(&self) -> DetectorConfig {
        DetectorConfig { block_size: self.block_size, ..self.detector.clone() }
    }

    pub(crate) fn rng(&self, tag: &str, index: usize) -> StreamRng {
        seed::stream(self.seed, tag, index as u64)
    }

    /// `count` blocks built independently from streams `(tag, 0..count)`.
    pub(crate) fn blocks<F>(&self, tag: &str, count: usize, make: F) -> Result<Vec<TrialBlock>, ExperimentError>
    where
        F: Fn(&mut StreamRng) -> Result<TrialBlock, ExperimentError> + Sync,
    {
        (0..count).into_par_iter().map(|j| make(&mut self.rng(tag, j))).collect()
    }
}

/// One line of a sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub var: String,
    /// Mean estimated CHSH over the test blocks.
    pub chsh: f64,
    pub tara_k: f64,
    pub auc: f64,
    pub tpr_at_1pct: f64,
    pub tpr_at_5pct: f64,
    pub detection_probability: f64,
    pub tara_m_wealth: f64,
    pub n_blocks: usize,
}

impl SweepRow {
    pub const CSV_HEADER: [&'static str; 8] = ["var", "chsh", "tara_k", "auc", "tpr1", "tpr5", "detection_prob", "n_blocks"];

    fn from_report(var: String, chsh: f64, report: &DetectionReport, n_blocks: usize) -> Self {
        Self {
            var,
            chsh,
            tara_k: report.tara_k,
            auc: report.auc,
            tpr_at_1pct: report.tpr_at_1pct,
            tpr_at_5pct: report.tpr_at_5pct,
            detection_probability: report.detection_prob,
            tara_m_wealth: report.tara_m_wealth,
            n_blocks,
        }
    }

    fn csv_fields(&self) -> [String; 8] {
        [
            self.var.clone(),
            sig(self.chsh, 6),
            sig(self.tara_k, 6),
            sig(self.auc, 6),
            sig(self.tpr_at_1pct, 6),
            sig(self.tpr_at_5pct, 6),
            sig(self.detection_probability, 6),
            self.n_blocks.to_string(),
        ]
    }
}

pub(crate) fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), ExperimentError> {
    let mut w = csv_writer(out);
    w.write_record(SweepRow::CSV_HEADER)?;
    for r in rows {
        w.write_record(r.csv_fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<(), ExperimentError> {
    let f = std::fs::File::create(path)?;
    write_sweep_csv(rows, std::io::BufWriter::new(f))
}

/// Estimated correlators of every block.
pub(crate) fn estimates(blocks: &[TrialBlock]) -> Result<Vec<Correlators>, ExperimentError> {
    blocks.par_iter().map(|b| estimate_correlators(b).map_err(ExperimentError::from)).collect()
}

pub(crate) fn scores(est: &[Correlators], reference: &Correlators, det: &DetectorConfig) -> Vec<f64> {
    est.iter().map(|c| score_correlators(c, reference, det)).collect()
}

pub(crate) fn mean_chsh(est: &[Correlators]) -> f64 {
    est.iter().map(Correlators::chsh).sum::<f64>() / est.len() as f64
}

/// Elementwise mean of correlator vectors.
pub(crate) fn mean_correlators(v: &[Correlators]) -> Correlators {
    let n = v.len() as f64;
    let mut acc = [0.0; 4];
    for c in v {
        for (a, e) in acc.iter_mut().zip(c.to_array()) {
            *a += e / n;
        }
    }
    Correlators::from_array(acc)
}

/// Calibration set, held-out null scores and reference for block experiments.
pub(crate) struct NullModel {
    pub reference: Correlators,
    pub calibration: CalibrationSet,
    pub calibration_estimates: Vec<Correlators>,
    pub negative_scores: Vec<f64>,
}

/// Quantum calibration and negative blocks at the configured visibility,
/// scored against the ideal correlators of that visibility. Returns the
/// negative blocks too, for experiments that reuse them.
pub(crate) fn quantum_null(cfg: &ExperimentConfig, prefix: &str) -> Result<(NullModel, Vec<TrialBlock>), ExperimentError> {
    let reference = quantum_correlators(&QuantumSourceConfig::new(cfg.visibility)?);
    let det = cfg.detector();
    let make = |rng: &mut StreamRng| Ok(sample_trials(&reference, cfg.block_size, rng)?);
    let cal_blocks = cfg.blocks(&format!("{prefix}-cal"), cfg.n_calibration_blocks, make)?;
    let calibration_estimates = estimates(&cal_blocks)?;
    let calibration = CalibrationSet::from_scores(scores(&calibration_estimates, &reference, &det), "quantum")?;
    let negatives = cfg.blocks(&format!("{prefix}-neg"), cfg.n_test_blocks, make)?;
    let negative_scores = scores(&estimates(&negatives)?, &reference, &det);
    Ok((NullModel { reference, calibration, calibration_estimates, negative_scores }, negatives))
}
