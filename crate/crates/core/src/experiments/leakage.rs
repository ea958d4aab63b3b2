//! How much a detector's apparent power depends on where its calibration
//! data came from.
//!
//! Both arms score the same positive blocks (quantum at `shifted_visibility`)
//! and the same negative blocks (quantum at the base visibility). The
//! same-distribution arm learns its reference from quantum calibration
//! blocks at the base visibility; the cross-distribution arm learns it from
//! blocks of the default local mixture.

use super::{
    estimates, mean_chsh, mean_correlators, scores, ExperimentConfig, ExperimentError, StreamRng, SweepRow,
};
use crate::correlations::{sample_trials, Correlators};
use crate::detectors::{CalibrationSet, DetectionReport};
use crate::sources::{lhv_trials, quantum_correlators, LhvStrategy, QuantumSourceConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct LeakageConfig {
    /// `visibility` is the calibration and negative source.
    pub experiment: ExperimentConfig,
    /// Visibility of the positive source.
    pub shifted_visibility: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeakageResult {
    pub same_dist: SweepRow,
    pub cross_dist: SweepRow,
    pub same_dist_auc: f64,
    pub cross_dist_auc: f64,
    pub gap: f64,
}

impl LeakageResult {
    pub fn rows(&self) -> [SweepRow; 2] {
        [self.same_dist.clone(), self.cross_dist.clone()]
    }
}

pub fn leakage_experiment(cfg: &LeakageConfig) -> Result<LeakageResult, ExperimentError> {
    run(cfg, false)
}

fn run(cfg: &LeakageConfig, allow_identical: bool) -> Result<LeakageResult, ExperimentError> {
    let exp = &cfg.experiment;
    exp.validate(false)?;
    let (v1, v2) = (exp.visibility, cfg.shifted_visibility);
    let positive = quantum_correlators(&QuantumSourceConfig::new(v2)?);
    let null = quantum_correlators(&QuantumSourceConfig::new(v1)?);
    if v1 == v2 && !allow_identical {
        return Err(ExperimentError::Config(format!(
            "both leakage sources have visibility {v1}; the arms cannot differ"
        )));
    }
    let det = exp.detector();
    let n = exp.block_size;
    let quantum = |c: Correlators| move |rng: &mut StreamRng| Ok(sample_trials(&c, n, rng)?);

    let neg_est = estimates(&exp.blocks("leakage-neg", exp.n_test_blocks, quantum(null))?)?;
    let pos_est = estimates(&exp.blocks("leakage-pos", exp.n_test_blocks, quantum(positive))?)?;
    let pos_chsh = mean_chsh(&pos_est);

    let lhv = LhvStrategy::default_mixture();
    let arms = [
        ("same-dist", "quantum", exp.blocks("leakage-cal-same", exp.n_calibration_blocks, quantum(null))?),
        (
            "cross-dist",
            "lhv",
            exp.blocks("leakage-cal-cross", exp.n_calibration_blocks, |rng| Ok(lhv_trials(&lhv, n, rng)?))?,
        ),
    ];
    let mut rows = Vec::with_capacity(2);
    for (name, tag, cal_blocks) in arms {
        let cal_est = estimates(&cal_blocks)?;
        let reference = mean_correlators(&cal_est);
        let calibration = CalibrationSet::from_scores(scores(&cal_est, &reference, &det), tag)?;
        let report = DetectionReport::evaluate(
            &scores(&pos_est, &reference, &det),
            &scores(&neg_est, &reference, &det),
            &calibration,
            &det,
        )?;
        rows.push(SweepRow::from_report(name.into(), pos_chsh, &report, pos_est.len()));
    }
    let cross_dist = rows.pop().expect("two arms");
    let same_dist = rows.pop().expect("two arms");
    Ok(LeakageResult {
        same_dist_auc: same_dist.auc,
        cross_dist_auc: cross_dist.auc,
        gap: same_dist.auc - cross_dist.auc,
        same_dist,
        cross_dist,
    })
}
