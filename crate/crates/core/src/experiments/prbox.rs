//! Detection along the line from a local model to the PR box.

use rayon::prelude::*;

use super::{estimates, mean_chsh, quantum_null, scores, ExperimentConfig, ExperimentError, SweepRow};
use crate::correlations::{sample_trials, Correlators, TrialBlock};
use crate::detectors::DetectionReport;
use crate::format::sig;
use crate::sources::{prbox_interpolate, solve_lambda, InterpolationConfig};

/// One row per target CHSH value in `cfg.grid`. The detector is calibrated
/// on quantum blocks at `cfg.visibility`; each grid point draws its test
/// blocks from its own streams.
pub fn prbox_sweep(cfg: &ExperimentConfig, lhv_endpoint: &Correlators) -> Result<Vec<SweepRow>, ExperimentError> {
    cfg.validate(true)?;
    // Solve every λ first so a bad grid fails before any sampling.
    let lambdas = cfg.grid.iter().map(|&s| solve_lambda(s, lhv_endpoint)).collect::<Result<Vec<_>, _>>()?;
    let det = cfg.detector();
    let (null, _) = quantum_null(cfg, "prbox")?;

    let mut rows = Vec::with_capacity(lambdas.len());
    for (i, (&target, &lambda)) in cfg.grid.iter().zip(&lambdas).enumerate() {
        let c = prbox_interpolate(&InterpolationConfig::new(lambda, *lhv_endpoint)?);
        let tag = format!("prbox-test-{i}");
        let blocks: Vec<TrialBlock> = (0..cfg.n_test_blocks)
            .into_par_iter()
            .map(|j| Ok(sample_trials(&c, cfg.block_size, &mut cfg.rng(&tag, j))?))
            .collect::<Result<_, ExperimentError>>()?;
        let est = estimates(&blocks)?;
        let pos = scores(&est, &null.reference, &det);
        let report = DetectionReport::evaluate(&pos, &null.negative_scores, &null.calibration, &det)?;
        rows.push(SweepRow::from_report(sig(target, 6), mean_chsh(&est), &report, blocks.len()));
    }
    Ok(rows)
}
