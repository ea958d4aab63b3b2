//! Detection metrics as a function of the quantum fraction α.

use rayon::prelude::*;

use super::{estimates, mean_chsh, quantum_null, scores, ExperimentConfig, ExperimentError, SweepRow};
use crate::correlations::{sample_trials_pooled, TrialBlock};
use crate::detectors::DetectionReport;
use crate::evegan::generate;
use crate::format::sig;
use crate::sources::{mix_blocks, MixingConfig};
use crate::tinynet::Mlp;

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSweep {
    pub rows: Vec<SweepRow>,
    /// Mean CHSH of every generated correlator vector used for Eve blocks.
    pub eve_mean_chsh: f64,
    pub quantum_chsh: f64,
    pub warnings: Vec<String>,
}

/// For each α in `cfg.grid`, positives are `mix_blocks(Q_j, V_j, α)` where
/// `Q_j` is the j-th held-out quantum block (also the j-th negative) and
/// `V_j` an Eve block whose trials draw from `eve_pool` generated vectors.
/// The mixing stream for block j is the same at every α, so the set of
/// quantum slots only grows with α.
pub fn alpha_sweep(cfg: &ExperimentConfig, generator: &Mlp, eve_pool: usize) -> Result<AlphaSweep, ExperimentError> {
    cfg.validate(true)?;
    if let Some(a) = cfg.grid.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(ExperimentError::Config(format!("alpha = {a} outside [0, 1]")));
    }
    if eve_pool == 0 {
        return Err(ExperimentError::Config("eve_pool must be at least 1".into()));
    }
    let det = cfg.detector();
    let (null, quantum) = quantum_null(cfg, "alpha")?;

    let eve: Vec<(TrialBlock, f64)> = (0..cfg.n_test_blocks)
        .into_par_iter()
        .map(|j| {
            let mut rng = cfg.rng("alpha-eve", j);
            let pool = generate(generator, eve_pool, &mut rng)?;
            let s = pool.iter().map(|c| c.chsh()).sum::<f64>();
            Ok((sample_trials_pooled(&pool, cfg.block_size, &mut rng)?, s))
        })
        .collect::<Result<_, ExperimentError>>()?;
    let eve_mean_chsh = eve.iter().map(|e| e.1).sum::<f64>() / (eve_pool * eve.len()) as f64;

    let mut warnings = Vec::new();
    if eve_mean_chsh < 2.0 {
        warnings.push(format!(
            "generator mean CHSH {} is below 2; it looks untrained or degenerate",
            sig(eve_mean_chsh, 6)
        ));
    }

    let mut rows = Vec::with_capacity(cfg.grid.len());
    for &alpha in &cfg.grid {
        let mix = MixingConfig::new(alpha)?;
        let positives: Vec<TrialBlock> = quantum
            .par_iter()
            .zip(&eve)
            .enumerate()
            .map(|(j, (q, (v, _)))| Ok(mix_blocks(&mix, q, v, &mut cfg.rng("alpha-mix", j))?))
            .collect::<Result<_, ExperimentError>>()?;
        let est = estimates(&positives)?;
        let pos = scores(&est, &null.reference, &det);
        let report = DetectionReport::evaluate(&pos, &null.negative_scores, &null.calibration, &det)?;
        rows.push(SweepRow::from_report(sig(alpha, 6), mean_chsh(&est), &report, positives.len()));
    }
    Ok(AlphaSweep { rows, eve_mean_chsh, quantum_chsh: null.reference.chsh(), warnings })
}
