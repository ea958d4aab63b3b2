//! Certification statistics: block scores, conformal p-values, the TARA
//! uniformity and martingale tests, the three-feature ensemble and the
//! usual detection metrics.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlations::{estimate_correlators, CorrelationError, Correlators, TrialBlock};
use crate::format::sig;

/// Lower clamp applied to p-values before betting.
pub const P_FLOOR: f64 = 1e-6;

/// Fewest blocks accepted by [`calibrate`].
pub const MIN_CALIBRATION_BLOCKS: usize = 20;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("calibration needs at least {MIN_CALIBRATION_BLOCKS} blocks, got {0}")]
    TooFewBlocks(usize),
    #[error("p-value {0} outside [0, 1]")]
    PValue(f64),
    #[error("invalid detector config: {0}")]
    Config(String),
    #[error("non-finite score {0}")]
    NonFinite(f64),
    #[error(transparent)]
    Correlation(#[from] CorrelationError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreKind {
    ChshDistance,
    EuclideanCorrelator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sidedness {
    SubQuantumOnly,
    TwoSided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub score_kind: ScoreKind,
    pub sidedness: Sidedness,
    /// Trials per setting in one scored block.
    pub block_size: usize,
    pub martingale_epsilons: Vec<f64>,
    pub detection_fpr: f64,
    /// Use `(k + 1) / (n + 1)` instead of `k / n` for p-values.
    pub smoothed_pvalues: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            score_kind: ScoreKind::ChshDistance,
            sidedness: Sidedness::SubQuantumOnly,
            block_size: 100,
            martingale_epsilons: vec![0.95, 0.96, 0.97, 0.98, 0.99],
            detection_fpr: 0.05,
            smoothed_pvalues: false,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        if self.block_size < 10 {
            return Err(DetectorError::Config(format!("block_size = {} below 10", self.block_size)));
        }
        check_epsilons(&self.martingale_epsilons)?;
        if !(self.detection_fpr > 0.0 && self.detection_fpr < 0.5) {
            return Err(DetectorError::Config(format!("detection_fpr = {} outside (0, 0.5)", self.detection_fpr)));
        }
        Ok(())
    }
}

fn check_epsilons(eps: &[f64]) -> Result<(), DetectorError> {
    if eps.is_empty() {
        return Err(DetectorError::Empty("epsilon grid"));
    }
    if let Some(e) = eps.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
        return Err(DetectorError::Config(format!("betting exponent {e} outside (0, 1)")));
    }
    Ok(())
}

/// Unit vector along which CHSH grows: `S = 2·(u · E)`.
const CHSH_DIRECTION: [f64; 4] = [0.5, 0.5, 0.5, -0.5];

/// Score of estimated correlators against the reference; larger is more anomalous.
pub fn score_correlators(estimate: &Correlators, reference: &Correlators, cfg: &DetectorConfig) -> f64 {
    let (e, r) = (estimate.to_array(), reference.to_array());
    match (cfg.score_kind, cfg.sidedness) {
        (ScoreKind::ChshDistance, Sidedness::SubQuantumOnly) => (reference.chsh() - estimate.chsh()).max(0.0),
        (ScoreKind::ChshDistance, Sidedness::TwoSided) => (estimate.chsh() - reference.chsh()).abs(),
        (ScoreKind::EuclideanCorrelator, Sidedness::TwoSided) => {
            e.iter().zip(r).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        }
        (ScoreKind::EuclideanCorrelator, Sidedness::SubQuantumOnly) => {
            CHSH_DIRECTION.iter().zip(r.iter().zip(e)).map(|(u, (r, e))| u * (r - e)).sum::<f64>().max(0.0)
        }
    }
}

pub fn nonconformity(block: &TrialBlock, reference: &Correlators, cfg: &DetectorConfig) -> Result<f64, DetectorError> {
    Ok(score_correlators(&estimate_correlators(block)?, reference, cfg))
}

/// Sorted nonconformity scores of a reference population.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    scores: Vec<f64>,
    source_tag: String,
}

impl CalibrationSet {
    pub fn from_scores(mut scores: Vec<f64>, source_tag: impl Into<String>) -> Result<Self, DetectorError> {
        if scores.is_empty() {
            return Err(DetectorError::Empty("calibration scores"));
        }
        if let Some(&s) = scores.iter().find(|s| !s.is_finite()) {
            return Err(DetectorError::NonFinite(s));
        }
        scores.sort_by(f64::total_cmp);
        Ok(Self { scores, source_tag: source_tag.into() })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    fn count_at_least(&self, score: f64) -> usize {
        self.scores.len() - self.scores.partition_point(|&c| c < score)
    }
}

/// Score every block and collect the results. Mixed sources are not detected;
/// the tag is recorded as given.
pub fn calibrate(
    blocks: &[TrialBlock],
    reference: &Correlators,
    cfg: &DetectorConfig,
    source_tag: &str,
) -> Result<CalibrationSet, DetectorError> {
    if blocks.len() < MIN_CALIBRATION_BLOCKS {
        return Err(DetectorError::TooFewBlocks(blocks.len()));
    }
    let scores = blocks.iter().map(|b| nonconformity(b, reference, cfg)).collect::<Result<Vec<_>, _>>()?;
    CalibrationSet::from_scores(scores, source_tag)
}

/// Fraction of calibration scores at least as large as `score`.
pub fn conformal_pvalue(score: f64, calib: &CalibrationSet) -> f64 {
    calib.count_at_least(score) as f64 / calib.len() as f64
}

/// `(1 + #{c ≥ score}) / (n + 1)`.
pub fn smoothed_pvalue(score: f64, calib: &CalibrationSet) -> f64 {
    (calib.count_at_least(score) + 1) as f64 / (calib.len() + 1) as f64
}

pub fn pvalue(score: f64, calib: &CalibrationSet, cfg: &DetectorConfig) -> f64 {
    if cfg.smoothed_pvalues {
        smoothed_pvalue(score, calib)
    } else {
        conformal_pvalue(score, calib)
    }
}

fn check_pvalues(p: &[f64]) -> Result<(), DetectorError> {
    if p.is_empty() {
        return Err(DetectorError::Empty("p-value list"));
    }
    match p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(&v) => Err(DetectorError::PValue(v)),
        None => Ok(()),
    }
}

/// Largest gap between the sorted p-values and the uniform grid `i / n`.
pub fn tara_k(pvalues: &[f64]) -> Result<f64, DetectorError> {
    check_pvalues(pvalues)?;
    let mut p = pvalues.to_vec();
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    Ok(p.iter().enumerate().map(|(i, v)| (v - (i + 1) as f64 / n).abs()).fold(0.0, f64::max))
}

/// Natural log of the mixture martingale wealth
/// `mean_ε Π_t ε·p_t^(ε − 1)`, with each p clamped below at [`P_FLOOR`].
pub fn tara_m_log(pvalues: &[f64], epsilons: &[f64]) -> Result<f64, DetectorError> {
    check_pvalues(pvalues)?;
    check_epsilons(epsilons)?;
    let sum_log_p: f64 = pvalues.iter().map(|p| p.max(P_FLOOR).ln()).sum();
    let t = pvalues.len() as f64;
    let logs: Vec<f64> = epsilons.iter().map(|&e| t * e.ln() + (e - 1.0) * sum_log_p).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = logs.iter().map(|l| (l - top).exp()).sum::<f64>() / logs.len() as f64;
    Ok(top + mean.ln())
}

/// Mixture martingale wealth; may be `+inf` when the log wealth exceeds the `f64` range.
pub fn tara_m(pvalues: &[f64], epsilons: &[f64]) -> Result<f64, DetectorError> {
    Ok(tara_m_log(pvalues, epsilons)?.exp())
}

fn check_scores(scores: &[f64], what: &'static str) -> Result<(), DetectorError> {
    if scores.is_empty() {
        return Err(DetectorError::Empty(what));
    }
    match scores.iter().find(|s| s.is_nan()) {
        Some(&s) => Err(DetectorError::NonFinite(s)),
        None => Ok(()),
    }
}

/// `P(pos > neg) + ½·P(pos = neg)` by exact pair counting.
pub fn auc(scores_positive: &[f64], scores_negative: &[f64]) -> Result<f64, DetectorError> {
    check_scores(scores_positive, "positive scores")?;
    check_scores(scores_negative, "negative scores")?;
    let mut neg = scores_negative.to_vec();
    neg.sort_by(f64::total_cmp);
    // Twice the Mann-Whitney U: 2 per ordered pair, 1 per tie.
    let mut twice_u: u64 = 0;
    for &s in scores_positive {
        let below = neg.partition_point(|&n| n < s);
        let not_above = neg.partition_point(|&n| n <= s);
        twice_u += 2 * below as u64 + (not_above - below) as u64;
    }
    let pairs = 2 * scores_positive.len() as u64 * neg.len() as u64;
    Ok(twice_u as f64 / pairs as f64)
}

/// Threshold at or above which at most `fpr` of the negatives lie strictly above.
pub fn fpr_threshold(scores_negative: &[f64], fpr: f64) -> Result<f64, DetectorError> {
    check_scores(scores_negative, "negative scores")?;
    if !(fpr > 0.0 && fpr < 1.0) {
        return Err(DetectorError::Config(format!("fpr = {fpr} outside (0, 1)")));
    }
    let mut neg = scores_negative.to_vec();
    neg.sort_by(f64::total_cmp);
    let n = neg.len();
    let keep = (((1.0 - fpr) * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    Ok(neg[keep - 1])
}

/// Fraction of positives strictly above the `(1 − fpr)` quantile of the negatives.
pub fn tpr_at_fpr(scores_positive: &[f64], scores_negative: &[f64], fpr: f64) -> Result<f64, DetectorError> {
    check_scores(scores_positive, "positive scores")?;
    let t = fpr_threshold(scores_negative, fpr)?;
    Ok(scores_positive.iter().filter(|&&s| s > t).count() as f64 / scores_positive.len() as f64)
}

// ---------------------------------------------------------------------------
// Ensemble

/// Raw ensemble features of one block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleFeatures {
    pub chsh_distance: f64,
    /// Shannon entropy of the `(a, b)` pair distribution, bits, averaged over settings.
    pub entropy: f64,
    /// Lag-1 autocorrelation of `a·b`, within each setting, averaged over settings.
    pub autocorrelation: f64,
}

impl EnsembleFeatures {
    fn to_array(self) -> [f64; 3] {
        [self.chsh_distance, self.entropy, self.autocorrelation]
    }
}

fn pair_entropy(block: &TrialBlock) -> f64 {
    let mut counts = [[0usize; 4]; 4];
    for t in block.trials() {
        let k = usize::from(t.a() > 0) * 2 + usize::from(t.b() > 0);
        counts[t.setting()][k] += 1;
    }
    let per_setting = counts.iter().map(|c| {
        let n: usize = c.iter().sum();
        c.iter()
            .filter(|&&k| k > 0)
            .map(|&k| {
                let p = k as f64 / n as f64;
                -p * p.log2()
            })
            .sum::<f64>()
    });
    per_setting.sum::<f64>() / 4.0
}

/// Lag-1 sample autocorrelation; 0 for constant or single-element sequences.
pub fn lag1_autocorrelation(seq: &[i8]) -> f64 {
    if seq.len() < 2 {
        return 0.0;
    }
    let n = seq.len() as f64;
    let mean = seq.iter().map(|&c| f64::from(c)).sum::<f64>() / n;
    let var: f64 = seq.iter().map(|&c| (f64::from(c) - mean).powi(2)).sum();
    if var <= 1e-12 {
        return 0.0;
    }
    let cov: f64 = seq.windows(2).map(|w| (f64::from(w[0]) - mean) * (f64::from(w[1]) - mean)).sum();
    cov / var
}

pub fn ensemble_features(
    block: &TrialBlock,
    reference: &Correlators,
    cfg: &DetectorConfig,
) -> Result<EnsembleFeatures, DetectorError> {
    let chsh_distance = nonconformity(block, reference, cfg)?;
    let autocorrelation = block.products_by_setting().iter().map(|s| lag1_autocorrelation(s)).sum::<f64>() / 4.0;
    Ok(EnsembleFeatures { chsh_distance, entropy: pair_entropy(block), autocorrelation })
}

/// Per-feature mean and spread of the calibration population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleCalibration {
    mean: [f64; 3],
    std: [f64; 3],
}

impl EnsembleCalibration {
    pub fn fit(
        blocks: &[TrialBlock],
        reference: &Correlators,
        cfg: &DetectorConfig,
    ) -> Result<Self, DetectorError> {
        if blocks.len() < MIN_CALIBRATION_BLOCKS {
            return Err(DetectorError::TooFewBlocks(blocks.len()));
        }
        let feats =
            blocks.iter().map(|b| ensemble_features(b, reference, cfg).map(EnsembleFeatures::to_array)).collect::<Result<Vec<_>, _>>()?;
        let n = feats.len() as f64;
        let mut mean = [0.0; 3];
        let mut std = [0.0; 3];
        for k in 0..3 {
            mean[k] = feats.iter().map(|f| f[k]).sum::<f64>() / n;
            std[k] = (feats.iter().map(|f| (f[k] - mean[k]).powi(2)).sum::<f64>() / (n - 1.0)).sqrt().max(1e-9);
        }
        Ok(Self { mean, std })
    }

    /// Features in units of calibration standard deviations.
    pub fn standardize(&self, f: &EnsembleFeatures) -> EnsembleFeatures {
        let [c, e, a] = std::array::from_fn(|k| (f.to_array()[k] - self.mean[k]) / self.std[k]);
        EnsembleFeatures { chsh_distance: c, entropy: e, autocorrelation: a }
    }
}

/// `z_chsh + |z_entropy| + |z_autocorr|`: the CHSH distance is already
/// directional, while entropy and autocorrelation anomalies count either way.
pub fn ensemble_score(
    block: &TrialBlock,
    reference: &Correlators,
    cfg: &DetectorConfig,
    calibration: &EnsembleCalibration,
) -> Result<f64, DetectorError> {
    let z = calibration.standardize(&ensemble_features(block, reference, cfg)?);
    Ok(z.chsh_distance + z.entropy.abs() + z.autocorrelation.abs())
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionReport {
    pub tara_k: f64,
    pub tara_m_wealth: f64,
    pub auc: f64,
    pub tpr_at_1pct: f64,
    pub tpr_at_5pct: f64,
    /// Fraction of test blocks whose p-value is at most the configured FPR.
    pub detection_prob: f64,
    /// Whether a majority of test blocks were flagged.
    pub detected: bool,
}

impl DetectionReport {
    /// Evaluate test blocks (`positive`) against held-out null blocks
    /// (`negative`), both already scored, with p-values from `calib`.
    pub fn evaluate(
        positive: &[f64],
        negative: &[f64],
        calib: &CalibrationSet,
        cfg: &DetectorConfig,
    ) -> Result<Self, DetectorError> {
        cfg.validate()?;
        check_scores(positive, "positive scores")?;
        let p: Vec<f64> = positive.iter().map(|&s| pvalue(s, calib, cfg)).collect();
        let detection_prob = p.iter().filter(|&&v| v <= cfg.detection_fpr).count() as f64 / p.len() as f64;
        Ok(Self {
            tara_k: tara_k(&p)?,
            tara_m_wealth: tara_m(&p, &cfg.martingale_epsilons)?,
            auc: auc(positive, negative)?,
            tpr_at_1pct: tpr_at_fpr(positive, negative, 0.01)?,
            tpr_at_5pct: tpr_at_fpr(positive, negative, 0.05)?,
            detection_prob,
            detected: detection_prob > 0.5,
        })
    }

    pub const CSV_HEADER: [&'static str; 6] = ["tara_k", "tara_m_wealth", "auc", "tpr1", "tpr5", "detected"];

    pub fn csv_fields(&self) -> [String; 6] {
        [
            sig(self.tara_k, 6),
            sig(self.tara_m_wealth, 6),
            sig(self.auc, 6),
            sig(self.tpr_at_1pct, 6),
            sig(self.tpr_at_5pct, 6),
            self.detected.to_string(),
        ]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DetectorError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        w.write_record(self.csv_fields())?;
        w.flush()?;
        Ok(())
    }
}
