//! The attack catalog, scored against one quantum calibration.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::Deserialize;

use super::{csv_writer, estimates, mean_chsh, quantum_null, scores, ExperimentConfig, ExperimentError};
use crate::correlations::{sample_trials, TrialBlock};
use crate::detectors::DetectionReport;
use crate::evegan::EveGenerator;
use crate::format::sig;
use crate::seed::StreamRng;
use crate::sources::{
    attack_trials, quantum_correlators, AttackContext, AttackKind, AttackSpec, QuantumSourceConfig,
    DEFAULT_TEMPORAL_RHO,
};
use crate::tinynet::Mlp;

enum Entry {
    Quantum(f64),
    Attack(AttackKind, f64),
}

fn catalog(cfg: &ExperimentConfig, noisy_visibility: f64) -> Vec<(&'static str, Entry)> {
    use AttackKind::*;
    vec![
        ("Quantum (true)", Entry::Quantum(cfg.visibility)),
        ("Quantum (noisy)", Entry::Quantum(noisy_visibility)),
        ("Shift 0.10", Entry::Attack(Shift, 0.10)),
        ("Shift 0.20", Entry::Attack(Shift, 0.20)),
        ("Shift 0.30", Entry::Attack(Shift, 0.30)),
        ("Bias 0.05", Entry::Attack(Bias, 0.05)),
        ("Bias 0.10", Entry::Attack(Bias, 0.10)),
        ("Match 0.25", Entry::Attack(Match, 0.25)),
        ("Match 0.50", Entry::Attack(Match, 0.50)),
        ("Temporal", Entry::Attack(Temporal, DEFAULT_TEMPORAL_RHO)),
        ("GAN", Entry::Attack(Gan, 0.0)),
        ("LHV", Entry::Attack(Lhv, 0.0)),
    ]
}

/// One strategy's outcome. `result` holds the error message when the
/// strategy could not be run.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRow {
    pub strategy: String,
    pub result: Result<StrategyMetrics, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyMetrics {
    pub chsh: f64,
    pub report: DetectionReport,
    pub n_blocks: usize,
}

/// Runs every catalog strategy for `cfg.n_test_blocks` blocks. The
/// detector is calibrated on quantum blocks at `cfg.visibility`; the match
/// attack replays the calibration blocks' estimated correlators.
pub fn strategy_catalog(
    cfg: &ExperimentConfig,
    generator: &Mlp,
    noisy_visibility: f64,
) -> Result<Vec<StrategyRow>, ExperimentError> {
    cfg.validate(false)?;
    let det = cfg.detector();
    let (null, _) = quantum_null(cfg, "strategies")?;
    let eve = EveGenerator::new(generator.clone());

    let mut rows = Vec::new();
    for (i, (name, entry)) in catalog(cfg, noisy_visibility).into_iter().enumerate() {
        let tag = format!("strategy-{i}");
        let blocks = |make: &dyn Fn(&mut StreamRng) -> Result<TrialBlock, ExperimentError>| {
            (0..cfg.n_test_blocks).map(|j| make(&mut cfg.rng(&tag, j))).collect::<Result<Vec<_>, _>>()
        };
        let generated = match entry {
            Entry::Quantum(v) => QuantumSourceConfig::new(v).map_err(ExperimentError::from).and_then(|q| {
                let c = quantum_correlators(&q);
                blocks(&|rng| Ok(sample_trials(&c, cfg.block_size, rng)?))
            }),
            Entry::Attack(kind, param) => {
                let mut ctx = AttackContext::new(null.reference).with_calibration(&null.calibration_estimates);
                match &eve {
                    Ok(g) => ctx = ctx.with_generator(g),
                    Err(e) if kind == AttackKind::Gan => {
                        rows.push(StrategyRow { strategy: name.to_string(), result: Err(e.to_string()) });
                        continue;
                    }
                    Err(_) => {}
                }
                AttackSpec::new(kind, param)
                    .map_err(ExperimentError::from)
                    .and_then(|spec| blocks(&|rng| Ok(attack_trials(&spec, &ctx, cfg.block_size, rng)?)))
            }
        };
        let result = generated.and_then(|b| {
            let est = estimates(&b)?;
            let pos = scores(&est, &null.reference, &det);
            let report = DetectionReport::evaluate(&pos, &null.negative_scores, &null.calibration, &det)?;
            Ok(StrategyMetrics { chsh: mean_chsh(&est), report, n_blocks: b.len() })
        });
        rows.push(StrategyRow { strategy: name.to_string(), result: result.map_err(|e| e.to_string()) });
    }
    Ok(rows)
}

/// Published figures for one strategy, carried through for comparison.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ReferenceEntry {
    pub strategy: String,
    pub chsh: f64,
    pub ks: f64,
    pub detection: f64,
    pub tara_m_wealth: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StrategyReference {
    entries: HashMap<String, ReferenceEntry>,
}

impl StrategyReference {
    pub fn get(&self, strategy: &str) -> Option<&ReferenceEntry> {
        self.entries.get(strategy)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Reads `strategy,chsh,ks,detection,tara_m_wealth` rows.
pub fn parse_strategy_reference<R: Read>(input: R) -> Result<StrategyReference, ExperimentError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut entries = HashMap::new();
    for (i, rec) in rdr.deserialize::<ReferenceEntry>().enumerate() {
        let line = i + 2;
        let e = rec.map_err(|e| ExperimentError::Data { line, message: e.to_string() })?;
        if entries.insert(e.strategy.clone(), e).is_some() {
            return Err(ExperimentError::Data { line, message: "duplicate strategy".into() });
        }
    }
    Ok(StrategyReference { entries })
}

pub fn load_strategy_reference(path: &Path) -> Result<StrategyReference, ExperimentError> {
    parse_strategy_reference(std::fs::File::open(path)?)
}

pub const STRATEGY_CSV_HEADER: [&str; 15] = [
    "strategy",
    "chsh",
    "tara_k",
    "auc",
    "tpr1",
    "tpr5",
    "detection_prob",
    "tara_m_wealth",
    "log10_wealth",
    "n_blocks",
    "error",
    "reference_chsh",
    "reference_ks",
    "reference_detection",
    "reference_tara_m_wealth",
];

pub fn write_strategy_csv<W: Write>(
    rows: &[StrategyRow],
    reference: &StrategyReference,
    out: W,
) -> Result<(), ExperimentError> {
    let mut w = csv_writer(out);
    w.write_record(STRATEGY_CSV_HEADER)?;
    for row in rows {
        let mut rec = vec![row.strategy.clone()];
        match &row.result {
            Ok(m) => {
                let r = &m.report;
                rec.extend([m.chsh, r.tara_k, r.auc, r.tpr_at_1pct, r.tpr_at_5pct, r.detection_prob, r.tara_m_wealth]
                    .map(|v| sig(v, 6)));
                rec.push(sig(r.tara_m_wealth.log10(), 6));
                rec.push(m.n_blocks.to_string());
                rec.push(String::new());
            }
            Err(msg) => {
                rec.extend(std::iter::repeat_n(String::new(), 9));
                rec.push(msg.clone());
            }
        }
        match reference.get(&row.strategy) {
            Some(p) => rec.extend([p.chsh, p.ks, p.detection, p.tara_m_wealth].map(|v| sig(v, 6))),
            None => rec.extend(std::iter::repeat_n(String::new(), 4)),
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
