//! Correlation-generating processes: ideal and noisy quantum devices,
//! local-hidden-variable strategies, PR-box interpolation, trial-level
//! mixing and the attack catalog.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlations::{
    fair_sign, product_sign, sample_trials, CorrelationError, Correlators, Trial, TrialBlock, PR_BOX, SETTINGS,
};

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("{what} = {value} outside its valid range {range}")]
    InvalidParameter { what: &'static str, value: f64, range: &'static str },
    #[error("unknown attack kind {0:?}")]
    UnknownAttack(String),
    #[error("match attack needs a non-empty calibration set")]
    EmptyCalibration,
    #[error("gan attack needs a trained generator")]
    RequiresGenerator,
    #[error("target S = {target} outside [{lower}, 4]")]
    TargetOutOfRange { target: f64, lower: f64 },
    #[error("blocks differ at slot {slot}: {detail}")]
    MismatchedBlocks { slot: usize, detail: String },
    #[error("temporal chain with rho = {rho} cannot reach mean {mean}")]
    TemporalInfeasible { rho: f64, mean: f64 },
    #[error("generator failed: {0}")]
    Generator(String),
    #[error(transparent)]
    Correlation(#[from] CorrelationError),
}

fn check_range(what: &'static str, value: f64, lo: f64, hi: f64, range: &'static str) -> Result<(), SourceError> {
    if value.is_finite() && (lo..=hi).contains(&value) {
        Ok(())
    } else {
        Err(SourceError::InvalidParameter { what, value, range })
    }
}

/// Anything that can emit correlator vectors: trained generators, samplers.
pub trait CorrelatorSource {
    fn draw(&self, rng: &mut dyn RngCore) -> Result<Correlators, SourceError>;
}

// ---------------------------------------------------------------------------
// Quantum sources

/// Uniform device noise as a single visibility `v ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumSourceConfig {
    visibility: f64,
}

impl QuantumSourceConfig {
    pub fn new(visibility: f64) -> Result<Self, SourceError> {
        check_range("visibility", visibility, 0.0, 1.0, "[0, 1]")?;
        Ok(Self { visibility })
    }

    pub fn visibility(&self) -> f64 {
        self.visibility
    }
}

/// Singlet correlators at the optimal CHSH angles, scaled by the visibility.
pub fn quantum_correlators(cfg: &QuantumSourceConfig) -> Correlators {
    let e = cfg.visibility * std::f64::consts::FRAC_1_SQRT_2;
    Correlators::new(e, e, e, -e)
}

/// Correlator vectors as estimated from a finite run of `shots` rounds per
/// setting on a quantum device of the given visibility.
#[derive(Debug, Clone)]
pub struct QuantumEstimateSampler {
    truth: Correlators,
    shots: u64,
    binomials: [Binomial; 4],
}

impl QuantumEstimateSampler {
    pub fn new(cfg: &QuantumSourceConfig, shots: u64) -> Result<Self, SourceError> {
        if shots == 0 {
            return Err(SourceError::InvalidParameter { what: "shots", value: 0.0, range: ">= 1" });
        }
        let truth = quantum_correlators(cfg);
        let e = truth.to_array();
        let binomials = std::array::from_fn(|i| {
            Binomial::new(shots, (0.5 * (1.0 + e[i])).clamp(0.0, 1.0)).expect("probability within [0, 1]")
        });
        Ok(Self { truth, shots, binomials })
    }

    pub fn truth(&self) -> Correlators {
        self.truth
    }

    pub fn shots(&self) -> u64 {
        self.shots
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Correlators {
        let n = self.shots as f64;
        Correlators::from_array(std::array::from_fn(|i| {
            let agree = self.binomials[i].sample(rng) as f64;
            (2.0 * agree - n) / n
        }))
    }
}

impl CorrelatorSource for QuantumEstimateSampler {
    fn draw(&self, rng: &mut dyn RngCore) -> Result<Correlators, SourceError> {
        Ok(self.sample(rng))
    }
}

// ---------------------------------------------------------------------------
// Local hidden variables

/// Outcomes `(f(0), f(1), g(0), g(1))` of deterministic strategy `index`.
///
/// Bit 3 of the index is `f(0)`, bit 2 `f(1)`, bit 1 `g(0)`, bit 0 `g(1)`;
/// a clear bit means `+1`, a set bit `−1`.
pub fn deterministic_strategy(index: usize) -> [i8; 4] {
    assert!(index < 16, "deterministic strategies are indexed 0..16");
    std::array::from_fn(|k| if index >> (3 - k) & 1 == 0 { 1 } else { -1 })
}

/// Correlators of deterministic strategy `index`: `E_xy = f(x)·g(y)`.
pub fn deterministic_correlators(index: usize) -> Correlators {
    let [f0, f1, g0, g1] = deterministic_strategy(index).map(f64::from);
    Correlators::new(f0 * g0, f0 * g1, f1 * g0, f1 * g1)
}

/// Probability mixture over the 16 deterministic local strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LhvStrategy {
    weights: [f64; 16],
}

impl LhvStrategy {
    pub fn new(weights: [f64; 16]) -> Result<Self, SourceError> {
        for &w in &weights {
            check_range("lhv weight", w, 0.0, 1.0, "[0, 1]")?;
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(SourceError::InvalidParameter { what: "lhv weight sum", value: total, range: "1" });
        }
        Ok(Self { weights })
    }

    pub fn point_mass(index: usize) -> Self {
        let mut weights = [0.0; 16];
        weights[index] = 1.0;
        Self { weights }
    }

    pub fn uniform() -> Self {
        Self { weights: [1.0 / 16.0; 16] }
    }

    /// The shipped default: 3/4 on the uniform mixture of the eight
    /// deterministic strategies with `S = +2`, 1/4 on all sixteen.
    /// Correlators `(3/8, 3/8, 3/8, −3/8)`, `S = 1.5`.
    pub fn default_mixture() -> Self {
        let mut weights = [0.25 / 16.0; 16];
        for (i, w) in weights.iter_mut().enumerate() {
            if deterministic_correlators(i).chsh() > 0.0 {
                *w += 0.75 / 8.0;
            }
        }
        Self { weights }
    }

    pub fn weights(&self) -> &[f64; 16] {
        &self.weights
    }

    /// Draw a deterministic strategy index according to the weights.
    pub fn draw_strategy<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        self.weights.iter().rposition(|&w| w > 0.0).unwrap_or(15)
    }
}

pub fn lhv_correlators(s: &LhvStrategy) -> Correlators {
    let mut acc = [0.0; 4];
    for (i, w) in s.weights.iter().enumerate() {
        for (a, e) in acc.iter_mut().zip(deterministic_correlators(i).to_array()) {
            *a += w * e;
        }
    }
    Correlators::from_array(acc)
}

/// Trials where each round draws a fresh deterministic strategy from the
/// mixture (shared randomness) and both parties answer deterministically.
pub fn lhv_trials<R: Rng + ?Sized>(
    s: &LhvStrategy,
    n_per_setting: usize,
    rng: &mut R,
) -> Result<TrialBlock, SourceError> {
    if n_per_setting == 0 {
        return Err(CorrelationError::ZeroTrials.into());
    }
    let mut trials = Vec::with_capacity(4 * n_per_setting);
    for &(x, y) in &SETTINGS {
        for _ in 0..n_per_setting {
            let [f0, f1, g0, g1] = deterministic_strategy(s.draw_strategy(rng));
            let a = if x == 0 { f0 } else { f1 };
            let b = if y == 0 { g0 } else { g1 };
            trials.push(Trial::new(x, y, a, b)?);
        }
    }
    Ok(TrialBlock::from_trials(trials))
}

// ---------------------------------------------------------------------------
// PR-box interpolation

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolationConfig {
    lambda: f64,
    lhv_endpoint: Correlators,
}

impl InterpolationConfig {
    pub fn new(lambda: f64, lhv_endpoint: Correlators) -> Result<Self, SourceError> {
        check_range("lambda", lambda, 0.0, 1.0, "[0, 1]")?;
        check_classical(&lhv_endpoint)?;
        Ok(Self { lambda, lhv_endpoint })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn lhv_endpoint(&self) -> Correlators {
        self.lhv_endpoint
    }
}

fn check_classical(c: &Correlators) -> Result<(), SourceError> {
    c.check_realizable()?;
    let s = c.chsh();
    if s.abs() > 2.0 + 1e-12 {
        return Err(SourceError::InvalidParameter { what: "lhv endpoint CHSH", value: s, range: "[-2, 2]" });
    }
    Ok(())
}

/// `E(λ) = λ·E_PR + (1 − λ)·E_LHV`.
pub fn prbox_interpolate(cfg: &InterpolationConfig) -> Correlators {
    PR_BOX.blend(cfg.lhv_endpoint, cfg.lambda)
}

/// The λ at which [`prbox_interpolate`] reaches CHSH value `target`.
pub fn solve_lambda(target: f64, lhv_endpoint: &Correlators) -> Result<f64, SourceError> {
    check_classical(lhv_endpoint)?;
    let lower = lhv_endpoint.chsh();
    if !(lower..=4.0).contains(&target) {
        return Err(SourceError::TargetOutOfRange { target, lower });
    }
    if lower == 4.0 {
        return Ok(0.0);
    }
    Ok(((target - lower) / (4.0 - lower)).clamp(0.0, 1.0))
}

// ---------------------------------------------------------------------------
// Mixing

/// Fraction α of genuine quantum trials in the observed stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingConfig {
    alpha: f64,
}

impl MixingConfig {
    pub fn new(alpha: f64) -> Result<Self, SourceError> {
        check_range("alpha", alpha, 0.0, 1.0, "[0, 1]")?;
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Per trial slot, keep the quantum trial with probability α, else Eve's.
/// One uniform is consumed per slot regardless of α, so the same stream
/// yields nested selections across α values.
pub fn mix_blocks<R: Rng + ?Sized>(
    cfg: &MixingConfig,
    quantum: &TrialBlock,
    eve: &TrialBlock,
    rng: &mut R,
) -> Result<TrialBlock, SourceError> {
    quantum.check_complete()?;
    eve.check_complete()?;
    if quantum.len() != eve.len() {
        return Err(SourceError::MismatchedBlocks {
            slot: quantum.len().min(eve.len()),
            detail: format!("lengths {} and {}", quantum.len(), eve.len()),
        });
    }
    let mut out = Vec::with_capacity(quantum.len());
    for (slot, (q, e)) in quantum.trials().iter().zip(eve.trials()).enumerate() {
        if q.setting() != e.setting() {
            return Err(SourceError::MismatchedBlocks {
                slot,
                detail: format!("settings ({},{}) and ({},{})", q.x(), q.y(), e.x(), e.y()),
            });
        }
        let u: f64 = rng.random();
        out.push(if u < cfg.alpha { *q } else { *e });
    }
    Ok(TrialBlock::from_trials(out))
}

// ---------------------------------------------------------------------------
// Attacks

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Shift,
    Bias,
    Match,
    Temporal,
    Gan,
    Lhv,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Shift => "shift",
            AttackKind::Bias => "bias",
            AttackKind::Match => "match",
            AttackKind::Temporal => "temporal",
            AttackKind::Gan => "gan",
            AttackKind::Lhv => "lhv",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = SourceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "shift" => AttackKind::Shift,
            "bias" => AttackKind::Bias,
            "match" => AttackKind::Match,
            "temporal" => AttackKind::Temporal,
            "gan" => AttackKind::Gan,
            "lhv" => AttackKind::Lhv,
            _ => return Err(SourceError::UnknownAttack(s.to_string())),
        })
    }
}

/// Lag-1 autocorrelation of the shipped temporal attack.
pub const DEFAULT_TEMPORAL_RHO: f64 = 0.5;

/// Temporal attack correlator attenuation: maps ideal quantum `S = 2√2` to `S = 1.8`.
pub const TEMPORAL_ATTENUATION: f64 = 1.8 / (2.0 * std::f64::consts::SQRT_2);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    kind: AttackKind,
    param: f64,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, param: f64) -> Result<Self, SourceError> {
        match kind {
            AttackKind::Shift => check_range("shift delta", param, 0.0, 1.0, "[0, 1]")?,
            AttackKind::Bias => check_range("bias", param, 0.0, 0.5, "[0, 0.5]")?,
            AttackKind::Match => check_range("match fraction", param, 0.0, 1.0, "[0, 1]")?,
            AttackKind::Temporal => {
                if !(param.is_finite() && param > -1.0 && param < 1.0) {
                    return Err(SourceError::InvalidParameter { what: "temporal rho", value: param, range: "(-1, 1)" });
                }
            }
            AttackKind::Gan | AttackKind::Lhv => {}
        }
        Ok(Self { kind, param })
    }

    pub fn kind(&self) -> AttackKind {
        self.kind
    }

    pub fn param(&self) -> f64 {
        self.param
    }
}

/// What an attacker may draw on besides its own parameters.
#[derive(Clone, Copy)]
pub struct AttackContext<'a> {
    pub quantum_ref: Correlators,
    pub calibration: &'a [Correlators],
    pub generator: Option<&'a dyn CorrelatorSource>,
}

impl<'a> AttackContext<'a> {
    pub fn new(quantum_ref: Correlators) -> Self {
        Self { quantum_ref, calibration: &[], generator: None }
    }

    pub fn with_calibration(mut self, calibration: &'a [Correlators]) -> Self {
        self.calibration = calibration;
        self
    }

    pub fn with_generator(mut self, generator: &'a dyn CorrelatorSource) -> Self {
        self.generator = Some(generator);
        self
    }
}

fn shift_toward_zero(e: f64, delta: f64) -> f64 {
    e.signum() * (e.abs() - delta).max(0.0)
}

/// Correlators an attacker emits for one block.
///
/// * Shift: every correlator moves toward 0 by δ, stopping at 0.
/// * Bias: correlators attenuated by `(1 − 2b)²` (the trial-level bias of [`attack_trials`]).
/// * Match: with probability m a uniformly drawn calibration vector, else the quantum reference.
/// * Temporal: the quantum reference; the attack lives in trial ordering.
/// * Lhv: the default local mixture.
/// * Gan: one draw from the supplied generator.
pub fn attack_correlators<R: Rng>(
    spec: &AttackSpec,
    ctx: &AttackContext<'_>,
    rng: &mut R,
) -> Result<Correlators, SourceError> {
    let q = ctx.quantum_ref;
    let out = match spec.kind {
        AttackKind::Shift => Correlators::from_array(q.to_array().map(|e| shift_toward_zero(e, spec.param))),
        AttackKind::Bias => q.scale((1.0 - 2.0 * spec.param).powi(2)),
        AttackKind::Match => {
            if ctx.calibration.is_empty() {
                return Err(SourceError::EmptyCalibration);
            }
            if rng.random::<f64>() < spec.param {
                ctx.calibration[rng.random_range(0..ctx.calibration.len())]
            } else {
                q
            }
        }
        AttackKind::Temporal => q,
        AttackKind::Lhv => lhv_correlators(&LhvStrategy::default_mixture()),
        AttackKind::Gan => ctx.generator.ok_or(SourceError::RequiresGenerator)?.draw(rng)?,
    };
    out.check_realizable()?;
    Ok(out)
}

/// A trial block produced by the attacker.
///
/// Temporal runs, per setting, a two-state Markov chain on `a·b` with lag-1
/// autocorrelation ρ and stationary mean `TEMPORAL_ATTENUATION·E_xy`. Bias
/// replaces Alice's outcome by `+1` and Bob's by a fresh fair coin, each with
/// probability `2b`, which skews Alice's marginal by `b` and scales every
/// correlator by `(1 − 2b)²`. Every other kind samples the correlators of
/// [`attack_correlators`] i.i.d.
pub fn attack_trials<R: Rng>(
    spec: &AttackSpec,
    ctx: &AttackContext<'_>,
    n_per_setting: usize,
    rng: &mut R,
) -> Result<TrialBlock, SourceError> {
    if n_per_setting == 0 {
        return Err(CorrelationError::ZeroTrials.into());
    }
    match spec.kind {
        AttackKind::Temporal => temporal_trials(&ctx.quantum_ref.scale(TEMPORAL_ATTENUATION), spec.param, n_per_setting, rng),
        AttackKind::Bias => {
            let base = sample_trials(&ctx.quantum_ref, n_per_setting, rng)?;
            let p = 2.0 * spec.param;
            let trials = base
                .trials()
                .iter()
                .map(|t| {
                    let a = if rng.random::<f64>() < p { 1 } else { t.a() };
                    let b = if rng.random::<f64>() < p { fair_sign(rng) } else { t.b() };
                    Trial::new(t.x(), t.y(), a, b)
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(TrialBlock::from_trials(trials))
        }
        AttackKind::Lhv => lhv_trials(&LhvStrategy::default_mixture(), n_per_setting, rng),
        _ => {
            let c = attack_correlators(spec, ctx, rng)?;
            Ok(sample_trials(&c, n_per_setting, rng)?)
        }
    }
}

/// Trials whose per-setting product sequence is a stationary two-state
/// Markov chain with mean `target.get(x, y)` and lag-1 autocorrelation `rho`.
pub fn temporal_trials<R: Rng + ?Sized>(
    target: &Correlators,
    rho: f64,
    n_per_setting: usize,
    rng: &mut R,
) -> Result<TrialBlock, SourceError> {
    target.check_realizable()?;
    let mut trials = Vec::with_capacity(4 * n_per_setting);
    for (i, &(x, y)) in SETTINGS.iter().enumerate() {
        let mean = target.to_array()[i];
        let pi_plus = 0.5 * (1.0 + mean);
        // Flip probabilities out of +1 and out of −1.
        let leave_plus = (1.0 - rho) * (1.0 - pi_plus);
        let leave_minus = (1.0 - rho) * pi_plus;
        if leave_plus > 1.0 + 1e-12 || leave_minus > 1.0 + 1e-12 {
            return Err(SourceError::TemporalInfeasible { rho, mean });
        }
        let mut c = product_sign(rng, mean);
        for _ in 0..n_per_setting {
            trials.push(Trial::from_product(x, y, fair_sign(rng), c));
            let leave = if c == 1 { leave_plus } else { leave_minus };
            if rng.random::<f64>() < leave {
                c = -c;
            }
        }
    }
    Ok(TrialBlock::from_trials(trials))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlations::{estimate_correlators, sample_trials};
    use crate::seed;

    const TOL: f64 = 1e-12;

    #[test]
    fn quantum_examples() {
        let s = |v| quantum_correlators(&QuantumSourceConfig::new(v).unwrap()).chsh();
        assert!((s(1.0) - 2.0 * std::f64::consts::SQRT_2).abs() < TOL);
        assert!((s(1.0) - 2.828).abs() < 1e-3);
        assert_eq!(s(0.0), 0.0);
        // 0.9516 · 2√2
        assert!((s(0.9516) - 2.691_531_251_908_475).abs() < 1e-12);
        assert!(QuantumSourceConfig::new(1.01).is_err());
        assert!(QuantumSourceConfig::new(f64::NAN).is_err());
    }

    #[test]
    fn lhv_examples() {
        assert_eq!(lhv_correlators(&LhvStrategy::point_mass(0)), Correlators::new(1.0, 1.0, 1.0, 1.0));
        assert_eq!(lhv_correlators(&LhvStrategy::point_mass(0)).chsh(), 2.0);
        let u = lhv_correlators(&LhvStrategy::uniform());
        assert!(u.to_array().iter().all(|e| e.abs() < TOL));
        let d = lhv_correlators(&LhvStrategy::default_mixture());
        assert!((d.chsh() - 1.5).abs() < TOL);
        for (got, want) in d.to_array().iter().zip([0.375, 0.375, 0.375, -0.375]) {
            assert!((got - want).abs() < TOL);
        }
        let w: f64 = LhvStrategy::default_mixture().weights().iter().sum();
        assert!((w - 1.0).abs() < TOL);
    }

    #[test]
    fn every_deterministic_strategy_is_classical() {
        // Vertices of the local polytope; mixtures inherit the bound by convexity.
        for i in 0..16 {
            assert_eq!(deterministic_correlators(i).chsh().abs(), 2.0);
        }
    }

    #[test]
    fn lhv_weights_validated() {
        assert!(LhvStrategy::new([0.1; 16]).is_err());
        let mut w = [0.0; 16];
        w[3] = 1.0;
        assert!(LhvStrategy::new(w).is_ok());
        w[4] = -0.5;
        w[3] = 1.5;
        assert!(LhvStrategy::new(w).is_err());
    }

    #[test]
    fn lhv_trials_match_mixture() {
        let mut rng = seed::stream(11, "lhv", 0);
        let s = LhvStrategy::default_mixture();
        let block = lhv_trials(&s, 20_000, &mut rng).unwrap();
        let est = estimate_correlators(&block).unwrap();
        for (e, t) in est.to_array().iter().zip(lhv_correlators(&s).to_array()) {
            assert!((e - t).abs() < 0.03, "{e} vs {t}");
        }
        // A point mass answers deterministically.
        let block = lhv_trials(&LhvStrategy::point_mass(5), 10, &mut rng).unwrap();
        assert_eq!(estimate_correlators(&block).unwrap(), deterministic_correlators(5));
    }

    #[test]
    fn prbox_examples() {
        let lhv = lhv_correlators(&LhvStrategy::default_mixture());
        let at = |l| prbox_interpolate(&InterpolationConfig::new(l, lhv).unwrap());
        assert_eq!(at(1.0), PR_BOX);
        assert_eq!(at(0.0), lhv);
        let lambda = solve_lambda(2.05, &lhv).unwrap();
        assert!((lambda - 0.22).abs() < TOL);
        assert!((at(lambda).chsh() - 2.05).abs() < TOL);
        assert_eq!(solve_lambda(1.5, &lhv).unwrap(), 0.0);
        assert!(matches!(solve_lambda(1.2, &lhv), Err(SourceError::TargetOutOfRange { .. })));
        assert!(solve_lambda(4.1, &lhv).is_err());
        assert!(InterpolationConfig::new(0.5, PR_BOX).is_err());
    }

    #[test]
    fn mixing_endpoints() {
        let mut rng = seed::stream(5, "mix", 0);
        let q = sample_trials(&Correlators::new(1.0, 1.0, 1.0, 1.0), 50, &mut rng).unwrap();
        let e = sample_trials(&Correlators::new(-1.0, -1.0, -1.0, -1.0), 50, &mut rng).unwrap();
        let one = mix_blocks(&MixingConfig::new(1.0).unwrap(), &q, &e, &mut rng).unwrap();
        assert_eq!(one, q);
        let zero = mix_blocks(&MixingConfig::new(0.0).unwrap(), &q, &e, &mut rng).unwrap();
        assert_eq!(zero, e);
    }

    #[test]
    fn mixing_half_cancels() {
        let mut rng = seed::stream(5, "mix-half", 0);
        let n = 10_000;
        let q = sample_trials(&Correlators::new(1.0, 1.0, 1.0, 1.0), n, &mut rng).unwrap();
        let e = sample_trials(&Correlators::new(-1.0, -1.0, -1.0, -1.0), n, &mut rng).unwrap();
        let m = mix_blocks(&MixingConfig::new(0.5).unwrap(), &q, &e, &mut rng).unwrap();
        let bound = 3.0 / (n as f64).sqrt();
        for v in estimate_correlators(&m).unwrap().to_array() {
            assert!(v.abs() < bound, "{v}");
        }
    }

    #[test]
    fn mixing_shape_mismatch() {
        let mut rng = seed::stream(5, "mix-bad", 0);
        let q = sample_trials(&Correlators::ZERO, 10, &mut rng).unwrap();
        let e = sample_trials(&Correlators::ZERO, 11, &mut rng).unwrap();
        let cfg = MixingConfig::new(0.5).unwrap();
        assert!(matches!(mix_blocks(&cfg, &q, &e, &mut rng), Err(SourceError::MismatchedBlocks { .. })));
        let mut reordered: Vec<_> = q.trials().to_vec();
        reordered.reverse();
        let r = TrialBlock::from_trials(reordered);
        assert!(matches!(mix_blocks(&cfg, &q, &r, &mut rng), Err(SourceError::MismatchedBlocks { slot: 0, .. })));
    }

    fn ideal() -> Correlators {
        quantum_correlators(&QuantumSourceConfig::new(1.0).unwrap())
    }

    #[test]
    fn attack_correlator_examples() {
        let mut rng = seed::stream(9, "atk", 0);
        let ctx = AttackContext::new(ideal());
        let shift = |d| attack_correlators(&AttackSpec::new(AttackKind::Shift, d).unwrap(), &ctx, &mut seed::stream(1, "s", 0));
        assert_eq!(shift(0.0).unwrap(), ideal());
        let s = shift(0.2).unwrap().chsh();
        assert!((s - (2.0 * std::f64::consts::SQRT_2 - 0.8)).abs() < TOL);
        assert_eq!(shift(1.0).unwrap(), Correlators::ZERO);
        let lhv = attack_correlators(&AttackSpec::new(AttackKind::Lhv, 0.0).unwrap(), &ctx, &mut rng).unwrap();
        assert!((lhv.chsh() - 1.5).abs() < TOL);
        let bias = attack_correlators(&AttackSpec::new(AttackKind::Bias, 0.1).unwrap(), &ctx, &mut rng).unwrap();
        assert!((bias.chsh() - 0.64 * ideal().chsh()).abs() < TOL);
        let temporal = attack_correlators(&AttackSpec::new(AttackKind::Temporal, 0.5).unwrap(), &ctx, &mut rng).unwrap();
        assert_eq!(temporal, ideal());
    }

    #[test]
    fn attack_errors() {
        let mut rng = seed::stream(9, "atk-err", 0);
        let ctx = AttackContext::new(ideal());
        let m = AttackSpec::new(AttackKind::Match, 0.5).unwrap();
        assert!(matches!(attack_correlators(&m, &ctx, &mut rng), Err(SourceError::EmptyCalibration)));
        let g = AttackSpec::new(AttackKind::Gan, 0.0).unwrap();
        assert!(matches!(attack_correlators(&g, &ctx, &mut rng), Err(SourceError::RequiresGenerator)));
        assert!(matches!("laser".parse::<AttackKind>(), Err(SourceError::UnknownAttack(_))));
        assert_eq!("Temporal".parse::<AttackKind>().unwrap(), AttackKind::Temporal);
        assert!(AttackSpec::new(AttackKind::Shift, 1.5).is_err());
        assert!(AttackSpec::new(AttackKind::Bias, 0.6).is_err());
        assert!(AttackSpec::new(AttackKind::Temporal, 1.0).is_err());
        assert!(AttackSpec::new(AttackKind::Temporal, -1.0).is_err());
    }

    #[test]
    fn match_attack_copies_calibration() {
        let cal = [Correlators::new(0.1, 0.2, 0.3, -0.4)];
        let ctx = AttackContext::new(ideal()).with_calibration(&cal);
        let always = AttackSpec::new(AttackKind::Match, 1.0).unwrap();
        let never = AttackSpec::new(AttackKind::Match, 0.0).unwrap();
        let mut rng = seed::stream(2, "match", 0);
        for _ in 0..20 {
            assert_eq!(attack_correlators(&always, &ctx, &mut rng).unwrap(), cal[0]);
            assert_eq!(attack_correlators(&never, &ctx, &mut rng).unwrap(), ideal());
        }
    }

    #[test]
    fn gan_attack_uses_generator() {
        struct Fixed;
        impl CorrelatorSource for Fixed {
            fn draw(&self, _: &mut dyn RngCore) -> Result<Correlators, SourceError> {
                Ok(Correlators::new(0.5, 0.5, 0.5, -0.5))
            }
        }
        let ctx = AttackContext::new(ideal()).with_generator(&Fixed);
        let spec = AttackSpec::new(AttackKind::Gan, 0.0).unwrap();
        let c = attack_correlators(&spec, &ctx, &mut seed::stream(1, "g", 0)).unwrap();
        assert_eq!(c.chsh(), 2.0);
    }

    #[test]
    fn shift_trials_drop_s_by_four_delta() {
        let ctx = AttackContext::new(ideal());
        let spec = AttackSpec::new(AttackKind::Shift, 0.1).unwrap();
        let block = attack_trials(&spec, &ctx, 50_000, &mut seed::stream(4, "shift", 0)).unwrap();
        let s = estimate_correlators(&block).unwrap().chsh();
        assert!((s - (ideal().chsh() - 0.4)).abs() < 0.03, "{s}");
    }

    #[test]
    fn bias_trials_skew_marginal_and_attenuate() {
        let ctx = AttackContext::new(ideal());
        let spec = AttackSpec::new(AttackKind::Bias, 0.1).unwrap();
        let block = attack_trials(&spec, &ctx, 50_000, &mut seed::stream(4, "bias", 0)).unwrap();
        let s = estimate_correlators(&block).unwrap().chsh();
        assert!((s - 0.64 * ideal().chsh()).abs() < 0.03, "{s}");
        let plus = block.trials().iter().filter(|t| t.a() == 1).count() as f64 / block.len() as f64;
        assert!((plus - 0.6).abs() < 0.01, "{plus}");
    }

    #[test]
    fn temporal_chain_has_target_autocorrelation() {
        let target = Correlators::new(0.4, 0.4, 0.4, -0.4);
        let block = temporal_trials(&target, 0.5, 100_000, &mut seed::stream(8, "temporal", 0)).unwrap();
        for seq in block.products_by_setting() {
            let n = seq.len() as f64;
            let mean = seq.iter().map(|&c| f64::from(c)).sum::<f64>() / n;
            let var = 1.0 - mean * mean;
            let cov = seq.windows(2).map(|w| (f64::from(w[0]) - mean) * (f64::from(w[1]) - mean)).sum::<f64>() / (n - 1.0);
            assert!((cov / var - 0.5).abs() < 0.02, "rho {}", cov / var);
            assert!((mean.abs() - 0.4).abs() < 0.03, "mean {mean}");
        }
        assert!(matches!(
            temporal_trials(&Correlators::new(-0.9, 0.0, 0.0, 0.0), -0.9, 10, &mut seed::stream(1, "x", 0)),
            Err(SourceError::TemporalInfeasible { .. })
        ));
    }

    #[test]
    fn quantum_estimate_sampler_is_unbiased() {
        let cfg = QuantumSourceConfig::new(0.97).unwrap();
        let sampler = QuantumEstimateSampler::new(&cfg, 1024).unwrap();
        let mut rng = seed::stream(6, "qs", 0);
        let n = 4000;
        let mut acc = 0.0;
        for _ in 0..n {
            let c = sampler.sample(&mut rng);
            assert!(c.is_realizable());
            acc += c.chsh();
        }
        assert!((acc / n as f64 - quantum_correlators(&cfg).chsh()).abs() < 0.005);
    }
}
