//! CHSH correlators, trial-level sampling and re-estimation.
//!
//! Outcomes are `±1` and every source in the crate uses unbiased marginals,
//! so a correlator vector in `[-1, 1]^4` fully determines the per-setting
//! joint distribution of `(a, b)`:
//! `P(a = +1) = P(b = +1) = 1/2` and `P(a·b = +1) = (1 + E_xy) / 2`.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from building, sampling or parsing trial data.
#[derive(Debug, Error)]
pub enum CorrelationError {
    #[error("setting ({x},{y}) out of range: settings must be 0 or 1")]
    InvalidSetting { x: i64, y: i64 },
    #[error("outcome ({a},{b}) out of range: outcomes must be -1 or 1")]
    InvalidOutcome { a: i64, b: i64 },
    #[error("n_per_setting must be at least 1")]
    ZeroTrials,
    #[error("no trials for setting pair ({x},{y})")]
    MissingSetting { x: u8, y: u8 },
    #[error("correlator {value} for setting ({x},{y}) outside [-1, 1]")]
    NotRealizable { x: u8, y: u8, value: f64 },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The four CHSH correlators `E_xy = <a·b | x, y>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlators {
    pub e00: f64,
    pub e01: f64,
    pub e10: f64,
    pub e11: f64,
}

/// The Popescu-Rohrlich box, `S = 4`.
pub const PR_BOX: Correlators = Correlators { e00: 1.0, e01: 1.0, e10: 1.0, e11: -1.0 };

impl Correlators {
    pub const ZERO: Correlators = Correlators { e00: 0.0, e01: 0.0, e10: 0.0, e11: 0.0 };

    pub const fn new(e00: f64, e01: f64, e10: f64, e11: f64) -> Self {
        Self { e00, e01, e10, e11 }
    }

    /// Values in setting order `(0,0), (0,1), (1,0), (1,1)`.
    pub fn to_array(self) -> [f64; 4] {
        [self.e00, self.e01, self.e10, self.e11]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    /// Correlator for setting pair `(x, y)`; `x, y ∈ {0, 1}`.
    pub fn get(&self, x: u8, y: u8) -> f64 {
        self.to_array()[setting_index(x, y)]
    }

    pub fn scale(self, factor: f64) -> Self {
        Self::from_array(self.to_array().map(|e| e * factor))
    }

    /// `weight·self + (1 − weight)·other`, component-wise.
    pub fn blend(self, other: Correlators, weight: f64) -> Self {
        let a = self.to_array();
        let b = other.to_array();
        Self::from_array(std::array::from_fn(|i| weight * a[i] + (1.0 - weight) * b[i]))
    }

    pub fn chsh(&self) -> f64 {
        chsh(self)
    }

    pub fn is_realizable(&self) -> bool {
        realizable(self)
    }

    /// Error naming the first component outside `[-1, 1]` (or non-finite).
    pub fn check_realizable(&self) -> Result<(), CorrelationError> {
        for (i, e) in self.to_array().into_iter().enumerate() {
            if !(-1.0..=1.0).contains(&e) {
                let (x, y) = SETTINGS[i];
                return Err(CorrelationError::NotRealizable { x, y, value: e });
            }
        }
        Ok(())
    }
}

/// Setting pairs in canonical order.
pub const SETTINGS: [(u8, u8); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

/// Index of setting `(x, y)` in [`SETTINGS`].
pub fn setting_index(x: u8, y: u8) -> usize {
    debug_assert!(x <= 1 && y <= 1);
    usize::from(2 * x + y)
}

/// CHSH value `S = E00 + E01 + E10 − E11`.
pub fn chsh(c: &Correlators) -> f64 {
    c.e00 + c.e01 + c.e10 - c.e11
}

/// True iff every component lies in `[-1, 1]`. Under unbiased marginals this
/// is exactly the set of no-signalling boxes.
pub fn realizable(c: &Correlators) -> bool {
    c.to_array().iter().all(|e| (-1.0..=1.0).contains(e))
}

/// One measurement round: settings `x, y ∈ {0,1}`, outcomes `a, b ∈ {−1,+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Trial {
    x: u8,
    y: u8,
    a: i8,
    b: i8,
}

impl Trial {
    pub fn new(x: u8, y: u8, a: i8, b: i8) -> Result<Self, CorrelationError> {
        if x > 1 || y > 1 {
            return Err(CorrelationError::InvalidSetting { x: x.into(), y: y.into() });
        }
        if a.abs() != 1 || b.abs() != 1 {
            return Err(CorrelationError::InvalidOutcome { a: a.into(), b: b.into() });
        }
        Ok(Self { x, y, a, b })
    }

    pub fn x(&self) -> u8 {
        self.x
    }
    pub fn y(&self) -> u8 {
        self.y
    }
    pub fn a(&self) -> i8 {
        self.a
    }
    pub fn b(&self) -> i8 {
        self.b
    }
    pub fn setting(&self) -> usize {
        setting_index(self.x, self.y)
    }
    pub fn product(&self) -> i8 {
        self.a * self.b
    }

    /// Trial with product `a·b = product` and Alice's outcome `a`.
    pub(crate) fn from_product(x: u8, y: u8, a: i8, product: i8) -> Self {
        Self { x, y, a, b: a * product }
    }
}

/// An ordered sequence of trials with per-setting counts.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrialBlock {
    trials: Vec<Trial>,
    counts: [usize; 4],
}

impl TrialBlock {
    pub fn from_trials(trials: Vec<Trial>) -> Self {
        let mut counts = [0; 4];
        for t in &trials {
            counts[t.setting()] += 1;
        }
        Self { trials, counts }
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    /// Trial counts in [`SETTINGS`] order.
    pub fn counts_per_setting(&self) -> [usize; 4] {
        self.counts
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Error naming the first setting pair with no trials.
    pub fn check_complete(&self) -> Result<(), CorrelationError> {
        match self.counts.iter().position(|&c| c == 0) {
            Some(i) => {
                let (x, y) = SETTINGS[i];
                Err(CorrelationError::MissingSetting { x, y })
            }
            None => Ok(()),
        }
    }

    /// Product sequences `a·b`, one per setting, in trial order.
    pub fn products_by_setting(&self) -> [Vec<i8>; 4] {
        let mut out: [Vec<i8>; 4] = std::array::from_fn(|i| Vec::with_capacity(self.counts[i]));
        for t in &self.trials {
            out[t.setting()].push(t.product());
        }
        out
    }

    /// Write as CSV with header `x,y,a,b` and one newline-terminated row per trial.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), CorrelationError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["x", "y", "a", "b"]).map_err(csv_write_error)?;
        for t in &self.trials {
            w.write_record(&[t.x.to_string(), t.y.to_string(), t.a.to_string(), t.b.to_string()])
                .map_err(csv_write_error)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parse the CSV produced by [`TrialBlock::write_csv`].
    pub fn read_csv<R: Read>(input: R) -> Result<Self, CorrelationError> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
        let mut records = r.records();
        let header = match records.next() {
            None => return Err(CorrelationError::Parse { line: 1, message: "missing header row".into() }),
            Some(rec) => rec.map_err(csv_read_error)?,
        };
        if header.iter().collect::<Vec<_>>() != ["x", "y", "a", "b"] {
            return Err(CorrelationError::Parse {
                line: 1,
                message: format!("expected header x,y,a,b, found {}", header.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut trials = Vec::new();
        for rec in records {
            let rec = rec.map_err(csv_read_error)?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != 4 {
                return Err(CorrelationError::Parse { line, message: format!("expected 4 fields, found {}", rec.len()) });
            }
            let mut v = [0i64; 4];
            for (slot, field) in v.iter_mut().zip(rec.iter()) {
                *slot = field.parse().map_err(|_| CorrelationError::Parse {
                    line,
                    message: format!("not an integer: {field:?}"),
                })?;
            }
            let [x, y, a, b] = v;
            if !(0..=1).contains(&x) || !(0..=1).contains(&y) {
                return Err(CorrelationError::Parse { line, message: format!("setting ({x},{y}) must be 0 or 1") });
            }
            if a.abs() != 1 || b.abs() != 1 {
                return Err(CorrelationError::Parse { line, message: format!("outcome ({a},{b}) must be -1 or 1") });
            }
            trials.push(Trial { x: x as u8, y: y as u8, a: a as i8, b: b as i8 });
        }
        Ok(Self::from_trials(trials))
    }
}

fn csv_read_error(e: csv::Error) -> CorrelationError {
    let line = e.position().map_or(0, |p| p.line());
    CorrelationError::Parse { line, message: e.to_string() }
}

fn csv_write_error(e: csv::Error) -> CorrelationError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CorrelationError::Io(io),
        other => CorrelationError::Parse { line: 0, message: format!("{other:?}") },
    }
}

/// Draw a `±1` outcome with `P(+1) = 1/2`.
pub(crate) fn fair_sign<R: Rng + ?Sized>(rng: &mut R) -> i8 {
    if rng.random::<bool>() {
        1
    } else {
        -1
    }
}

/// Draw a product `a·b` with `P(+1) = (1 + e) / 2`.
pub(crate) fn product_sign<R: Rng + ?Sized>(rng: &mut R, e: f64) -> i8 {
    if rng.random::<f64>() < 0.5 * (1.0 + e) {
        1
    } else {
        -1
    }
}

/// Sample `n_per_setting` trials for each setting pair, setting-major order.
pub fn sample_trials<R: Rng + ?Sized>(
    c: &Correlators,
    n_per_setting: usize,
    rng: &mut R,
) -> Result<TrialBlock, CorrelationError> {
    if n_per_setting == 0 {
        return Err(CorrelationError::ZeroTrials);
    }
    c.check_realizable()?;
    let e = c.to_array();
    let mut trials = Vec::with_capacity(4 * n_per_setting);
    for (i, &(x, y)) in SETTINGS.iter().enumerate() {
        for _ in 0..n_per_setting {
            let a = fair_sign(rng);
            let p = product_sign(rng, e[i]);
            trials.push(Trial::from_product(x, y, a, p));
        }
    }
    Ok(TrialBlock { trials, counts: [n_per_setting; 4] })
}

/// Sample trials where every trial draws its correlators from `pool`
/// uniformly at random.
pub fn sample_trials_pooled<R: Rng + ?Sized>(
    pool: &[Correlators],
    n_per_setting: usize,
    rng: &mut R,
) -> Result<TrialBlock, CorrelationError> {
    if n_per_setting == 0 {
        return Err(CorrelationError::ZeroTrials);
    }
    for c in pool {
        c.check_realizable()?;
    }
    let Some(first) = pool.first() else {
        return Err(CorrelationError::ZeroTrials);
    };
    if pool.len() == 1 {
        return sample_trials(first, n_per_setting, rng);
    }
    let mut trials = Vec::with_capacity(4 * n_per_setting);
    for (i, &(x, y)) in SETTINGS.iter().enumerate() {
        for _ in 0..n_per_setting {
            let e = pool[rng.random_range(0..pool.len())].to_array()[i];
            let a = fair_sign(rng);
            let p = product_sign(rng, e);
            trials.push(Trial::from_product(x, y, a, p));
        }
    }
    Ok(TrialBlock { trials, counts: [n_per_setting; 4] })
}

/// Empirical correlators: per-setting mean of `a·b`.
pub fn estimate_correlators(block: &TrialBlock) -> Result<Correlators, CorrelationError> {
    block.check_complete()?;
    let mut sums = [0i64; 4];
    for t in &block.trials {
        sums[t.setting()] += i64::from(t.product());
    }
    Ok(Correlators::from_array(std::array::from_fn(|i| sums[i] as f64 / block.counts[i] as f64)))
}
