//! Eve's generative adversary: a 4→64→128→64→4 tanh generator trained
//! against a small neural discriminator on noisy quantum correlator
//! estimates.
//!
//! Training recipe: both networks use Adam with `β1 = 0.5`; the
//! discriminator learns 20× faster than the generator and sees inputs
//! standardized by statistics of a fixed real reference sample; its output
//! layer starts at zero so the untrained critic answers exactly 1/2; the
//! returned generator is an exponential moving average of the trained one.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlations::Correlators;
use crate::format::sig;
use crate::sources::{CorrelatorSource, SourceError};
use crate::tinynet::{bce_loss, optimizer_step, Activation, Matrix, Mlp, NetError, OptimizerState};

const MAX_REJECTIONS: usize = 100;
const STANDARDIZE_SAMPLES: usize = 4096;

#[derive(Debug, Error)]
pub enum GanError {
    #[error("invalid gan config: {0}")]
    Config(String),
    #[error("non-finite {what} at epoch {epoch}")]
    NonFinite { what: &'static str, epoch: usize },
    #[error("generator architecture: {0}")]
    Architecture(String),
    #[error("no realizable sample after {0} attempts")]
    Rejection(usize),
    #[error("kl divergence needs non-empty inputs and at least 2 bins")]
    KlInput,
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanConfig {
    pub latent_dim: usize,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub gen_lr: f64,
    pub disc_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub ema_decay: f64,
    pub warmup_steps: usize,
    pub log_interval: usize,
    pub eval_samples: usize,
    pub kl_bins: usize,
    pub kl_epsilon: f64,
    /// Visibility and shots per setting of the noisy quantum reference.
    pub visibility: f64,
    pub shots: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            latent_dim: 4,
            generator_hidden: vec![64, 128, 64],
            discriminator_hidden: vec![64, 64],
            epochs: 2000,
            batch_size: 128,
            gen_lr: 5e-5,
            disc_lr: 1e-3,
            beta1: 0.5,
            beta2: 0.999,
            ema_decay: 0.99,
            warmup_steps: 50,
            log_interval: 100,
            eval_samples: 2000,
            kl_bins: 20,
            kl_epsilon: 1e-6,
            visibility: 0.97,
            shots: 1024,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<(), GanError> {
        let bad = |m: String| Err(GanError::Config(m));
        if self.latent_dim == 0 {
            return bad("latent_dim must be positive".into());
        }
        if self.generator_hidden.contains(&0) || self.discriminator_hidden.contains(&0) {
            return bad("hidden widths must be positive".into());
        }
        if self.batch_size == 0 || self.log_interval == 0 || self.eval_samples == 0 {
            return bad("batch_size, log_interval and eval_samples must be positive".into());
        }
        for (name, lr) in [("gen_lr", self.gen_lr), ("disc_lr", self.disc_lr)] {
            if !(lr.is_finite() && lr > 0.0) {
                return bad(format!("{name} = {lr} must be positive"));
            }
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2), ("ema_decay", self.ema_decay)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} = {b} outside [0, 1)"));
            }
        }
        if self.kl_bins < 2 {
            return bad(format!("kl_bins = {} below 2", self.kl_bins));
        }
        if !(self.kl_epsilon.is_finite() && self.kl_epsilon > 0.0) {
            return bad(format!("kl_epsilon = {} must be positive", self.kl_epsilon));
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return bad(format!("visibility = {} outside [0, 1]", self.visibility));
        }
        if self.shots == 0 {
            return bad("shots must be positive".into());
        }
        Ok(())
    }

    fn generator_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.latent_dim];
        s.extend(&self.generator_hidden);
        s.push(4);
        s
    }

    fn discriminator_sizes(&self) -> Vec<usize> {
        let mut s = vec![4];
        s.extend(&self.discriminator_hidden);
        s.push(1);
        s
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain config serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub epoch: usize,
    pub gen_loss: f64,
    pub disc_acc: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainingTrace {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), GanError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["epoch", "gen_loss", "disc_acc", "kl"])?;
        for r in &self.records {
            w.write_record([r.epoch.to_string(), sig(r.gen_loss, 6), sig(r.disc_acc, 6), sig(r.kl, 6)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The critic: an MLP on standardized correlator vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    net: Mlp,
    mean: [f64; 4],
    std: [f64; 4],
}

impl Discriminator {
    fn new(net: Mlp, reference: &[Correlators]) -> Self {
        let n = reference.len() as f64;
        let mut mean = [0.0; 4];
        for c in reference {
            for (m, v) in mean.iter_mut().zip(c.to_array()) {
                *m += v / n;
            }
        }
        let mut std = [0.0; 4];
        for c in reference {
            for ((s, v), m) in std.iter_mut().zip(c.to_array()).zip(mean) {
                *s += (v - m).powi(2) / (n - 1.0).max(1.0);
            }
        }
        Self { net, mean, std: std.map(|v| v.sqrt().max(1e-6)) }
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    fn standardize(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (k, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.mean[k]) / self.std[k];
            }
        }
        out
    }

    /// Probability that each row is a genuine quantum estimate.
    pub fn probability(&self, x: &Matrix) -> Result<Vec<f64>, GanError> {
        Ok(self.net.predict(&self.standardize(x))?.into_vec())
    }
}

/// Result of [`train_eve`]. `generator` is the averaged generator.
#[derive(Debug, Clone)]
pub struct TrainedEve {
    pub generator: Mlp,
    pub discriminator: Discriminator,
    pub trace: TrainingTrace,
    /// Discriminator accuracy right after the warm-up phase.
    pub warmup_accuracy: f64,
}

fn latent_batch<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> Matrix {
    let data = (0..n * dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::from_vec(n, dim, data).expect("shape by construction")
}

fn row_realizable(row: &[f64]) -> bool {
    row.iter().all(|v| v.is_finite() && (-1.0..=1.0).contains(v))
}

/// Generator outputs for `n` latent draws, redrawing any row that is not a
/// valid correlator vector. Returns the latent batch actually used.
fn fake_batch<R: Rng + ?Sized>(gen: &Mlp, n: usize, rng: &mut R) -> Result<(Matrix, Matrix), GanError> {
    let dim = gen.input_dim();
    let mut z = latent_batch(n, dim, rng);
    let mut out = gen.predict(&z)?;
    for r in 0..n {
        let mut attempts = 0;
        while !row_realizable(out.row(r)) {
            attempts += 1;
            if attempts > MAX_REJECTIONS {
                return Err(GanError::Rejection(MAX_REJECTIONS));
            }
            let fresh = latent_batch(1, dim, rng);
            z.row_mut(r).copy_from_slice(fresh.row(0));
            let y = gen.predict(&fresh)?;
            out.row_mut(r).copy_from_slice(y.row(0));
        }
    }
    Ok((z, out))
}

fn real_batch<R: RngCore>(sampler: &dyn CorrelatorSource, n: usize, rng: &mut R) -> Result<Matrix, GanError> {
    let mut data = Vec::with_capacity(4 * n);
    for _ in 0..n {
        data.extend(sampler.draw(rng)?.to_array());
    }
    Ok(Matrix::from_vec(n, 4, data)?)
}

fn rows_to_correlators(m: &Matrix) -> Vec<Correlators> {
    (0..m.rows()).map(|r| Correlators::from_array(m.row(r).try_into().expect("four columns"))).collect()
}

fn check_generator(gen: &Mlp, latent_dim: Option<usize>) -> Result<(), GanError> {
    if latent_dim.is_some_and(|d| d != gen.input_dim()) {
        return Err(GanError::Architecture(format!("latent width {} != {}", gen.input_dim(), latent_dim.unwrap_or(0))));
    }
    if gen.output_dim() != 4 {
        return Err(GanError::Architecture(format!("output width {} != 4", gen.output_dim())));
    }
    let last = gen.layers().last().expect("non-empty").activation();
    if last != Activation::Tanh {
        return Err(GanError::Architecture(format!("output activation {last} is not tanh")));
    }
    Ok(())
}

/// `n` correlator vectors from standard-normal latents.
pub fn generate<R: Rng + ?Sized>(gen: &Mlp, n: usize, rng: &mut R) -> Result<Vec<Correlators>, GanError> {
    check_generator(gen, None)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    Ok(rows_to_correlators(&fake_batch(gen, n, rng)?.1))
}

/// A trained generator viewed as a correlator source.
#[derive(Debug, Clone)]
pub struct EveGenerator {
    net: Mlp,
}

impl EveGenerator {
    pub fn new(net: Mlp) -> Result<Self, GanError> {
        check_generator(&net, None)?;
        Ok(Self { net })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn generate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Correlators>, GanError> {
        generate(&self.net, n, rng)
    }
}

impl CorrelatorSource for EveGenerator {
    fn draw(&self, rng: &mut dyn RngCore) -> Result<Correlators, SourceError> {
        generate(&self.net, 1, rng).map(|v| v[0]).map_err(|e| SourceError::Generator(e.to_string()))
    }
}

/// Sum over the four correlator dimensions of `KL(P ‖ Q)` between
/// marginal histograms on `[−1, 1]` with `bins` equal bins, each smoothed
/// as `p_i = (c_i / N + ε) / (1 + bins·ε)`.
pub fn kl_divergence(p: &[Correlators], q: &[Correlators], bins: usize, epsilon: f64) -> Result<f64, GanError> {
    if p.is_empty() || q.is_empty() || bins < 2 || !(epsilon > 0.0) {
        return Err(GanError::KlInput);
    }
    let hist = |s: &[Correlators], d: usize| -> Vec<f64> {
        let mut h = vec![0.0; bins];
        for c in s {
            let v = c.to_array()[d];
            let i = (((v + 1.0) / 2.0 * bins as f64).floor().max(0.0) as usize).min(bins - 1);
            h[i] += 1.0;
        }
        let n = s.len() as f64;
        h.iter().map(|c| (c / n + epsilon) / (1.0 + bins as f64 * epsilon)).collect()
    };
    let mut total = 0.0;
    for d in 0..4 {
        let (hp, hq) = (hist(p, d), hist(q, d));
        total += hp.iter().zip(&hq).map(|(a, b)| a * (a / b).ln()).sum::<f64>();
    }
    Ok(total.max(0.0))
}

fn accuracy(disc: &Discriminator, real: &Matrix, fake: &Matrix) -> Result<f64, GanError> {
    let pr = disc.probability(real)?;
    let pf = disc.probability(fake)?;
    let hit_real = pr.iter().filter(|&&p| p > 0.5).count() as f64 / pr.len() as f64;
    let hit_fake = pf.iter().filter(|&&p| p <= 0.5).count() as f64 / pf.len() as f64;
    Ok(0.5 * (hit_real + hit_fake))
}

/// Summary of a generator against the real source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GanEvaluation {
    pub accuracy: f64,
    pub mean_chsh: f64,
    pub kl: f64,
}

/// Held-out accuracy of `disc`, mean generated CHSH and marginal KL, each
/// from `n` fresh real and generated samples.
pub fn evaluate<R: RngCore>(
    gen: &Mlp,
    disc: &Discriminator,
    sampler: &dyn CorrelatorSource,
    n: usize,
    bins: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<GanEvaluation, GanError> {
    let real = real_batch(sampler, n, rng)?;
    let (_, fake) = fake_batch(gen, n, rng)?;
    let accuracy = accuracy(disc, &real, &fake)?;
    let fake_c = rows_to_correlators(&fake);
    let mean_chsh = fake_c.iter().map(Correlators::chsh).sum::<f64>() / n as f64;
    let kl = kl_divergence(&rows_to_correlators(&real), &fake_c, bins, epsilon)?;
    Ok(GanEvaluation { accuracy, mean_chsh, kl })
}

struct Trainer<'a> {
    cfg: &'a GanConfig,
    sampler: &'a dyn CorrelatorSource,
    gen: Mlp,
    ema: Mlp,
    disc: Discriminator,
    gen_opt: OptimizerState,
    disc_opt: OptimizerState,
}

impl Trainer<'_> {
    fn disc_step<R: RngCore>(&mut self, epoch: usize, rng: &mut R) -> Result<(), GanError> {
        let b = self.cfg.batch_size;
        let real = real_batch(self.sampler, b, rng)?;
        let (_, fake) = fake_batch(&self.gen, b, rng)?;
        let mut data = real.into_vec();
        data.extend(fake.into_vec());
        let x = self.disc.standardize(&Matrix::from_vec(2 * b, 4, data)?);
        let labels: Vec<f64> = (0..2 * b).map(|i| if i < b { 1.0 } else { 0.0 }).collect();
        let cache = self.disc.net.forward_batch(&x)?;
        let (loss, g) = bce_loss(cache.output().as_slice(), &labels)?;
        if !loss.is_finite() {
            return Err(GanError::NonFinite { what: "discriminator loss", epoch });
        }
        let (grads, _) = self.disc.net.backward_batch(&cache, &Matrix::from_vec(2 * b, 1, g)?)?;
        optimizer_step(&mut self.disc.net, &grads, &mut self.disc_opt)?;
        Ok(())
    }

    /// Non-saturating step: minimise `−log D(G(z))`.
    fn gen_step<R: RngCore>(&mut self, epoch: usize, rng: &mut R) -> Result<f64, GanError> {
        let b = self.cfg.batch_size;
        let (z, _) = fake_batch(&self.gen, b, rng)?;
        let gcache = self.gen.forward_batch(&z)?;
        let x = self.disc.standardize(gcache.output());
        let dcache = self.disc.net.forward_batch(&x)?;
        let (loss, g) = bce_loss(dcache.output().as_slice(), &vec![1.0; b])?;
        if !loss.is_finite() {
            return Err(GanError::NonFinite { what: "generator loss", epoch });
        }
        let (_, mut dx) = self.disc.net.backward_batch(&dcache, &Matrix::from_vec(b, 1, g)?)?;
        for r in 0..b {
            for (k, v) in dx.row_mut(r).iter_mut().enumerate() {
                *v /= self.disc.std[k];
            }
        }
        let (grads, _) = self.gen.backward_batch(&gcache, &dx)?;
        optimizer_step(&mut self.gen, &grads, &mut self.gen_opt)?;
        self.ema.blend_toward(&self.gen, self.cfg.ema_decay)?;
        if self.gen.check_finite().is_err() {
            return Err(GanError::NonFinite { what: "generator weights", epoch });
        }
        Ok(loss)
    }

    fn generator_loss<R: RngCore>(&self, rng: &mut R) -> Result<f64, GanError> {
        let (_, fake) = fake_batch(&self.ema, self.cfg.batch_size, rng)?;
        let p = self.disc.probability(&fake)?;
        Ok(bce_loss(&p, &vec![1.0; p.len()])?.0)
    }

    fn record<R: RngCore>(&self, epoch: usize, gen_loss: f64, rng: &mut R) -> Result<TraceRecord, GanError> {
        let cfg = self.cfg;
        let e = evaluate(&self.ema, &self.disc, self.sampler, cfg.eval_samples, cfg.kl_bins, cfg.kl_epsilon, rng)?;
        if !(gen_loss.is_finite() && e.kl.is_finite()) {
            return Err(GanError::NonFinite { what: "trace metric", epoch });
        }
        Ok(TraceRecord { epoch, gen_loss, disc_acc: e.accuracy, kl: e.kl })
    }
}

/// Train Eve's generator against `sampler`.
///
/// The trace holds a row for epoch 0 (before any update) and one every
/// `log_interval` epochs. One epoch is one discriminator step on a balanced
/// batch followed by one generator step. With `epochs = 0` nothing is
/// trained or logged.
pub fn train_eve<R: RngCore>(cfg: &GanConfig, sampler: &dyn CorrelatorSource, rng: &mut R) -> Result<TrainedEve, GanError> {
    cfg.validate()?;
    let relu_hidden = |n: usize, last: Activation| {
        let mut a = vec![Activation::Relu; n];
        a.push(last);
        a
    };
    let gen = Mlp::glorot(&cfg.generator_sizes(), &relu_hidden(cfg.generator_hidden.len(), Activation::Tanh), rng)?;
    let mut disc_net =
        Mlp::glorot(&cfg.discriminator_sizes(), &relu_hidden(cfg.discriminator_hidden.len(), Activation::Sigmoid), rng)?;
    let head = disc_net.layers_mut().last_mut().expect("non-empty");
    head.weights_mut().iter_mut().for_each(|w| *w = 0.0);
    let reference = rows_to_correlators(&real_batch(sampler, STANDARDIZE_SAMPLES, rng)?);
    let disc = Discriminator::new(disc_net, &reference);

    let mut t = Trainer {
        cfg,
        sampler,
        gen_opt: OptimizerState::new(&gen, cfg.gen_lr, cfg.beta1, cfg.beta2, 1e-8)?,
        disc_opt: OptimizerState::new(disc.net(), cfg.disc_lr, cfg.beta1, cfg.beta2, 1e-8)?,
        ema: gen.clone(),
        gen,
        disc,
    };
    let mut trace = TrainingTrace::default();
    if cfg.epochs == 0 {
        return Ok(TrainedEve { generator: t.ema, discriminator: t.disc, trace, warmup_accuracy: 0.5 });
    }

    let loss0 = t.generator_loss(rng)?;
    trace.records.push(t.record(0, loss0, rng)?);
    for _ in 0..cfg.warmup_steps {
        t.disc_step(0, rng)?;
    }
    let real = real_batch(sampler, cfg.eval_samples, rng)?;
    let (_, fake) = fake_batch(&t.ema, cfg.eval_samples, rng)?;
    let warmup_accuracy = accuracy(&t.disc, &real, &fake)?;

    for epoch in 1..=cfg.epochs {
        t.disc_step(epoch, rng)?;
        let loss = t.gen_step(epoch, rng)?;
        if epoch % cfg.log_interval == 0 || epoch == cfg.epochs {
            trace.records.push(t.record(epoch, loss, rng)?);
        }
    }
    Ok(TrainedEve { generator: t.ema, discriminator: t.disc, trace, warmup_accuracy })
}

/// Write `generator.mlp`, `gan_config.toml` and `trace.csv` into `dir`; returns the paths.
pub fn save_training(dir: &Path, cfg: &GanConfig, trained: &TrainedEve) -> Result<Vec<PathBuf>, GanError> {
    let paths = [dir.join("generator.mlp"), dir.join("gan_config.toml"), dir.join("trace.csv")];
    crate::tinynet::save_mlp(&trained.generator, &paths[0])?;
    std::fs::write(&paths[1], cfg.to_toml())?;
    let f = std::fs::File::create(&paths[2])?;
    trained.trace.write_csv(std::io::BufWriter::new(f))?;
    Ok(paths.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use crate::sources::{QuantumEstimateSampler, QuantumSourceConfig};

    fn sampler(v: f64) -> QuantumEstimateSampler {
        QuantumEstimateSampler::new(&QuantumSourceConfig::new(v).unwrap(), 1024).unwrap()
    }

    fn small_cfg(epochs: usize) -> GanConfig {
        GanConfig {
            generator_hidden: vec![16, 16],
            discriminator_hidden: vec![16],
            epochs,
            batch_size: 32,
            log_interval: 10,
            eval_samples: 200,
            warmup_steps: 5,
            ..GanConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_untrained_generator() {
        let cfg = small_cfg(0);
        let out = train_eve(&cfg, &sampler(0.97), &mut seed::stream(1, "gan", 0)).unwrap();
        assert!(out.trace.is_empty());
        let mut rng = seed::stream(1, "gan", 0);
        let sizes = cfg.generator_sizes();
        let fresh = Mlp::glorot(&sizes, &[Activation::Relu, Activation::Relu, Activation::Tanh], &mut rng).unwrap();
        assert_eq!(out.generator, fresh);
    }

    #[test]
    fn epoch_zero_is_chance() {
        let cfg = small_cfg(1);
        let out = train_eve(&cfg, &sampler(0.97), &mut seed::stream(2, "gan", 0)).unwrap();
        let first = out.trace.records[0];
        assert_eq!(first.epoch, 0);
        assert!((first.gen_loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((first.disc_acc - 0.5).abs() < 1e-12);
        assert!(out.warmup_accuracy > 0.6, "{}", out.warmup_accuracy);
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = small_cfg(20);
        let a = train_eve(&cfg, &sampler(0.97), &mut seed::stream(3, "gan", 0)).unwrap();
        let b = train_eve(&cfg, &sampler(0.97), &mut seed::stream(3, "gan", 0)).unwrap();
        assert_eq!(a.generator, b.generator);
        assert_eq!(a.trace, b.trace);
        let epochs: Vec<usize> = a.trace.records.iter().map(|r| r.epoch).collect();
        assert_eq!(epochs, vec![0, 10, 20]);
        for r in &a.trace.records {
            assert!((0.0..=1.0).contains(&r.disc_acc) && r.kl >= 0.0);
        }
    }

    #[test]
    fn generate_checks_architecture() {
        let mut rng = seed::stream(4, "gen", 0);
        let relu_out = Mlp::glorot(&[4, 8, 4], &[Activation::Relu, Activation::Relu], &mut rng).unwrap();
        assert!(matches!(generate(&relu_out, 3, &mut rng), Err(GanError::Architecture(_))));
        let narrow = Mlp::glorot(&[4, 8, 3], &[Activation::Relu, Activation::Tanh], &mut rng).unwrap();
        assert!(generate(&narrow, 3, &mut rng).is_err());
        let ok = Mlp::glorot(&[4, 8, 4], &[Activation::Relu, Activation::Tanh], &mut rng).unwrap();
        assert!(generate(&ok, 0, &mut rng).unwrap().is_empty());
        let out = generate(&ok, 100, &mut rng).unwrap();
        assert_eq!(out.len(), 100);
        assert!(out.iter().all(Correlators::is_realizable));
    }

    #[test]
    fn untrained_generator_is_centred() {
        let cfg = GanConfig::default();
        let acts = [Activation::Relu, Activation::Relu, Activation::Relu, Activation::Tanh];
        let mut total = 0.0;
        for s in 0..20 {
            let mut rng = seed::stream(s, "fresh", 0);
            let g = Mlp::glorot(&cfg.generator_sizes(), &acts, &mut rng).unwrap();
            let v = generate(&g, 1000, &mut rng).unwrap();
            total += v.iter().map(Correlators::chsh).sum::<f64>() / 1000.0;
        }
        assert!((total / 20.0).abs() < 0.3, "{}", total / 20.0);
    }

    #[test]
    fn kl_identical_is_zero() {
        let mut rng = seed::stream(5, "kl", 0);
        let s = sampler(0.9);
        let v: Vec<Correlators> = (0..500).map(|_| s.sample(&mut rng)).collect();
        assert_eq!(kl_divergence(&v, &v, 20, 1e-6).unwrap(), 0.0);
    }

    #[test]
    fn kl_disjoint_point_masses_closed_form() {
        let (bins, eps) = (50usize, 1e-6f64);
        let p = vec![Correlators::new(0.9, 0.9, 0.9, 0.9); 7];
        let q = vec![Correlators::new(-0.9, -0.9, -0.9, -0.9); 3];
        // Each dimension: mass (1+ε)/(1+Bε) against ε/(1+Bε) in one bin,
        // the reverse in another, and equal ε/(1+Bε) everywhere else.
        let z = 1.0 + bins as f64 * eps;
        let big = (1.0 + eps) / z;
        let small = eps / z;
        let per_dim = big * (big / small).ln() + small * (small / big).ln();
        let want = 4.0 * per_dim;
        assert!((want - 4.0 / z * ((1.0 + eps) / eps).ln()).abs() < 1e-12);
        let got = kl_divergence(&p, &q, bins, eps).unwrap();
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        assert!((got - 55.259283).abs() < 1e-5);
    }

    #[test]
    fn kl_input_errors() {
        let v = vec![Correlators::ZERO];
        assert!(kl_divergence(&[], &v, 10, 1e-6).is_err());
        assert!(kl_divergence(&v, &[], 10, 1e-6).is_err());
        assert!(kl_divergence(&v, &v, 1, 1e-6).is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = GanConfig { epochs: 17, ..GanConfig::default() };
        let back: GanConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        let partial: GanConfig = toml::from_str("epochs = 5").unwrap();
        assert_eq!(partial.batch_size, 128);
        assert!(GanConfig { kl_bins: 1, ..GanConfig::default() }.validate().is_err());
        assert!(GanConfig { beta1: 1.0, ..GanConfig::default() }.validate().is_err());
    }

    #[test]
    fn trace_csv_layout() {
        let trace = TrainingTrace {
            records: vec![TraceRecord { epoch: 0, gen_loss: std::f64::consts::LN_2, disc_acc: 0.5, kl: 1.25e-7 }],
        };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,gen_loss,disc_acc,kl\n0,0.693147,0.5,1.25e-7\n");
    }
}
