//! Command-line front end. [`run`] returns the process exit status so the
//! binary stays a one-liner and tests can drive commands in-process.
//!
//! Exit statuses: 0 success, 1 check failure, 2 usage or config error,
//! 3 numeric failure, 4 malformed data file.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{Config, ConfigError};
use crate::detectors::DetectorError;
use crate::evegan::{self, GanError};
use crate::experiments::{self, svg, ExperimentError, SweepRow};
use crate::format::sig;
use crate::seed;
use crate::sources::{QuantumEstimateSampler, QuantumSourceConfig, SourceError};
use crate::tinynet::{self, Mlp, NetError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_DATA: i32 = 4;

const BUNDLED_STRATEGY_REFERENCE: &str = include_str!("../data/strategy_reference.csv");
const BUNDLED_ALPHA_REFERENCE: &str = include_str!("../data/alpha_reference.csv");
const BUNDLED_PRBOX_REFERENCE: &str = include_str!("../data/prbox_reference.csv");
const BUNDLED_TRAINING_REFERENCE: &str = include_str!("../data/training_reference.csv");

/// Random nets checked by `gradcheck` besides the two GAN shapes.
const GRADCHECK_RANDOM_NETS: usize = 50;
const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "bellforge", version, about = "Adversarial limits of CHSH-based certification, at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config; every key has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Also write SVG charts.
    #[arg(long, global = true)]
    plot: bool,
    /// Trained generator weight file.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Hardware correlator CSV, overriding the config.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Train the generator against noisy quantum correlators.
    Train,
    /// AUC and TPR against the quantum fraction α.
    SweepAlpha,
    /// Detection probability along the local-model to PR-box line.
    SweepPrbox,
    /// Same-source against cross-source calibration.
    Leakage,
    /// Every shipped attack against one quantum calibration.
    Strategies,
    /// Published hardware correlators against the generator.
    Hardware,
    /// Finite-difference check of backpropagation.
    Gradcheck {
        /// Scale analytic gradients by 1.01 before comparing.
        #[arg(long, hide = true)]
        corrupt_backward: bool,
    },
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::SweepAlpha => "sweep-alpha",
            Command::SweepPrbox => "sweep-prbox",
            Command::Leakage => "leakage",
            Command::Strategies => "strategies",
            Command::Hardware => "hardware",
            Command::Gradcheck { .. } => "gradcheck",
        }
    }
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl fmt::Display) -> Self {
        Self { code, message: message.to_string() }
    }

    fn usage(message: impl fmt::Display) -> Self {
        Self::new(EXIT_USAGE, message)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::usage(e)
    }
}

fn net_code(e: &NetError) -> i32 {
    match e {
        NetError::Parse { .. } | NetError::Dimension { .. } | NetError::UnknownActivation(_) => EXIT_DATA,
        NetError::NonFinite { .. } => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

impl From<NetError> for Failure {
    fn from(e: NetError) -> Self {
        Self::new(net_code(&e), e)
    }
}

impl From<GanError> for Failure {
    fn from(e: GanError) -> Self {
        Self::new(gan_code(&e), e)
    }
}

fn gan_code(e: &GanError) -> i32 {
    match e {
        GanError::NonFinite { .. } | GanError::Rejection(_) => EXIT_NUMERIC,
        GanError::Architecture(_) => EXIT_DATA,
        GanError::Net(n) => net_code(n),
        _ => EXIT_USAGE,
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        let code = match &e {
            ExperimentError::Data { .. } | ExperimentError::Csv(_) => EXIT_DATA,
            ExperimentError::Gan(g) => gan_code(g),
            ExperimentError::Detector(DetectorError::NonFinite(_)) => EXIT_NUMERIC,
            ExperimentError::Source(SourceError::Generator(_)) => EXIT_DATA,
            _ => EXIT_USAGE,
        };
        Self::new(code, e)
    }
}

impl From<SourceError> for Failure {
    fn from(e: SourceError) -> Self {
        Self::usage(e)
    }
}

/// Files written by one command, removed again if the command fails.
struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn open(dir: &Path) -> Result<Self, Failure> {
        let created_dir = !dir.exists();
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::usage(format!("cannot create output directory {}: {e}", dir.display())))?;
        let probe = dir.join(".bellforge-write-test");
        std::fs::write(&probe, b"")
            .and_then(|_| std::fs::remove_file(&probe))
            .map_err(|e| Failure::usage(format!("output directory {} is not writable: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), created_dir, written: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, Failure> {
        let p = self.path(name);
        std::fs::write(&p, contents).map_err(|e| Failure::usage(format!("cannot write {}: {e}", p.display())))?;
        Ok(p)
    }

    fn discard(self) {
        for p in &self.written {
            let _ = std::fs::remove_file(p);
        }
        if self.created_dir {
            // Only succeeds if nothing else landed there.
            let _ = std::fs::remove_dir(&self.dir);
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a Config,
    artifacts: Vec<String>,
    warnings: &'a [String],
    duration_seconds: f64,
}

struct Context {
    cfg: Config,
    plot: bool,
    model: Option<PathBuf>,
    warnings: Vec<String>,
}

impl Context {
    fn warn(&mut self, message: String) {
        eprintln!("warning: {message}");
        self.warnings.push(message);
    }

    fn generator(&self, command: &str) -> Result<Mlp, Failure> {
        let path = self.model.as_ref().ok_or_else(|| Failure::usage(format!("{command} needs --model PATH")))?;
        if !path.is_file() {
            return Err(Failure::usage(format!("model file {} not found", path.display())));
        }
        tinynet::load_mlp(path).map_err(|e| {
            let code = if matches!(e, NetError::Io(_)) { EXIT_USAGE } else { EXIT_DATA };
            Failure::new(code, format!("{}: {e}", path.display()))
        })
    }
}

/// Parse `args` (program name first), run the command, and return the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn execute(cli: Cli) -> Result<i32, Failure> {
    let started = Instant::now();
    let pool = match cli.jobs {
        Some(0) => return Err(Failure::usage("--jobs must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    }
    .map_err(|e| Failure::usage(format!("cannot start worker threads: {e}")))?;

    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.data {
        cfg.hardware.data = Some(d.clone());
    }
    cfg.validate()?;

    if let Command::Gradcheck { corrupt_backward } = cli.command {
        return pool.install(|| gradcheck(cfg.seed, corrupt_backward));
    }

    let mut ctx = Context { cfg, plot: cli.plot, model: cli.model, warnings: Vec::new() };
    let mut out = Outputs::open(&cli.out)?;
    let result = pool.install(|| match cli.command {
        Command::Train => train(&mut ctx, &mut out),
        Command::SweepAlpha => sweep_alpha(&mut ctx, &mut out),
        Command::SweepPrbox => sweep_prbox(&ctx, &mut out),
        Command::Leakage => leakage(&ctx, &mut out),
        Command::Strategies => strategies(&ctx, &mut out),
        Command::Hardware => hardware(&ctx, &mut out),
        Command::Gradcheck { .. } => unreachable!("handled above"),
    });
    let manifest = result.and_then(|()| {
        let artifacts = out.written.iter().map(|p| p.display().to_string()).collect();
        let m = Manifest {
            command: cli.command.name(),
            version: env!("CARGO_PKG_VERSION"),
            seed: ctx.cfg.seed,
            config: &ctx.cfg,
            artifacts,
            warnings: &ctx.warnings,
            duration_seconds: started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        out.write("manifest.json", text + "\n")
    });
    match manifest {
        Ok(p) => {
            println!("wrote {}", p.display());
            Ok(EXIT_OK)
        }
        Err(f) => {
            out.discard();
            Err(f)
        }
    }
}

fn gradcheck(seed: u64, corrupt: bool) -> Result<i32, Failure> {
    let report = if corrupt {
        tinynet::gradcheck_suite_with(seed, GRADCHECK_RANDOM_NETS, |n, c, g| {
            let mut grads = n.backward(c, g)?.0;
            grads.scale(1.01);
            Ok(grads)
        })?
    } else {
        tinynet::gradcheck_suite(seed, GRADCHECK_RANDOM_NETS)?
    };
    let (name, worst) = report.cases.iter().fold(("", 0.0), |acc, (n, e)| if *e > acc.1 { (n, *e) } else { acc });
    println!("checked {} nets; worst relative error {worst:.6e} ({name})", report.cases.len());
    if worst < GRADCHECK_TOLERANCE {
        Ok(EXIT_OK)
    } else {
        eprintln!("error: gradient check failed: {worst:.6e} >= {GRADCHECK_TOLERANCE:e}");
        Ok(EXIT_CHECK)
    }
}

fn chart(out: &mut Outputs, name: &str, title: &str, x: &str, y: &str, points: &[(f64, f64)]) -> Result<(), Failure> {
    out.write(name, svg::line_chart(title, x, y, points))?;
    Ok(())
}

fn save_rows(out: &mut Outputs, name: &str, rows: &[SweepRow]) -> Result<(), Failure> {
    let p = out.path(name);
    experiments::save_sweep_csv(rows, &p)?;
    Ok(())
}

fn sweep_points(rows: &[SweepRow], metric: impl Fn(&SweepRow) -> f64) -> Vec<(f64, f64)> {
    rows.iter().filter_map(|r| r.var.parse::<f64>().ok().map(|x| (x, metric(r)))).collect()
}

fn train(ctx: &mut Context, out: &mut Outputs) -> Result<(), Failure> {
    let gan = ctx.cfg.gan.clone();
    if gan.epochs == 0 {
        ctx.warn("epochs = 0: the generator is left untrained and the trace is empty".into());
    }
    let sampler = QuantumEstimateSampler::new(&QuantumSourceConfig::new(gan.visibility)?, gan.shots)?;
    let trained = evegan::train_eve(&gan, &sampler, &mut seed::stream(ctx.cfg.seed, "train", 0))?;
    for name in ["generator.mlp", "gan_config.toml", "trace.csv"] {
        out.path(name);
    }
    evegan::save_training(&out.dir, &gan, &trained)?;

    let eval = evegan::evaluate(
        &trained.generator,
        &trained.discriminator,
        &sampler,
        gan.eval_samples,
        gan.kl_bins,
        gan.kl_epsilon,
        &mut seed::stream(ctx.cfg.seed, "train-eval", 0),
    )?;
    let summary = format!(
        "accuracy,mean_chsh,kl,warmup_accuracy\n{},{},{},{}\n",
        sig(eval.accuracy, 6),
        sig(eval.mean_chsh, 6),
        sig(eval.kl, 6),
        sig(trained.warmup_accuracy, 6)
    );
    out.write("evaluation.csv", summary)?;
    out.write("training_reference.csv", BUNDLED_TRAINING_REFERENCE)?;
    println!(
        "held-out accuracy {} mean CHSH {} KL {}",
        sig(eval.accuracy, 4),
        sig(eval.mean_chsh, 4),
        sig(eval.kl, 3)
    );
    if ctx.plot {
        let pts: Vec<(f64, f64)> = trained.trace.records.iter().map(|r| (r.epoch as f64, r.disc_acc)).collect();
        chart(out, "trace.svg", "Discriminator accuracy during training", "epoch", "accuracy", &pts)?;
    }
    Ok(())
}

fn sweep_alpha(ctx: &mut Context, out: &mut Outputs) -> Result<(), Failure> {
    let gen = ctx.generator("sweep-alpha")?;
    let sweep = experiments::alpha_sweep(&ctx.cfg.alpha(), &gen, ctx.cfg.alpha_sweep.eve_pool)?;
    for w in &sweep.warnings {
        ctx.warn(w.clone());
    }
    save_rows(out, "alpha_sweep.csv", &sweep.rows)?;
    out.write("alpha_reference.csv", BUNDLED_ALPHA_REFERENCE)?;
    if ctx.plot {
        chart(out, "alpha_sweep.svg", "AUC against quantum fraction", "alpha", "AUC", &sweep_points(&sweep.rows, |r| r.auc))?;
    }
    Ok(())
}

fn sweep_prbox(ctx: &Context, out: &mut Outputs) -> Result<(), Failure> {
    let rows = experiments::prbox_sweep(&ctx.cfg.prbox(), &ctx.cfg.prbox_sweep.lhv_endpoint())?;
    save_rows(out, "prbox_sweep.csv", &rows)?;
    out.write("prbox_reference.csv", BUNDLED_PRBOX_REFERENCE)?;
    if ctx.plot {
        let pts = sweep_points(&rows, |r| r.detection_probability);
        chart(out, "prbox_sweep.svg", "Detection probability against CHSH value", "S", "detection probability", &pts)?;
    }
    Ok(())
}

fn leakage(ctx: &Context, out: &mut Outputs) -> Result<(), Failure> {
    let r = experiments::leakage_experiment(&ctx.cfg.leakage())?;
    save_rows(out, "leakage.csv", &r.rows())?;
    println!(
        "same-source AUC {} cross-source AUC {} gap {}",
        sig(r.same_dist_auc, 4),
        sig(r.cross_dist_auc, 4),
        sig(r.gap, 4)
    );
    Ok(())
}

fn strategies(ctx: &Context, out: &mut Outputs) -> Result<(), Failure> {
    let gen = ctx.generator("strategies")?;
    let reference_text = match &ctx.cfg.strategies.reference {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| Failure::usage(format!("cannot read strategy reference {}: {e}", p.display())))?,
        None => BUNDLED_STRATEGY_REFERENCE.to_string(),
    };
    let reference = experiments::parse_strategy_reference(reference_text.as_bytes())?;
    let rows = experiments::strategy_catalog(&ctx.cfg.strategies(), &gen, ctx.cfg.strategies.noisy_visibility)?;
    for r in &rows {
        if let Err(e) = &r.result {
            eprintln!("warning: strategy {}: {e}", r.strategy);
        }
    }
    let p = out.path("strategies.csv");
    let f = std::fs::File::create(&p).map_err(|e| Failure::usage(format!("cannot write {}: {e}", p.display())))?;
    experiments::write_strategy_csv(&rows, &reference, std::io::BufWriter::new(f))?;
    out.write("strategy_reference.csv", reference_text)?;
    Ok(())
}

fn hardware(ctx: &Context, out: &mut Outputs) -> Result<(), Failure> {
    let gen = ctx.generator("hardware")?;
    let data = ctx.cfg.hardware.data.as_ref().ok_or_else(|| Failure::usage("hardware needs --data PATH"))?;
    if !data.is_file() {
        return Err(Failure::usage(format!("hardware data {} not found", data.display())));
    }
    let mut rng = seed::stream(ctx.cfg.seed, "hardware-eve", 0);
    let cmp = experiments::hardware_compare(data, &gen, ctx.cfg.hardware.n_samples, &mut rng)
        .map_err(|e| match e {
            ExperimentError::Data { line, message } => {
                Failure::new(EXIT_DATA, format!("{}: line {line}: {message}", data.display()))
            }
            other => other.into(),
        })?;
    let p = out.path("hardware.csv");
    let f = std::fs::File::create(&p).map_err(|e| Failure::usage(format!("cannot write {}: {e}", p.display())))?;
    cmp.write_csv(std::io::BufWriter::new(f))?;
    println!(
        "hardware CHSH {} Eve CHSH {} (difference {})",
        sig(cmp.hardware.chsh(), 4),
        sig(cmp.eve.chsh(), 4),
        sig(cmp.eve_advantage(), 3)
    );
    Ok(())
}
