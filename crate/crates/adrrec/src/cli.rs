//! Command-line workflows.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use adrrec_core::corpus::{dataset_stats, split_corpus, SplitCorpus};
use adrrec_core::evaluation::{evaluate, multiseed_eval, ood_mask_eval, MetricsReport, Protocol, Target};
use adrrec_core::gradcheck::builtin_gradcheck;
use adrrec_core::training::fit;
use adrrec_core::TrainConfig;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::checkpoint;
use crate::config_io::{effective_config, load_config};
use crate::data;
use crate::error::{AppError, AppResult};
use crate::parallel::{Parallel, WallClock};

pub const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "adrrec", version, about = "Time-aware sequential recommender: prepare data, train, evaluate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON configuration; unknown keys are rejected.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Kernel mode string, e.g. `p-b-s-l-r-o`.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Raw interaction log or corpus cache.
    #[arg(long)]
    pub dataset: Option<String>,
    /// `movielens-dat`, `amazon-csv` or `jsonl` (raw logs only).
    #[arg(long)]
    pub format: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub negatives: Option<usize>,
    /// Keep only the first N users.
    #[arg(long)]
    pub users: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and filter a raw log, print statistics, write a corpus cache.
    Prepare(Common),
    /// Fit a model and write its best-validation checkpoint and report.
    Train {
        #[command(flatten)]
        common: Common,
        /// Also write a per-epoch CSV for plotting.
        #[arg(long)]
        curve_csv: bool,
    },
    /// Leave-one-out test metrics for a checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Test metrics with a contiguous span of each input masked out.
    OodEval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.3")]
        mask_fraction: Vec<f64>,
    },
    /// Fit and test once per seed; report mean and standard deviation.
    Multiseed {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
    },
    /// Fit and test once per mode string.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        modes: Vec<String>,
    },
    /// Finite-difference check of the built-in tiny model.
    Gradcheck {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_file(path: &Path, bytes: &[u8]) -> AppResult<()> {
    fs::write(path, bytes).map_err(|e| AppError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    write_file(path, s.as_bytes())
}

fn out_dir(common: &Common) -> AppResult<PathBuf> {
    let dir = common.out.clone().ok_or_else(|| AppError::Config("--out is required".into()))?;
    fs::create_dir_all(&dir).map_err(|e| AppError::io(&dir, e))?;
    Ok(dir)
}

/// Base config (file or defaults) with command-line overrides applied.
pub fn resolve_config(common: &Common, base: Option<TrainConfig>) -> AppResult<TrainConfig> {
    let mut cfg = match (&common.config, base) {
        (Some(p), _) => load_config(p)?,
        (None, Some(b)) => b,
        (None, None) => TrainConfig::default(),
    };
    if let Some(m) = &common.mode {
        cfg.mode = m.clone();
    }
    if let Some(e) = common.epochs {
        cfg.epochs = e;
    }
    if let Some(n) = common.negatives {
        cfg.eval.negatives = n;
    }
    if let Some(d) = &common.dataset {
        cfg.data.path = Some(d.clone());
    }
    if let Some(f) = &common.format {
        cfg.data.format = Some(f.clone());
    }
    if let Some(u) = common.users {
        cfg.data.max_users = Some(u);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_split(cfg: &TrainConfig) -> AppResult<SplitCorpus> {
    let loaded = data::load(&cfg.data)?;
    if loaded.malformed > 0 {
        eprintln!("skipped {} malformed records", loaded.malformed);
    }
    let split = split_corpus(&loaded.sequences);
    if split.users.is_empty() {
        return Err(AppError::Data("no user has three or more interactions".into()));
    }
    Ok(split)
}

pub fn metrics_name(protocol: Protocol, seed: u64) -> String {
    match protocol {
        Protocol::Standard => format!("metrics_standard_seed{seed}.json"),
        Protocol::Ood { fraction } => format!("metrics_ood{}_seed{seed}.json", (fraction * 100.0).round() as u64),
    }
}

fn prepare(common: &Common) -> AppResult<()> {
    let cfg = resolve_config(common, None)?;
    let dir = out_dir(common)?;
    let loaded = data::load(&cfg.data)?;
    let stats = dataset_stats(&loaded.sequences);
    crate::cache::save(&dir.join("corpus.bin"), &loaded.sequences)?;
    write_json(&dir.join("stats.json"), &stats)?;
    write_file(&dir.join("config.json"), effective_config(&cfg).as_bytes())?;
    println!("{}", serde_json::to_string(&stats).expect("stats serialize"));
    eprintln!("malformed records: {}", loaded.malformed);
    Ok(())
}

fn train(common: &Common, curve_csv: bool, exec: &Parallel) -> AppResult<()> {
    let mut cfg = resolve_config(common, None)?;
    if let Some(s) = common.seed {
        cfg.seeds = cfg.seeds.with_training_seed(s);
    }
    let dir = out_dir(common)?;
    write_file(&dir.join("config.json"), effective_config(&cfg).as_bytes())?;
    let corpus = load_split(&cfg)?;
    let fitted = fit(&cfg, &corpus, exec, &WallClock::start())?;
    checkpoint::save(&dir.join("checkpoint.bin"), &cfg, &fitted.model, &fitted.optimizer)?;
    let mut lines = Vec::new();
    for e in &fitted.report.epochs {
        writeln!(lines, "{}", serde_json::to_string(e).expect("record serializes")).expect("vec write");
    }
    write_file(&dir.join("train_report.jsonl"), &lines)?;
    write_json(&dir.join("train_summary.json"), &serde_json::json!({
        "best_epoch": fitted.report.best_epoch,
        "checkpoint_id": fitted.report.checkpoint_id,
        "epochs": fitted.report.epochs.len(),
    }))?;
    if curve_csv {
        let mut w = csv::Writer::from_path(dir.join("curve.csv")).map_err(|e| AppError::Data(e.to_string()))?;
        w.write_record(["epoch", "task_loss", "lnsr", "val_ndcg10"]).map_err(|e| AppError::Data(e.to_string()))?;
        for e in &fitted.report.epochs {
            w.write_record([e.epoch.to_string(), e.task_loss.to_string(), e.lnsr.to_string(), e.val_ndcg10.to_string()]).map_err(|e| AppError::Data(e.to_string()))?;
        }
        w.flush().map_err(|e| AppError::io(dir.join("curve.csv"), e))?;
    }
    println!("checkpoint {} (best epoch {:?})", fitted.report.checkpoint_id, fitted.report.best_epoch);
    Ok(())
}

/// Evaluation settings come from `--config` when given, otherwise from the checkpoint.
fn eval_setup(common: &Common, ck: &Path) -> AppResult<(TrainConfig, checkpoint::Checkpoint)> {
    let loaded = checkpoint::load(ck)?;
    let mut cfg = resolve_config(common, Some(loaded.config.clone()))?;
    if let Some(s) = common.seed {
        cfg.seeds.negatives = s;
    }
    let m = &loaded.config;
    if cfg.mode != m.mode || cfg.d_model != m.d_model || cfg.layers != m.layers || cfg.max_len != m.max_len {
        return Err(AppError::Config(format!("config mode/shape differs from checkpoint (mode {} vs {})", cfg.mode, m.mode)));
    }
    Ok((cfg, loaded))
}

fn eval(common: &Common, ck: &Path, exec: &Parallel) -> AppResult<()> {
    let (cfg, loaded) = eval_setup(common, ck)?;
    let dir = out_dir(common)?;
    write_file(&dir.join("config.json"), effective_config(&cfg).as_bytes())?;
    let corpus = load_split(&cfg)?;
    let seed = cfg.seeds.negatives;
    let report = evaluate(&loaded.model, &corpus, &cfg.eval, seed, Target::Test, Protocol::Standard, exec)?;
    write_json(&dir.join(metrics_name(Protocol::Standard, seed)), &report)?;
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    Ok(())
}

#[derive(Serialize)]
struct OodSummary {
    standard: MetricsReport,
    ood: BTreeMap<String, MetricsReport>,
}

fn ood_eval(common: &Common, ck: &Path, fractions: &[f64], exec: &Parallel) -> AppResult<()> {
    for &f in fractions {
        if !(f > 0.0 && f < 1.0) {
            return Err(AppError::Config(format!("--mask-fraction {f} outside (0, 1)")));
        }
    }
    let (cfg, loaded) = eval_setup(common, ck)?;
    let dir = out_dir(common)?;
    write_file(&dir.join("config.json"), effective_config(&cfg).as_bytes())?;
    let corpus = load_split(&cfg)?;
    let seed = cfg.seeds.negatives;
    let standard = evaluate(&loaded.model, &corpus, &cfg.eval, seed, Target::Test, Protocol::Standard, exec)?;
    write_json(&dir.join(metrics_name(Protocol::Standard, seed)), &standard)?;
    let mut ood = BTreeMap::new();
    for &f in fractions {
        let r = ood_mask_eval(&loaded.model, &corpus, &cfg.eval, f, seed, exec)?;
        write_json(&dir.join(metrics_name(r.protocol, seed)), &r)?;
        ood.insert(format!("{f}"), r);
    }
    let summary = OodSummary { standard, ood };
    write_json(&dir.join("metrics_ood_summary.json"), &summary)?;
    println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    Ok(())
}

fn multiseed(common: &Common, seeds: &[u64], exec: &Parallel) -> AppResult<()> {
    if seeds.len() < 2 {
        return Err(AppError::Config("--seeds needs at least two seeds".into()));
    }
    let cfg = resolve_config(common, None)?;
    let dir = out_dir(common)?;
    write_file(&dir.join("config.json"), effective_config(&cfg).as_bytes())?;
    let corpus = load_split(&cfg)?;
    let report = multiseed_eval(&cfg, &corpus, seeds, exec, &WallClock::start())?;
    for (r, s) in report.per_seed.iter().zip(seeds) {
        write_json(&dir.join(metrics_name(Protocol::Standard, *s)), r)?;
    }
    write_json(&dir.join("metrics_multiseed.json"), &report.aggregate)?;
    println!("{}", serde_json::to_string(&report.aggregate).expect("report serializes"));
    Ok(())
}

fn ablate(common: &Common, modes: &[String], exec: &Parallel) -> AppResult<()> {
    let base = resolve_config(common, None)?;
    let mut cfgs = Vec::new();
    for m in modes {
        let mut c = base.clone();
        c.mode = m.clone();
        c.validate().map_err(|e| AppError::Config(format!("--modes {m}: {}", e.message())))?;
        cfgs.push(c);
    }
    let dir = out_dir(common)?;
    let corpus = load_split(&base)?;
    let mut all = BTreeMap::new();
    for c in &cfgs {
        let sub = dir.join(c.mode.replace('-', "_"));
        fs::create_dir_all(&sub).map_err(|e| AppError::io(&sub, e))?;
        write_file(&sub.join("config.json"), effective_config(c).as_bytes())?;
        let fitted = fit(c, &corpus, exec, &WallClock::start())?;
        let r = evaluate(&fitted.model, &corpus, &c.eval, c.seeds.negatives, Target::Test, Protocol::Standard, exec)?;
        write_json(&sub.join(metrics_name(Protocol::Standard, c.seeds.negatives)), &r)?;
        all.insert(c.mode.clone(), r);
    }
    write_json(&dir.join("metrics_ablate.json"), &all)?;
    println!("{}", serde_json::to_string(&all).expect("reports serialize"));
    Ok(())
}

fn gradcheck(out: Option<&Path>) -> AppResult<()> {
    let report = builtin_gradcheck()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
        write_json(&dir.join("gradcheck.json"), &report)?;
    }
    let verdict = if report.passed(GRADCHECK_TOL) { "PASS" } else { "FAIL" };
    println!("gradcheck {verdict}: worst relative error {:.3e} ({}) over {} scalars", report.worst, report.worst_tensor, report.n_scalars);
    if report.passed(GRADCHECK_TOL) {
        Ok(())
    } else {
        Err(adrrec_core::Error::Numerical(format!("gradient check failed: {:.3e} >= {GRADCHECK_TOL:e}", report.worst)).into())
    }
}

pub fn execute(cli: Cli) -> AppResult<()> {
    let exec = Parallel::from_env()?;
    match cli.command {
        Command::Prepare(c) => prepare(&c),
        Command::Train { common, curve_csv } => train(&common, curve_csv, &exec),
        Command::Eval { common, checkpoint } => eval(&common, &checkpoint, &exec),
        Command::OodEval { common, checkpoint, mask_fraction } => ood_eval(&common, &checkpoint, &mask_fraction, &exec),
        Command::Multiseed { common, seeds } => multiseed(&common, &seeds, &exec),
        Command::Ablate { common, modes } => ablate(&common, &modes, &exec),
        Command::Gradcheck { out } => gradcheck(out.as_deref()),
    }
}

/// Parses `argv` and runs one command; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
