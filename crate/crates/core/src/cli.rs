//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::autograd::{primitive_suite, AdamConfig, GradCheckOptions};
use crate::classic::{Detector, PipelineParams};
use crate::config::RadarConfig;
use crate::dataset::{build_training_corpus, load_dataset, measurement_pool, save_dataset, CorpusSpec, LabeledExample, MeasurementOptions, Split};
use crate::error::{Error, Result};
use crate::pgm::{write_row, Gray};
use crate::sim::{generate_grid_dataset, GridOptions};
use crate::train::{evaluate, log_csv, train, EvalOptions, EvalReport, LrSchedule, Method, TrainConfig, TrainMode};
use crate::vae::{build_model, load_checkpoint, total_loss_grad_check, ArchConfig, LossWeights, Model};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Full,
}

#[derive(Debug, Parser)]
#[command(name = "cfel-radar", version, about = "FMCW radar detection and localization toolkit")]
pub struct Cli {
    /// Radar configuration file (`key = value` lines) applied over the profile.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Profile::Full)]
    pub profile: Profile,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset: the range-angle grid or a multi-target corpus.
    Simulate(SimulateArgs),
    /// Run the classical chain on a dataset split and score it.
    Classic(DataArgs),
    /// Pretrain the network on synthetic data.
    TrainSynth(TrainArgs),
    /// Fine-tune a pretrained network with the weight-divergence penalty.
    TrainDa(TrainArgs),
    /// Score a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Write label / classical image / network output triptychs as PGM.
    DumpImages(DumpArgs),
    /// Finite-difference check of all gradients on a small model.
    GradCheck,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Write the one-target-per-cell grid instead of a multi-target corpus.
    #[arg(long)]
    pub grid: bool,
    #[arg(long, default_value_t = 15.0)]
    pub snr_db: f64,
    /// One-target recordings the corpus is built from.
    #[arg(long, default_value_t = 3000)]
    pub pool: usize,
    #[arg(long, default_value_t = 3750)]
    pub train_per_count: usize,
    #[arg(long, default_value_t = 200)]
    pub test_per_count: usize,
    #[arg(long, default_value_t = 3)]
    pub label_patch: usize,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Pretrained checkpoint directory (required for `train-da`).
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 3e-3)]
    pub lr: f64,
    /// DA weight for `train-da`.
    #[arg(long, default_value_t = 1e-4)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub theta: f64,
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
    /// Keep the learning rate fixed instead of the default half-cosine decay.
    #[arg(long)]
    pub constant_lr: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    #[arg(long, default_value_t = 8)]
    pub zoom: usize,
}

/// Parses `argv` and runs the command; returns the process exit status.
/// Failures print one `error: <category>: <message>` line to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}: {e}", e.category());
            if matches!(e, Error::Usage(_)) {
                2
            } else {
                1
            }
        }
    }
}

fn profile_config(p: Profile) -> RadarConfig {
    match p {
        Profile::Desk => RadarConfig::desk(),
        Profile::Full => RadarConfig::default(),
    }
}

fn profile_arch(p: Profile, cfg: &RadarConfig) -> ArchConfig {
    match p {
        Profile::Desk => ArchConfig::desk_for(cfg),
        Profile::Full => ArchConfig::for_radar(cfg, 6, 16, 140),
    }
}

fn profile_epochs(p: Profile) -> usize {
    match p {
        Profile::Desk => 30,
        Profile::Full => 30,
    }
}

fn resolved_config(cli: &Cli) -> Result<RadarConfig> {
    let base = profile_config(cli.profile);
    match &cli.config {
        Some(path) => RadarConfig::load(path, base),
        None => Ok(base),
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn prepare_out(cli: &Cli, cfg: &RadarConfig, extra: serde_json::Value) -> Result<()> {
    fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    write(&cli.out.join("config.resolved"), cfg.to_kv_string())?;
    let run = serde_json::json!({
        "command": format!("{:?}", cli.command),
        "profile": cli.profile,
        "seed": cli.seed,
        "config": cli.config,
        "args": extra,
    });
    write(&cli.out.join("run.json"), serde_json::to_string_pretty(&run).expect("serializes"))
}

fn select(examples: &[LabeledExample], split: SplitArg) -> Vec<&LabeledExample> {
    let want = match split {
        SplitArg::Train => Some(Split::Train),
        SplitArg::Val => Some(Split::Val),
        SplitArg::Test => Some(Split::Test),
        SplitArg::All => None,
    };
    examples.iter().filter(|e| want.is_none_or(|s| e.split == s)).collect()
}

fn write_report(out: &Path, name: &str, r: &EvalReport) -> Result<()> {
    write(&out.join(format!("{name}.csv")), r.to_csv())?;
    write(&out.join(format!("{name}.txt")), r.summary())?;
    print!("{}", r.summary());
    Ok(())
}

fn execute(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::Usage("--workers must be positive".into()));
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let workers = cli.workers.unwrap_or_else(rayon::current_num_threads);
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a),
        Command::Classic(a) => {
            let (manifest, examples) = load_dataset(&a.data)?;
            let cfg = manifest.config;
            prepare_out(cli, &cfg, serde_json::json!({ "data": a.data, "split": format!("{:?}", a.split) }))?;
            let r = evaluate(&Method::Classic(PipelineParams::for_config(&cfg)), &select(&examples, a.split), &cfg, &EvalOptions::default())?;
            write_report(&cli.out, "classic", &r)
        }
        Command::TrainSynth(a) => train_cmd(cli, a, TrainMode::Synthetic, workers),
        Command::TrainDa(a) => {
            if a.reference.is_none() {
                return Err(Error::Usage("train-da requires --reference <checkpoint dir>".into()));
            }
            train_cmd(cli, a, TrainMode::DomainAdapt, workers)
        }
        Command::Eval(a) => {
            let (manifest, examples) = load_dataset(&a.data)?;
            let (model, _) = load_checkpoint(&a.checkpoint)?;
            let cfg = manifest.config;
            prepare_out(cli, &cfg, serde_json::json!({ "data": a.data, "checkpoint": a.checkpoint }))?;
            let r = evaluate(&Method::Vae(&model), &select(&examples, a.split), &cfg, &EvalOptions::default())?;
            write_report(&cli.out, "eval", &r)
        }
        Command::DumpImages(a) => dump_images(cli, a),
        Command::GradCheck => grad_check_cmd(cli),
    }
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let cfg = resolved_config(cli)?;
    cfg.validate()?;
    if a.grid {
        let opts = GridOptions {
            snr_db: a.snr_db,
            label_patch: a.label_patch,
            seed: cli.seed,
            ..GridOptions::default()
        };
        prepare_out(cli, &cfg, serde_json::to_value(&opts).unwrap_or_default())?;
        let m = generate_grid_dataset(&cfg, &opts, &cli.out.join("dataset"))?;
        println!("wrote {} grid examples", m.example_count);
        return Ok(());
    }
    let mopts = MeasurementOptions {
        snr_db: a.snr_db,
        label_patch: a.label_patch,
        seed: cli.seed,
        ..MeasurementOptions::default()
    };
    let spec = CorpusSpec {
        train_per_count: vec![a.train_per_count; 4],
        test_per_count: vec![a.test_per_count; 4],
        seed: cli.seed.wrapping_add(1),
        ..CorpusSpec::default()
    };
    prepare_out(cli, &cfg, serde_json::json!({ "measurement": mopts, "corpus": spec, "pool": a.pool }))?;
    let pool = measurement_pool(&cfg, a.pool, &mopts)?;
    let corpus = build_training_corpus(&cfg, &pool, &spec)?;
    let m = save_dataset(&cli.out.join("dataset"), &cfg, &corpus.examples, &corpus.meta)?;
    let (tr, va, te) = m.split_counts();
    println!("wrote {} examples (train {tr}, val {va}, test {te})", m.example_count);
    Ok(())
}

fn train_cmd(cli: &Cli, a: &TrainArgs, mode: TrainMode, workers: usize) -> Result<()> {
    let (manifest, examples) = load_dataset(&a.data)?;
    let cfg = manifest.config;
    let reference = match (&a.reference, mode) {
        (Some(p), TrainMode::DomainAdapt) => Some(load_checkpoint(p)?.0),
        _ => None,
    };
    let model = match &reference {
        Some(r) => r.clone(),
        None => build_model(&profile_arch(cli.profile, &cfg), cli.seed)?,
    };
    let tc = TrainConfig {
        epochs: a.epochs.unwrap_or_else(|| profile_epochs(cli.profile)),
        batch_size: a.batch_size,
        adam: AdamConfig {
            lr: a.lr,
            ..AdamConfig::default()
        },
        loss: LossWeights {
            beta: if mode == TrainMode::DomainAdapt { a.beta } else { 0.0 },
            theta: a.theta,
            ..LossWeights::default()
        },
        mode,
        seed: cli.seed,
        checkpoint_every: a.checkpoint_every,
        schedule: if a.constant_lr { LrSchedule::Constant } else { LrSchedule::Cosine },
        workers,
        eval: EvalOptions::default(),
    };
    prepare_out(cli, &cfg, serde_json::json!({ "data": a.data, "reference": a.reference, "train": tc, "arch": model.arch }))?;
    let train_set = select(&examples, SplitArg::Train);
    let mut val_set = select(&examples, SplitArg::Val);
    if val_set.is_empty() {
        log::warn!("dataset has no validation split; validating on the training split");
        val_set = train_set.clone();
    }
    let out = train(
        model,
        &train_set,
        &val_set,
        &cfg,
        &tc,
        reference.as_ref(),
        Some(&cli.out),
    )?;
    print!("{}", log_csv(&out.log));
    println!("best epoch {}", out.best_epoch);
    Ok(())
}

fn dump_images(cli: &Cli, a: &DumpArgs) -> Result<()> {
    let (manifest, examples) = load_dataset(&a.data)?;
    let cfg = manifest.config;
    let model: Option<Model> = match &a.checkpoint {
        Some(p) => Some(load_checkpoint(p)?.0),
        None => None,
    };
    prepare_out(cli, &cfg, serde_json::json!({ "data": a.data, "checkpoint": a.checkpoint, "count": a.count }))?;
    let params = PipelineParams::for_config(&cfg);
    let (nr, na) = (cfg.n_range_bins, cfg.n_angle_bins);
    for (i, ex) in select(&examples, a.split).into_iter().take(a.count).enumerate() {
        let label = Gray::new(nr, na, ex.label.iter().map(|&v| v as f64).collect())?;
        let rai = Detector::new(&cfg, &params)?.process(&ex.frame)?.rai;
        let rai = Gray::new(nr, na, rai.data.iter().map(|v| (v + 1e-12).log10()).collect())?;
        let net = match &model {
            Some(m) => m.predict(&[&ex.frame])?.remove(0),
            None => vec![0.0; nr * na],
        };
        let net = Gray::new(nr, na, net)?;
        write_row(&cli.out.join(format!("example-{i:04}.pgm")), &[label, rai, net], a.zoom)?;
    }
    Ok(())
}

fn grad_check_cmd(cli: &Cli) -> Result<()> {
    let cfg = resolved_config(cli)?;
    let arch = profile_arch(cli.profile, &cfg);
    let weights = LossWeights {
        beta: 0.5,
        ..LossWeights::default()
    };
    prepare_out(cli, &cfg, serde_json::json!({ "arch": arch, "loss": weights }))?;
    let opts = GradCheckOptions::default();
    let mut reports = primitive_suite(&opts)?;
    let sampled = GradCheckOptions {
        max_per_param: Some(6),
        ..opts
    };
    reports.push(("total_loss", total_loss_grad_check(&arch, &cfg, &weights, cli.seed, &sampled)?));
    let mut text = String::from("check,parameter,checked,max_rel_error,passed\n");
    let mut failed = Vec::new();
    for (name, r) in &reports {
        for e in &r.entries {
            text.push_str(&format!("{name},{},{},{:.3e},{}\n", e.id, e.checked, e.max_rel_error, e.passed));
        }
        let worst = r.worst().map_or(0.0, |e| e.max_rel_error);
        println!("{name}: {} (worst {worst:.3e})", if r.passed() { "ok" } else { "FAILED" });
        if !r.passed() {
            failed.push(*name);
        }
    }
    let path = cli.out.join("grad_check.csv");
    write(&path, &text)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Integrity {
            path,
            detail: format!("gradient mismatch in {}", failed.join(", ")),
        })
    }
}
