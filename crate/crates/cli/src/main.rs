use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use scenesum::dataset::{generate_synthetic, load_dataset, save_dataset_with_config, FeatureMode};
use scenesum::pipeline::{aggregate, evaluate, run_cell, summarize, sweep_csv, Method, SweepPlan};
use scenesum::svg::{LineChart, Series};
use scenesum::SummaryResult;

mod config;

use config::{set, FileConfig};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    MissingCapability(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) => 2,
            CliError::MissingCapability(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::MissingCapability(m) => f.write_str(m),
        }
    }
}

impl From<scenesum::Error> for CliError {
    fn from(e: scenesum::Error) -> Self {
        use scenesum::Error as E;
        let msg = e.to_string();
        match e {
            E::MissingPoses => {
                CliError::MissingCapability(format!("{msg}; this step needs a dataset with a pose table"))
            }
            E::MissingGtKeyframes => CliError::MissingCapability(msg),
            E::InvalidConfig(_)
            | E::InvalidClusterCount { .. }
            | E::InfeasibleCapacity { .. }
            | E::TooFewClusters(_) => CliError::Usage(msg),
            _ => CliError::Io(msg),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "scenesum",
    version,
    about = "Spatially diverse keyframe summaries of walkthrough sequences"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic random-walk dataset.
    Generate(GenerateArgs),
    /// Pick k keyframes from a dataset.
    Summarize(SummarizeArgs),
    /// Score a summary with the divergence curve and its AUC.
    Evaluate(EvaluateArgs),
    /// Summarize and evaluate every (method, k, seed) combination.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    PoseCorrelated,
    AppearanceOnly,
}

impl From<ModeArg> for FeatureMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::PoseCorrelated => FeatureMode::PoseCorrelated,
            ModeArg::AppearanceOnly => FeatureMode::AppearanceOnly,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; receives manifest.json and its data files.
    #[arg(long, default_value = "scene")]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Flags shared by summarize and sweep.
#[derive(Args)]
struct TrainFlags {
    /// Frames sampled per cluster per step.
    #[arg(long)]
    n_sample: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    latent: Option<usize>,
    /// Plain k-means clusters instead of capacity-balanced ones.
    #[arg(long)]
    unbalanced: bool,
}

#[derive(Args)]
struct SummarizeArgs {
    manifest: PathBuf,
    #[arg(long)]
    method: Method,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    train: TrainFlags,
    /// Summary JSON path; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvalFlags {
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Also write an SVG chart.
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    manifest: PathBuf,
    summary: PathBuf,
    #[command(flatten)]
    eval: EvalFlags,
    /// Directory for report.json, curve.csv and curve.svg.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    manifest: PathBuf,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[command(flatten)]
    train: TrainFlags,
    #[command(flatten)]
    eval: EvalFlags,
    /// Directory for sweep.csv, sweep.json and sweep.svg.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn apply_train_flags(cfg: &mut FileConfig, flags: &TrainFlags) {
    let t = &mut cfg.summarize.train;
    set(&mut t.sample_size, flags.n_sample);
    set(&mut t.epochs, flags.epochs);
    set(&mut t.learning_rate, flags.lr);
    set(&mut t.latent_dim, flags.latent);
    if flags.unbalanced {
        cfg.summarize.balanced = false;
    }
}

fn apply_eval_flags(cfg: &mut FileConfig, flags: &EvalFlags) -> CliResult<()> {
    set(&mut cfg.evaluate.r_max, flags.r_max);
    set(&mut cfg.evaluate.steps, flags.steps);
    if !(cfg.evaluate.r_max > 0.0 && cfg.evaluate.r_max.is_finite()) {
        return Err(CliError::Usage("--r-max must be positive".into()));
    }
    if cfg.evaluate.steps < 2 {
        return Err(CliError::Usage("--steps must be at least 2".into()));
    }
    Ok(())
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json serializes") + "\n"
}

fn cmd_generate(args: GenerateArgs) -> CliResult<()> {
    let mut cfg = FileConfig::load(args.config.as_deref())?.generate;
    set(&mut cfg.n_frames, args.frames);
    set(&mut cfg.dim, args.dim);
    set(&mut cfg.feature_mode, args.mode.map(Into::into));
    set(&mut cfg.seed, args.seed);
    let ds = generate_synthetic(&cfg)?;
    let manifest = args.out.join("manifest.json");
    let resolved = serde_json::to_value(&cfg).expect("config serializes");
    save_dataset_with_config(&ds, &manifest, Some(resolved))?;
    println!("{}", manifest.display());
    Ok(())
}

fn cmd_summarize(args: SummarizeArgs) -> CliResult<()> {
    let mut cfg = FileConfig::load(args.config.as_deref())?;
    set(&mut cfg.summarize.k, args.k);
    set(&mut cfg.summarize.seed, args.seed);
    apply_train_flags(&mut cfg, &args.train);
    let ds = load_dataset(&args.manifest)?;
    let summary = summarize(&ds, args.method, &cfg.summarize)?;
    match args.out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                create_dir(dir)?;
            }
            summary.save(&path)?;
            println!("{}", path.display());
        }
        None => print!("{}", summary.to_json()),
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> CliResult<()> {
    let mut cfg = FileConfig::load(args.config.as_deref())?;
    apply_eval_flags(&mut cfg, &args.eval)?;
    let ds = load_dataset(&args.manifest)?;
    let summary = SummaryResult::load(&args.summary)?;
    let e = &cfg.evaluate;
    let eval = evaluate(&ds, &summary, e.r_max, e.steps, e.integration)?;

    create_dir(&args.out)?;
    let report = json!({
        "method": eval.method,
        "k": eval.k,
        "r_max": eval.r_max,
        "steps": eval.steps,
        "integration": e.integration,
        "auc": eval.auc,
        "config": {
            "summary": summary.config,
            "evaluate": e,
        },
    });
    write(&args.out.join("report.json"), pretty(&report))?;
    write(&args.out.join("curve.csv"), eval.curve.to_csv())?;
    if args.eval.svg {
        let chart = LineChart {
            title: format!("Divergence vs distance threshold ({}, k={})", eval.method, eval.k),
            x_label: "distance threshold r [m]".into(),
            y_label: "divergence D".into(),
            series: vec![Series {
                label: eval.method.clone(),
                points: eval
                    .curve
                    .thresholds
                    .iter()
                    .copied()
                    .zip(eval.curve.values.iter().copied())
                    .collect(),
            }],
            y_range: None,
        };
        write(&args.out.join("curve.svg"), chart.render())?;
    }
    println!("auc {}", eval.auc);
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> CliResult<()> {
    let mut cfg = FileConfig::load(args.config.as_deref())?;
    set(&mut cfg.sweep.methods, args.methods);
    set(&mut cfg.sweep.ks, args.ks);
    set(&mut cfg.sweep.seeds, args.seeds);
    apply_train_flags(&mut cfg, &args.train);
    apply_eval_flags(&mut cfg, &args.eval)?;
    let s = &cfg.sweep;
    if s.methods.is_empty() || s.ks.is_empty() || s.seeds.is_empty() {
        return Err(CliError::Usage(
            "--methods, --ks and --seeds need at least one value".into(),
        ));
    }
    let ds = load_dataset(&args.manifest)?;
    let plan = SweepPlan {
        methods: s.methods.clone(),
        ks: s.ks.clone(),
        seeds: s.seeds.clone(),
        r_max: cfg.evaluate.r_max,
        steps: cfg.evaluate.steps,
        integration: cfg.evaluate.integration,
    };
    let cells_todo = plan.cells();
    log::info!("sweep: {} cells", cells_todo.len());
    // Indexed parallel collect keeps plan order.
    let cells = cells_todo
        .into_par_iter()
        .map(|c| run_cell(&ds, &plan, &cfg.summarize, c))
        .collect::<scenesum::Result<Vec<_>>>()?;
    let aggregates = aggregate(&cells);

    create_dir(&args.out)?;
    write(&args.out.join("sweep.csv"), sweep_csv(&cells, &aggregates))?;
    let report = json!({
        "config": cfg,
        "cells": cells,
        "aggregates": aggregates,
    });
    write(&args.out.join("sweep.json"), pretty(&report))?;
    if args.eval.svg {
        let series = plan
            .methods
            .iter()
            .map(|&m| Series {
                label: m.name().to_string(),
                points: aggregates
                    .iter()
                    .filter(|a| a.method == m)
                    .map(|a| (a.k as f64, a.mean))
                    .collect(),
            })
            .collect();
        let chart = LineChart {
            title: format!("Mean AUC by summary size (r_max = {})", plan.r_max),
            x_label: "k".into(),
            y_label: "AUC".into(),
            series,
            y_range: None,
        };
        write(&args.out.join("sweep.svg"), chart.render())?;
    }
    for a in &aggregates {
        println!(
            "{:<20} k={:<4} auc {:.4} ± {:.4}",
            a.method.name(),
            a.k,
            a.mean,
            a.sd
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Summarize(a) => cmd_summarize(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
