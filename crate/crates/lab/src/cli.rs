//! `sgg-lab` subcommands. Exit codes: 0 success, 1 invalid input, 2 failure
//! while running.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sgg_fusion_core::fusion::FusionKind;
use sgg_fusion_core::metrics::{evaluate_corpus, Denominator, MetricId, MetricReport, PredictionSet};
use sgg_fusion_core::synthgen::{generate_dataset, DatasetSplits};
use sgg_fusion_core::trainer::{ExampleValidator, Trainer, Validator};

use crate::ablation::{self, CHECKPOINT_FILE, HISTORY_FILE};
use crate::checkpoint;
use crate::config::{self, LabConfig, TdeMode};
use crate::dataset;
use crate::error::{self, LabError, Result};
use crate::report::{self, AblationReport};

const IDS: &str = "\
Fusion ids:  sum, gate, dist-ref, mfb-ref, dist, mfb-gate (or `all`)
Metric ids:  R, ngR, mR, A, zR
TDE modes:   off, mean, zeros

The output directory defaults to $SGG_LAB_OUT, then ./sgg-lab-out.
Exit codes: 0 success, 1 invalid config or arguments, 2 runtime failure.";

#[derive(Debug, Parser)]
#[command(name = "sgg-lab", version, about = "Fusion and debiasing ablations for predicate classification on synthetic scenes", after_help = IDS)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset: three split files and a manifest.
    GenData(GenData),
    /// Train one fusion kind and write its checkpoint and history.
    Train(Train),
    /// Train and evaluate every configured fusion kind.
    #[command(after_help = IDS)]
    Ablate(Ablate),
    /// Score stored predictions or a checkpoint on a dataset split.
    #[command(after_help = IDS)]
    Evaluate(Evaluate),
    /// Flatten a report into one row per (fusion, seed, tde, metric, K).
    ExportPlot(ExportPlot),
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed of the generated data and of training.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenData {
    #[command(flatten)]
    pub common: Common,
    /// Share of predicates drawn from the object-pair prior.
    #[arg(long)]
    pub bias_mix: Option<f64>,
    #[arg(long)]
    pub scenes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DataSource {
    /// Dataset directory written by gen-data; generated from the config when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Train {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub source: DataSource,
    #[arg(long, default_value = "sum")]
    pub fusion: FusionKind,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Continue from a checkpoint instead of a fresh initialization.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Ablate {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub source: DataSource,
    /// Comma-separated fusion ids, or `all`.
    #[arg(long, value_parser = parse_fusions)]
    pub fusion: Option<FusionList>,
    /// Comma-separated K values.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    /// Comma-separated TDE modes.
    #[arg(long, value_delimiter = ',')]
    pub tde: Option<Vec<TdeMode>>,
}

#[derive(Debug, Args)]
pub struct Evaluate {
    #[command(flatten)]
    pub common: Common,
    /// Dataset directory holding the ground truth.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Predictions file, one prediction set per scene.
    #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
    pub predictions: Option<PathBuf>,
    /// Checkpoint to score; its best parameters are used when it has them.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Scoring of checkpoint predictions.
    #[arg(long, default_value = "off")]
    pub tde: TdeMode,
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct ExportPlot {
    /// Report written by ablate.
    pub report: PathBuf,
    #[arg(long, default_value = "tabular", value_parser = ["tabular"])]
    pub format: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct FusionList(pub Vec<FusionKind>);

fn parse_fusions(s: &str) -> std::result::Result<FusionList, String> {
    if s == "all" {
        return Ok(FusionList(FusionKind::ALL.to_vec()));
    }
    s.split(',')
        .map(|id| id.trim().parse::<FusionKind>().map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()
        .map(FusionList)
}

pub const PREDICTIONS_FORMAT: &str = "sgg-predictions";
pub const EVALUATION_FILE: &str = "evaluation.json";
pub const PLOT_FILE: &str = "plot.tsv";
pub const TRAIN_SUMMARY_FILE: &str = "train.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionsFile {
    pub format: String,
    pub version: u32,
    pub scenes: Vec<PredictionSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub metric: MetricId,
    pub k: usize,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub split: String,
    pub source: String,
    pub tde: Option<TdeMode>,
    pub denominator: Denominator,
    pub n_scenes: usize,
    pub zero_shot_count: usize,
    pub rows: Vec<EvaluationRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub fusion: FusionKind,
    pub seed: u64,
    pub config_hash: String,
    pub iterations: usize,
    pub best_iteration: usize,
    pub stopped_early: bool,
    pub best_validation_loss: Option<f64>,
}

fn resolve(common: &Common) -> Result<LabConfig> {
    let mut cfg = match &common.config {
        Some(path) => LabConfig::load(path)?,
        None => LabConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.data.seed = seed;
        cfg.train.seed = seed;
        cfg.ablation.seeds = vec![seed];
    }
    Ok(cfg)
}

/// Loads `--data`, replacing the data section with the manifest's, or
/// generates the dataset from the config.
fn splits(cfg: &mut LabConfig, source: &DataSource) -> Result<DatasetSplits> {
    match &source.data {
        Some(dir) => {
            let (manifest, splits) = dataset::load(dir)?;
            cfg.data = manifest.config;
            Ok(splits)
        }
        None => {
            cfg.data.validate()?;
            Ok(generate_dataset(&cfg.data)?)
        }
    }
}

fn gen_data(args: GenData, out: &mut dyn Write) -> Result<()> {
    let mut cfg = resolve(&args.common)?;
    if let Some(l) = args.bias_mix {
        cfg.data.bias_mix = l;
    }
    if let Some(n) = args.scenes {
        cfg.data.n_scenes = n;
    }
    cfg.data.validate()?;
    let dir = config::out_dir(args.common.out);
    let splits = generate_dataset(&cfg.data)?;
    let manifest = dataset::save(&dir, &cfg.data, &splits)?;
    for (name, c) in &manifest.counts {
        let _ = writeln!(out, "{name:<11}{:>7} scenes {:>8} relations", c.scenes, c.relations);
    }
    let _ = writeln!(out, "wrote {} (seed {})", dir.display(), manifest.seed);
    Ok(())
}

fn train(args: Train, out: &mut dyn Write) -> Result<()> {
    let mut cfg = resolve(&args.common)?;
    if let Some(n) = args.max_iter {
        cfg.train.max_iter = n;
    }
    let splits = splits(&mut cfg, &args.source)?;
    cfg.validate()?;
    let dir = config::out_dir(args.common.out);
    let data = ablation::examples(&splits.train);
    let mut trainer = match &args.resume {
        Some(path) => {
            let ckpt = checkpoint::load(path)?;
            if *ckpt.params.config() != cfg.fusion_config(args.fusion) {
                return Err(LabError::invalid("resume", "checkpoint does not match the fusion config"));
            }
            Trainer::from_checkpoint(ckpt, &data, cfg.train)?
        }
        None => Trainer::new(ablation::init_params(&cfg, args.fusion)?, &data, cfg.train)?,
    };
    let mut validator = ExampleValidator::new(ablation::examples(&splits.validation));
    let has_validation = splits.validation.iter().any(|s| !s.graph.relations.is_empty());
    let start = Instant::now();
    trainer.run(has_validation.then_some(&mut validator as &mut dyn Validator))?;
    let ckpt = trainer.checkpoint();
    checkpoint::save(&dir.join(CHECKPOINT_FILE), &ckpt)?;
    error::write(&dir.join(HISTORY_FILE), checkpoint::history_tsv(&ckpt.history).as_bytes())?;
    let outcome = trainer.finish();
    let summary = TrainSummary {
        fusion: args.fusion,
        seed: cfg.train.seed,
        config_hash: report::config_hash(&cfg),
        iterations: outcome.iterations,
        best_iteration: outcome.best_iteration,
        stopped_early: outcome.stopped_early,
        best_validation_loss: ckpt.early_stop.best_loss,
    };
    error::write(&dir.join(TRAIN_SUMMARY_FILE), &dataset::to_json(&summary))?;
    let last = outcome.history.last().expect("history starts at iteration 0");
    let _ = writeln!(
        out,
        "{}: {} iterations in {:.1}s, train loss {:.4} -> {:.4}, best iteration {}",
        args.fusion,
        outcome.iterations,
        start.elapsed().as_secs_f64(),
        outcome.history[0].train_loss,
        last.train_loss,
        outcome.best_iteration
    );
    Ok(())
}

fn ablate(args: Ablate, out: &mut dyn Write) -> Result<()> {
    let mut cfg = resolve(&args.common)?;
    if let Some(f) = args.fusion {
        cfg.ablation.fusions = f.0;
    }
    if let Some(k) = args.k {
        cfg.ablation.ks = k;
    }
    if let Some(t) = args.tde {
        cfg.ablation.tde = t;
    }
    cfg.validate()?;
    let dir = config::out_dir(args.common.out);
    let start = Instant::now();
    let splits = splits(&mut cfg, &args.source)?;
    let dataset_seconds = start.elapsed().as_secs_f64();
    let (report, mut timings) = ablation::run_ablation(&cfg, &splits, Some(&dir))?;
    timings.dataset_seconds = dataset_seconds;
    timings.total_seconds = start.elapsed().as_secs_f64();
    report.save(&dir)?;
    report::save_timings(&dir, &timings)?;
    let _ = write!(out, "{}", report::summary_table(&report));
    let _ = writeln!(out, "wrote {} in {:.1}s", dir.join(report::REPORT_FILE).display(), timings.total_seconds);
    if let Some(a) = report.arms.iter().find(|a| a.error.is_some()) {
        return Err(LabError::format(
            dir.join(report::REPORT_FILE),
            format!("arms.{}", a.fusion),
            a.error.as_deref().unwrap_or_default(),
        ));
    }
    Ok(())
}

fn evaluation(report: &MetricReport, split: &str, source: &str, tde: Option<TdeMode>, denominator: Denominator) -> Evaluation {
    Evaluation {
        split: split.into(),
        source: source.into(),
        tde,
        denominator,
        n_scenes: report.n_scenes,
        zero_shot_count: report.zero_shot_count,
        rows: report
            .cells
            .iter()
            .map(|(&(metric, k), &score)| EvaluationRow { metric, k, score })
            .collect(),
    }
}

fn load_predictions(path: &Path) -> Result<Vec<PredictionSet>> {
    let file: PredictionsFile = dataset::parse_json(path)?;
    if file.format != PREDICTIONS_FORMAT || file.version != 1 {
        return Err(LabError::format(path, "format", format!("expected {PREDICTIONS_FORMAT} v1")));
    }
    for (i, set) in file.scenes.iter().enumerate() {
        set.validate()
            .map_err(|e| LabError::format(path, format!("scenes[{i}]"), e))?;
    }
    Ok(file.scenes)
}

fn evaluate(args: Evaluate, out: &mut dyn Write) -> Result<()> {
    let mut cfg = resolve(&args.common)?;
    if let Some(k) = args.k {
        cfg.ablation.ks = k;
    }
    let dir = config::out_dir(args.common.out);
    let (manifest, splits) = dataset::load(&args.data)?;
    cfg.data = manifest.config;
    cfg.validate()?;
    let scenes = match args.split.as_str() {
        "train" => &splits.train,
        "validation" => &splits.validation,
        "test" => &splits.test,
        other => return Err(LabError::invalid("split", format!("`{other}` is not train, validation or test"))),
    };
    let (sets, source, tde) = match (&args.predictions, &args.checkpoint) {
        (Some(path), _) => {
            let mut by_id: std::collections::BTreeMap<u64, PredictionSet> =
                load_predictions(path)?.into_iter().map(|s| (s.scene_id, s)).collect();
            let sets = scenes
                .iter()
                .map(|s| {
                    by_id
                        .remove(&s.id)
                        .ok_or_else(|| LabError::format(path, "scenes", format!("no predictions for scene {}", s.id)))
                })
                .collect::<Result<Vec<_>>>()?;
            (sets, "predictions", None)
        }
        (None, Some(path)) => {
            let ckpt = checkpoint::load(path)?;
            let params = ckpt.early_stop.best_params.unwrap_or(ckpt.params);
            let c = params.config();
            if (c.d_x, c.d_v, c.n_predicates) != (cfg.data.d_x, cfg.data.d_v, cfg.data.n_predicate_classes) {
                return Err(LabError::invalid("checkpoint", "dimensions differ from the dataset"));
            }
            let scoring = ablation::scoring(&cfg, &splits, args.tde)?;
            (ablation::predict(&params, scenes, &scoring)?, "checkpoint", Some(args.tde))
        }
        (None, None) => return Err(LabError::invalid("predictions", "give --predictions or --checkpoint")),
    };
    let scored: Vec<_> = sets.into_iter().zip(scenes.iter().map(|s| &s.graph)).collect();
    let report = evaluate_corpus(&scored, &cfg.ablation.ks, &splits.ledger, cfg.ablation.denominator)?;
    let result = evaluation(&report, &args.split, source, tde, cfg.ablation.denominator);
    error::write(&dir.join(EVALUATION_FILE), &dataset::to_json(&result))?;
    for row in &result.rows {
        let score = row.score.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(out, "{:>8} {score:>8}", format!("{}@{}", row.metric, row.k));
    }
    Ok(())
}

fn export_plot(args: ExportPlot, out: &mut dyn Write) -> Result<()> {
    let report = AblationReport::load(&args.report)?;
    let dir = config::out_dir(args.out);
    let path = dir.join(PLOT_FILE);
    error::write(&path, report::export_tsv(&report).as_bytes())?;
    let _ = writeln!(out, "wrote {} rows to {}", report.rows.len(), path.display());
    Ok(())
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(a, out),
        Command::Train(a) => train(a, out),
        Command::Ablate(a) => ablate(a, out),
        Command::Evaluate(a) => evaluate(a, out),
        Command::ExportPlot(a) => export_plot(a, out),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{e}");
                    1
                }
            };
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
