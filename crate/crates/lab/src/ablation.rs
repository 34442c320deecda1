//! Train every configured fusion kind on one dataset and score it with and
//! without TDE.

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sgg_fusion_core::debias::{self, CounterfactualBaseline};
use sgg_fusion_core::fusion::{FusionKind, FusionParams};
use sgg_fusion_core::inference::{predict_scene, Scoring};
use sgg_fusion_core::metrics::{evaluate_corpus, MetricId, MetricReport, PredictionSet};
use sgg_fusion_core::synthgen::{DatasetSplits, Scene, SynthConfig};
use sgg_fusion_core::trainer::{Checkpoint, Example, ExampleValidator, TrainOutcome, Trainer, Validator};

use crate::checkpoint;
use crate::config::{LabConfig, TdeMode};
use crate::dataset::{SplitCounts, SPLITS};
use crate::error::{LabError, Result};
use crate::report::{AblationReport, ArmStatus, ArmSummary, ArmTiming, DatasetInfo, PredicateRow, Row, Timings};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const HISTORY_FILE: &str = "history.tsv";

pub fn dataset_info(cfg: &SynthConfig, splits: &DatasetSplits) -> DatasetInfo {
    let parts = [&splits.train, &splits.validation, &splits.test];
    DatasetInfo {
        seed: cfg.seed,
        counts: SPLITS
            .iter()
            .zip(parts)
            .map(|(name, scenes)| {
                let counts = SplitCounts {
                    scenes: scenes.len(),
                    relations: scenes.iter().map(|s| s.graph.relations.len()).sum(),
                };
                (name.to_string(), counts)
            })
            .collect(),
        ledger_triplets: splits.ledger.len(),
    }
}

pub fn examples(scenes: &[Scene]) -> Vec<Example<'_>> {
    scenes.iter().flat_map(|s| s.examples()).collect()
}

/// Directory of one arm's checkpoint and history under the output dir.
pub fn arm_dir(out: &Path, fusion: FusionKind, seed: u64) -> std::path::PathBuf {
    out.join("arms").join(format!("{fusion}-seed{seed}"))
}

/// The initialization every arm of `kind` starts from. It depends only on
/// the config, never on which other arms run.
pub fn init_params(cfg: &LabConfig, kind: FusionKind) -> Result<FusionParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.fusion.init_seed);
    Ok(FusionParams::init(cfg.fusion_config(kind), &mut rng)?)
}

/// Trains one arm. Returns the outcome and the state at the end of the run.
pub fn train_arm(
    cfg: &LabConfig,
    splits: &DatasetSplits,
    kind: FusionKind,
    seed: u64,
) -> Result<(TrainOutcome, Checkpoint)> {
    let train = examples(&splits.train);
    let validation = examples(&splits.validation);
    let tc = sgg_fusion_core::trainer::TrainConfig { seed, ..cfg.train };
    let mut trainer = Trainer::new(init_params(cfg, kind)?, &train, tc)?;
    let mut validator = ExampleValidator::new(validation);
    let v: Option<&mut dyn Validator> = if splits.validation.iter().all(|s| s.graph.relations.is_empty()) {
        None
    } else {
        Some(&mut validator)
    };
    trainer.run(v)?;
    let ckpt = trainer.checkpoint();
    Ok((trainer.finish(), ckpt))
}

/// Scoring for `mode`, with the mean baseline taken over training `x`.
pub fn scoring(cfg: &LabConfig, splits: &DatasetSplits, mode: TdeMode) -> Result<Scoring> {
    let Some(baseline) = mode.baseline() else {
        return Ok(Scoring::Biased);
    };
    let train = examples(&splits.train);
    let baseline: CounterfactualBaseline =
        debias::baseline_for(baseline, cfg.data.d_x, train.iter().map(|(f, _)| &f.x))?;
    Ok(Scoring::Tde {
        baseline,
        space: cfg.ablation.tde_space,
    })
}

pub fn predict(params: &FusionParams, scenes: &[Scene], scoring: &Scoring) -> Result<Vec<PredictionSet>> {
    scenes
        .iter()
        .map(|s| Ok(predict_scene(params, s, scoring)?))
        .collect()
}

/// All metrics of `params` on the test split.
pub fn evaluate(params: &FusionParams, cfg: &LabConfig, splits: &DatasetSplits, scoring: &Scoring) -> Result<MetricReport> {
    let sets = predict(params, &splits.test, scoring)?;
    let scored: Vec<_> = sets.into_iter().zip(splits.test.iter().map(|s| &s.graph)).collect();
    let report = evaluate_corpus(&scored, &cfg.ablation.ks, &splits.ledger, cfg.ablation.denominator)?;
    Ok(report)
}

struct ArmOutput {
    summary: ArmSummary,
    reports: Vec<(TdeMode, MetricReport)>,
    checkpoint: Checkpoint,
    seconds: f64,
}

fn run_arm(cfg: &LabConfig, splits: &DatasetSplits, scorings: &[(TdeMode, Scoring)], kind: FusionKind, seed: u64) -> Result<ArmOutput> {
    let start = Instant::now();
    let (outcome, checkpoint) = train_arm(cfg, splits, kind, seed)?;
    let reports = scorings
        .iter()
        .map(|(mode, s)| Ok((*mode, evaluate(&outcome.params, cfg, splits, s)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ArmOutput {
        summary: ArmSummary {
            fusion: kind,
            seed,
            status: ArmStatus::Ok,
            error: None,
            iterations: outcome.iterations,
            best_iteration: outcome.best_iteration,
            stopped_early: outcome.stopped_early,
            best_validation_loss: checkpoint.early_stop.best_loss,
        },
        reports,
        checkpoint,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs every (fusion, seed) arm on its own thread and assembles the report
/// in config order. A failing arm is recorded as failed; the others still
/// run. When `out` is given, each arm's checkpoint and history are written
/// under `out/arms/`.
pub fn run_ablation(cfg: &LabConfig, splits: &DatasetSplits, out: Option<&Path>) -> Result<(AblationReport, Timings)> {
    cfg.validate()?;
    let start = Instant::now();
    let a = &cfg.ablation;
    let scorings = a
        .tde
        .iter()
        .map(|&m| Ok((m, scoring(cfg, splits, m)?)))
        .collect::<Result<Vec<_>>>()?;
    let arms: Vec<(FusionKind, u64)> = a
        .fusions
        .iter()
        .flat_map(|&f| a.seeds.iter().map(move |&s| (f, s)))
        .collect();
    let results: Vec<std::result::Result<ArmOutput, String>> = std::thread::scope(|scope| {
        let handles: Vec<_> = arms
            .iter()
            .map(|&(f, s)| {
                let scorings = &scorings;
                scope.spawn(move || run_arm(cfg, splits, scorings, f, s))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| match h.join() {
                Ok(r) => r.map_err(|e| e.to_string()),
                Err(_) => Err("arm panicked".to_string()),
            })
            .collect()
    });

    let mut summaries = Vec::new();
    let mut rows = Vec::new();
    let mut per_predicate = Vec::new();
    let mut timings = Vec::new();
    for (&(fusion, seed), result) in arms.iter().zip(results) {
        match result {
            Ok(arm) => {
                for (tde, report) in &arm.reports {
                    for metric in MetricId::ALL {
                        for &k in &a.ks {
                            rows.push(Row {
                                fusion,
                                seed,
                                tde: *tde,
                                metric,
                                k,
                                score: report.get(metric, k),
                                n_scenes: report.n_scenes,
                                zero_shot_count: report.zero_shot_count,
                            });
                        }
                    }
                    for &k in &a.ks {
                        for (&predicate, &recall) in report.per_predicate.get(&k).into_iter().flatten() {
                            per_predicate.push(PredicateRow { fusion, seed, tde: *tde, k, predicate, recall });
                        }
                    }
                }
                if let Some(out) = out {
                    let dir = arm_dir(out, fusion, seed);
                    checkpoint::save(&dir.join(CHECKPOINT_FILE), &arm.checkpoint)?;
                    crate::error::write(
                        &dir.join(HISTORY_FILE),
                        checkpoint::history_tsv(&arm.checkpoint.history).as_bytes(),
                    )?;
                }
                timings.push(ArmTiming { fusion, seed, seconds: arm.seconds });
                summaries.push(arm.summary);
            }
            Err(error) => {
                for &tde in &a.tde {
                    for metric in MetricId::ALL {
                        for &k in &a.ks {
                            rows.push(Row { fusion, seed, tde, metric, k, score: None, n_scenes: 0, zero_shot_count: 0 });
                        }
                    }
                }
                timings.push(ArmTiming { fusion, seed, seconds: 0.0 });
                summaries.push(ArmSummary::failed(fusion, seed, error));
            }
        }
    }
    let report = AblationReport::new(cfg.clone(), dataset_info(&cfg.data, splits), summaries, rows, per_predicate);
    report
        .check()
        .map_err(|(field, reason)| LabError::format("report", field, reason))?;
    let timings = Timings {
        dataset_seconds: 0.0,
        arms: timings,
        total_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((report, timings))
}
