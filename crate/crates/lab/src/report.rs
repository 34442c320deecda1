//! The ablation report: a JSON file with one row per
//! (fusion, seed, tde mode, metric, K) cell, written in a fixed order so
//! equal inputs give byte-identical files. Wall-clock timings live in a
//! separate file for the same reason.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sgg_fusion_core::fusion::FusionKind;
use sgg_fusion_core::graph::PredicateId;
use sgg_fusion_core::metrics::MetricId;

use crate::config::{LabConfig, TdeMode};
use crate::dataset::{self, SplitCounts};
use crate::error::{self, LabError, Result};

pub const REPORT_FILE: &str = "report.json";
pub const TIMINGS_FILE: &str = "timings.json";
const FORMAT: &str = "sgg-ablation-report";
const VERSION: u32 = 1;

/// Rankings observed on the full-scale benchmark, kept next to the
/// synthetic results for comparison. Never asserted.
pub const REFERENCE_BEST: [(MetricId, FusionKind); 5] = [
    (MetricId::Recall, FusionKind::Dist),
    (MetricId::NgRecall, FusionKind::Dist),
    (MetricId::MeanRecall, FusionKind::Gate),
    (MetricId::Accuracy, FusionKind::MfbGate),
    (MetricId::ZeroShotRecall, FusionKind::Sum),
];

/// SHA-256 of the compact JSON encoding of the resolved config.
pub fn config_hash(cfg: &LabConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("serializable");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArmStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSummary {
    pub fusion: FusionKind,
    pub seed: u64,
    pub status: ArmStatus,
    pub error: Option<String>,
    pub iterations: usize,
    pub best_iteration: usize,
    pub stopped_early: bool,
    pub best_validation_loss: Option<f64>,
}

impl ArmSummary {
    pub fn failed(fusion: FusionKind, seed: u64, error: String) -> Self {
        Self {
            fusion,
            seed,
            status: ArmStatus::Failed,
            error: Some(error),
            iterations: 0,
            best_iteration: 0,
            stopped_early: false,
            best_validation_loss: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Row {
    pub fusion: FusionKind,
    pub seed: u64,
    pub tde: TdeMode,
    pub metric: MetricId,
    pub k: usize,
    /// Absent for failed arms and for zR without unseen triplets.
    pub score: Option<f64>,
    pub n_scenes: usize,
    pub zero_shot_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredicateRow {
    pub fusion: FusionKind,
    pub seed: u64,
    pub tde: TdeMode,
    pub k: usize,
    pub predicate: PredicateId,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub tde: TdeMode,
    pub metric: MetricId,
    pub k: usize,
    pub reference_best: FusionKind,
    /// Highest seed-mean score among the arms that ran; earlier kinds win ties.
    pub observed_best: Option<FusionKind>,
    pub agrees: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetInfo {
    pub seed: u64,
    pub counts: Vec<(String, SplitCounts)>,
    pub ledger_triplets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationReport {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub config: LabConfig,
    pub dataset: DatasetInfo,
    pub arms: Vec<ArmSummary>,
    pub rows: Vec<Row>,
    pub per_predicate: Vec<PredicateRow>,
    pub annotations: Vec<Annotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmTiming {
    pub fusion: FusionKind,
    pub seed: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub dataset_seconds: f64,
    pub arms: Vec<ArmTiming>,
    pub total_seconds: f64,
}

/// Cell keys of the configured grid, in report order.
pub fn grid(cfg: &LabConfig) -> Vec<(FusionKind, u64, TdeMode, MetricId, usize)> {
    let a = &cfg.ablation;
    let mut out = Vec::new();
    for &f in &a.fusions {
        for &s in &a.seeds {
            for &t in &a.tde {
                for m in MetricId::ALL {
                    for &k in &a.ks {
                        out.push((f, s, t, m, k));
                    }
                }
            }
        }
    }
    out
}

/// Annotations over the rows of a report that is otherwise complete.
pub fn annotate(cfg: &LabConfig, rows: &[Row]) -> Vec<Annotation> {
    let a = &cfg.ablation;
    let mut out = Vec::new();
    for &tde in &a.tde {
        for (metric, reference_best) in REFERENCE_BEST {
            if !a.fusions.contains(&reference_best) {
                continue;
            }
            for &k in &a.ks {
                let mut best: Option<(FusionKind, f64)> = None;
                for &f in &a.fusions {
                    let scores: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.fusion == f && r.tde == tde && r.metric == metric && r.k == k)
                        .filter_map(|r| r.score)
                        .collect();
                    if scores.len() != a.seeds.len() {
                        continue;
                    }
                    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
                    if best.is_none_or(|(_, b)| mean > b) {
                        best = Some((f, mean));
                    }
                }
                let observed_best = best.map(|(f, _)| f);
                out.push(Annotation {
                    tde,
                    metric,
                    k,
                    reference_best,
                    observed_best,
                    agrees: observed_best.map(|f| f == reference_best),
                });
            }
        }
    }
    out
}

impl AblationReport {
    pub fn new(
        config: LabConfig,
        dataset: DatasetInfo,
        arms: Vec<ArmSummary>,
        rows: Vec<Row>,
        per_predicate: Vec<PredicateRow>,
    ) -> Self {
        let annotations = annotate(&config, &rows);
        Self {
            format: FORMAT.into(),
            version: VERSION,
            config_hash: config_hash(&config),
            config,
            dataset,
            arms,
            rows,
            per_predicate,
            annotations,
        }
    }

    /// Completeness and consistency; the error names the offending field.
    pub fn check(&self) -> std::result::Result<(), (String, String)> {
        let fail = |field: String, reason: String| Err((field, reason));
        if self.format != FORMAT || self.version != VERSION {
            return fail("format".into(), format!("expected {FORMAT} v{VERSION}"));
        }
        if self.config_hash != config_hash(&self.config) {
            return fail("config_hash".into(), "does not match the config".into());
        }
        let a = &self.config.ablation;
        let arms: Vec<_> = a
            .fusions
            .iter()
            .flat_map(|&f| a.seeds.iter().map(move |&s| (f, s)))
            .collect();
        if self.arms.len() != arms.len() {
            return fail("arms".into(), format!("{} arms, expected {}", self.arms.len(), arms.len()));
        }
        let mut ok = BTreeMap::new();
        for (i, (arm, &(f, s))) in self.arms.iter().zip(&arms).enumerate() {
            if (arm.fusion, arm.seed) != (f, s) {
                return fail(format!("arms[{i}]"), format!("expected {f} seed {s}"));
            }
            if (arm.status == ArmStatus::Failed) != arm.error.is_some() {
                return fail(format!("arms[{i}].error"), "must be set exactly for failed arms".into());
            }
            ok.insert((f, s), arm.status == ArmStatus::Ok);
        }
        let grid = grid(&self.config);
        if self.rows.len() != grid.len() {
            return fail("rows".into(), format!("{} rows, expected {}", self.rows.len(), grid.len()));
        }
        for (i, (row, &(f, s, t, m, k))) in self.rows.iter().zip(&grid).enumerate() {
            if (row.fusion, row.seed, row.tde, row.metric, row.k) != (f, s, t, m, k) {
                return fail(format!("rows[{i}]"), format!("expected {f} seed {s} tde {t} {m}@{k}"));
            }
            match row.score {
                Some(v) if !(0.0..=1.0).contains(&v) => {
                    return fail(format!("rows[{i}].score"), format!("{v} outside [0, 1]"));
                }
                Some(_) if !ok[&(f, s)] => {
                    return fail(format!("rows[{i}].score"), "scored cell of a failed arm".into());
                }
                None if ok[&(f, s)] && m != MetricId::ZeroShotRecall => {
                    return fail(format!("rows[{i}].score"), "missing score".into());
                }
                _ => {}
            }
        }
        if self.annotations != annotate(&self.config, &self.rows) {
            return fail("annotations".into(), "do not match the rows".into());
        }
        Ok(())
    }

    /// Serializes after checking completeness.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.check()
            .map_err(|(field, reason)| LabError::format(REPORT_FILE, field, reason))?;
        Ok(dataset::to_json(self))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        error::write(&dir.join(REPORT_FILE), &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let report: Self = dataset::parse_json(path)?;
        report
            .check()
            .map_err(|(field, reason)| LabError::format(path, field, reason))?;
        Ok(report)
    }

    pub fn arm(&self, fusion: FusionKind, seed: u64) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.fusion == fusion && a.seed == seed)
    }

    pub fn score(&self, fusion: FusionKind, seed: u64, tde: TdeMode, metric: MetricId, k: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| (r.fusion, r.seed, r.tde, r.metric, r.k) == (fusion, seed, tde, metric, k))
            .and_then(|r| r.score)
    }
}

pub fn save_timings(dir: &Path, t: &Timings) -> Result<()> {
    error::write(&dir.join(TIMINGS_FILE), &dataset::to_json(t))
}

pub const TSV_HEADER: &str = "fusion\tseed\ttde\tmetric\tk\tscore";

/// One line per report row; absent scores are empty cells. Scores are
/// printed in shortest round-trip form, so parsing them back is exact.
pub fn export_tsv(report: &AblationReport) -> String {
    let mut out = format!("{TSV_HEADER}\n");
    for r in &report.rows {
        let score = r.score.map(|v| v.to_string()).unwrap_or_default();
        writeln!(out, "{}\t{}\t{}\t{}\t{}\t{score}", r.fusion, r.seed, r.tde, r.metric, r.k).unwrap();
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportRow {
    pub fusion: FusionKind,
    pub seed: u64,
    pub tde: TdeMode,
    pub metric: MetricId,
    pub k: usize,
    pub score: Option<f64>,
}

pub fn parse_tsv(text: &str) -> std::result::Result<Vec<ExportRow>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(TSV_HEADER) {
        return Err("missing header".into());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = |what: &str| format!("line {}: bad {what}", i + 2);
            let cells: Vec<&str> = line.split('\t').collect();
            let [f, s, t, m, k, v] = cells[..] else {
                return Err(bad("column count"));
            };
            Ok(ExportRow {
                fusion: f.parse().map_err(|_| bad("fusion"))?,
                seed: s.parse().map_err(|_| bad("seed"))?,
                tde: t.parse().map_err(|_| bad("tde"))?,
                metric: m.parse().map_err(|_| bad("metric"))?,
                k: k.parse().map_err(|_| bad("k"))?,
                score: if v.is_empty() { None } else { Some(v.parse().map_err(|_| bad("score"))?) },
            })
        })
        .collect()
}

/// One table per tde mode: rows are arms, columns metric@K.
pub fn summary_table(report: &AblationReport) -> String {
    let a = &report.config.ablation;
    let mut out = String::new();
    for &tde in &a.tde {
        let _ = write!(out, "{:<22}", format!("tde={tde}"));
        for m in MetricId::ALL {
            for &k in &a.ks {
                let _ = write!(out, "{:>10}", format!("{m}@{k}"));
            }
        }
        out.push('\n');
        for arm in &report.arms {
            let _ = write!(out, "{:<22}", format!("{} s{}", arm.fusion, arm.seed));
            for m in MetricId::ALL {
                for &k in &a.ks {
                    let cell = match (arm.status, report.score(arm.fusion, arm.seed, tde, m, k)) {
                        (ArmStatus::Failed, _) => "failed".to_string(),
                        (_, Some(v)) => format!("{v:.4}"),
                        (_, None) => "-".to_string(),
                    };
                    let _ = write!(out, "{cell:>10}");
                }
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}
