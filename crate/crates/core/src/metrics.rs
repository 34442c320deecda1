//! Scene graph recall metrics over ranked predicate predictions.
//!
//! * `R@K`: graph-constrained recall, one predicate per ordered pair.
//! * `ngR@K`: the same matching over every `(pair, predicate)` candidate.
//! * `mR@K`: `R@K` computed per predicate class, averaged over classes.
//! * `A@K`: top-1 predicate accuracy over the ground-truth pairs.
//! * `zR@K`: `R@K` restricted to class-level triplets absent from training.
//!
//! Predictions are ranked by confidence, highest first; equal confidences
//! fall back to ascending `(subject, object, predicate)`, so list order never
//! affects a score. By default a recall is `matched / K`; the
//! [`Denominator::Gt`] switch divides by the ground-truth count instead.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::graph::{ObjectId, PredicateId, Relation, SceneGraph};
use crate::synthgen::ZeroShotLedger;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("K must be at least 1")]
    ZeroK,
    #[error("R@K needs a graph-constrained prediction set")]
    NotConstrained,
    #[error("graph-constrained set has two predictions for pair ({0}, {1})")]
    DuplicatePair(ObjectId, ObjectId),
    #[error("prediction confidence must be finite")]
    NonFiniteConfidence,
    #[error("ground truth is empty")]
    EmptyGroundTruth,
    #[error("no prediction for ground-truth pair ({0}, {1})")]
    MissingPair(ObjectId, ObjectId),
    #[error("evaluation corpus is empty")]
    EmptyCorpus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Denominator {
    /// `matched / K`.
    #[default]
    K,
    /// `matched / |GT|` (per class: `matched / min(K, |GT_c|)`).
    Gt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum MetricId {
    #[cfg_attr(feature = "serde", serde(rename = "R"))]
    Recall,
    #[cfg_attr(feature = "serde", serde(rename = "ngR"))]
    NgRecall,
    #[cfg_attr(feature = "serde", serde(rename = "mR"))]
    MeanRecall,
    #[cfg_attr(feature = "serde", serde(rename = "A"))]
    Accuracy,
    #[cfg_attr(feature = "serde", serde(rename = "zR"))]
    ZeroShotRecall,
}

impl MetricId {
    pub const ALL: [MetricId; 5] = [
        MetricId::Recall,
        MetricId::NgRecall,
        MetricId::MeanRecall,
        MetricId::Accuracy,
        MetricId::ZeroShotRecall,
    ];

    pub fn id(self) -> &'static str {
        match self {
            MetricId::Recall => "R",
            MetricId::NgRecall => "ngR",
            MetricId::MeanRecall => "mR",
            MetricId::Accuracy => "A",
            MetricId::ZeroShotRecall => "zR",
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for MetricId {
    type Err = alloc::string::String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricId::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| alloc::format!("unknown metric id `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RankedPrediction {
    pub subject: ObjectId,
    pub object: ObjectId,
    pub predicate: PredicateId,
    pub confidence: f64,
}

impl RankedPrediction {
    pub fn new(subject: ObjectId, object: ObjectId, predicate: PredicateId, confidence: f64) -> Self {
        Self {
            subject,
            object,
            predicate,
            confidence,
        }
    }

    pub fn relation(&self) -> Relation {
        Relation::new(self.subject, self.object, self.predicate)
    }

    fn key(&self) -> (ObjectId, ObjectId, PredicateId) {
        (self.subject, self.object, self.predicate)
    }
}

/// Ranking order: confidence descending, then ids ascending.
pub fn rank_order(a: &RankedPrediction, b: &RankedPrediction) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then_with(|| a.key().cmp(&b.key()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PredictionMode {
    /// At most one predicate per ordered pair.
    GraphConstraint,
    /// Any number of candidate predicates per pair.
    Multigraph,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PredictionSet {
    pub scene_id: u64,
    pub mode: PredictionMode,
    pub predictions: Vec<RankedPrediction>,
}

impl PredictionSet {
    pub fn new(
        scene_id: u64,
        mode: PredictionMode,
        predictions: Vec<RankedPrediction>,
    ) -> Result<Self, MetricError> {
        let set = Self {
            scene_id,
            mode,
            predictions,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        if self.predictions.iter().any(|p| !p.confidence.is_finite()) {
            return Err(MetricError::NonFiniteConfidence);
        }
        if self.mode == PredictionMode::GraphConstraint {
            let mut pairs = BTreeSet::new();
            for p in &self.predictions {
                if !pairs.insert((p.subject, p.object)) {
                    return Err(MetricError::DuplicatePair(p.subject, p.object));
                }
            }
        }
        Ok(())
    }

    /// Predictions in ranking order.
    pub fn ranked(&self) -> Vec<RankedPrediction> {
        let mut out = self.predictions.clone();
        out.sort_by(rank_order);
        out
    }

    /// Keeps the best-ranked prediction of each pair.
    pub fn constrained(&self) -> PredictionSet {
        let mut seen = BTreeSet::new();
        let predictions = self
            .ranked()
            .into_iter()
            .filter(|p| seen.insert((p.subject, p.object)))
            .collect();
        PredictionSet {
            scene_id: self.scene_id,
            mode: PredictionMode::GraphConstraint,
            predictions,
        }
    }
}

fn check_k(k: usize) -> Result<(), MetricError> {
    if k == 0 {
        Err(MetricError::ZeroK)
    } else {
        Ok(())
    }
}

/// Ground-truth relations among the top `k` predictions, each matched once.
fn top_k_matches(
    preds: &PredictionSet,
    gt: impl IntoIterator<Item = Relation>,
    k: usize,
) -> Vec<Relation> {
    let mut open: BTreeSet<Relation> = gt.into_iter().collect();
    let mut hits = Vec::new();
    for p in preds.ranked().into_iter().take(k) {
        if open.remove(&p.relation()) {
            hits.push(p.relation());
        }
    }
    hits
}

fn ratio(matched: usize, denom: usize) -> f64 {
    matched as f64 / denom as f64
}

fn recall_with(
    preds: &PredictionSet,
    gt: &[Relation],
    k: usize,
    denom: Denominator,
) -> Result<f64, MetricError> {
    check_k(k)?;
    let matched = top_k_matches(preds, gt.iter().copied(), k).len();
    match denom {
        Denominator::K => Ok(ratio(matched, k)),
        Denominator::Gt if gt.is_empty() => Err(MetricError::EmptyGroundTruth),
        Denominator::Gt => Ok(ratio(matched, gt.len())),
    }
}

/// Graph-constrained `R@K` of one scene.
pub fn recall_at_k(
    preds: &PredictionSet,
    gt: &SceneGraph,
    k: usize,
    denom: Denominator,
) -> Result<f64, MetricError> {
    if preds.mode != PredictionMode::GraphConstraint {
        return Err(MetricError::NotConstrained);
    }
    preds.validate()?;
    recall_with(preds, &gt.relations, k, denom)
}

/// `ngR@K` of one scene: every prediction competes for the top `K`.
pub fn ng_recall_at_k(
    preds: &PredictionSet,
    gt: &SceneGraph,
    k: usize,
    denom: Denominator,
) -> Result<f64, MetricError> {
    preds.validate()?;
    recall_with(preds, &gt.relations, k, denom)
}

/// Number of ground-truth relations recovered in the top `k`; monotone in `k`.
pub fn matched_at_k(preds: &PredictionSet, gt: &SceneGraph, k: usize) -> usize {
    top_k_matches(preds, gt.relations.iter().copied(), k).len()
}

/// Per-class recall of one scene, over the classes present in its ground truth.
pub fn per_class_recall(
    preds: &PredictionSet,
    gt: &SceneGraph,
    k: usize,
    denom: Denominator,
) -> Result<BTreeMap<PredicateId, f64>, MetricError> {
    check_k(k)?;
    let mut counts: BTreeMap<PredicateId, (usize, usize)> = BTreeMap::new();
    for r in &gt.relations {
        counts.entry(r.predicate).or_default().1 += 1;
    }
    for hit in top_k_matches(preds, gt.relations.iter().copied(), k) {
        counts.entry(hit.predicate).or_default().0 += 1;
    }
    Ok(counts
        .into_iter()
        .map(|(c, (matched, total))| {
            let d = match denom {
                Denominator::K => k,
                Denominator::Gt => k.min(total),
            };
            (c, ratio(matched, d))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanRecall {
    pub score: f64,
    /// Per-class recall averaged over the scenes containing that class.
    pub per_class: BTreeMap<PredicateId, f64>,
}

/// Corpus `mR@K`: each class's recall is averaged over the scenes in which
/// it occurs, then classes are averaged with equal weight.
pub fn mean_recall_at_k(
    scenes: &[(&PredictionSet, &SceneGraph)],
    k: usize,
    denom: Denominator,
) -> Result<MeanRecall, MetricError> {
    check_k(k)?;
    let mut acc: BTreeMap<PredicateId, (f64, usize)> = BTreeMap::new();
    for (preds, gt) in scenes {
        for (c, r) in per_class_recall(preds, gt, k, denom)? {
            let e = acc.entry(c).or_default();
            e.0 += r;
            e.1 += 1;
        }
    }
    if acc.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let per_class: BTreeMap<PredicateId, f64> = acc
        .into_iter()
        .map(|(c, (sum, n))| (c, sum / n as f64))
        .collect();
    let score = per_class.values().sum::<f64>() / per_class.len() as f64;
    Ok(MeanRecall { score, per_class })
}

/// Fraction of ground-truth pairs whose top-ranked predicate is one of the
/// pair's ground-truth predicates.
pub fn accuracy_at_k(preds: &PredictionSet, gt: &SceneGraph) -> Result<f64, MetricError> {
    preds.validate()?;
    let mut truth: BTreeMap<(ObjectId, ObjectId), BTreeSet<PredicateId>> = BTreeMap::new();
    for r in &gt.relations {
        truth.entry((r.subject, r.object)).or_default().insert(r.predicate);
    }
    if truth.is_empty() {
        return Err(MetricError::EmptyGroundTruth);
    }
    let top1: BTreeMap<(ObjectId, ObjectId), PredicateId> = preds
        .constrained()
        .predictions
        .iter()
        .map(|p| ((p.subject, p.object), p.predicate))
        .collect();
    let mut correct = 0;
    for (pair, predicates) in &truth {
        let best = top1
            .get(pair)
            .ok_or(MetricError::MissingPair(pair.0, pair.1))?;
        if predicates.contains(best) {
            correct += 1;
        }
    }
    Ok(ratio(correct, truth.len()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroShot {
    /// `None` when the scene has no zero-shot ground truth.
    pub score: Option<f64>,
    pub count: usize,
}

/// Ground-truth relations whose class-level triplet is absent from the ledger.
pub fn zero_shot_relations(gt: &SceneGraph, ledger: &ZeroShotLedger) -> Vec<Relation> {
    gt.relations
        .iter()
        .filter(|r| {
            gt.class_triplet(r)
                .is_some_and(|t| !ledger.contains(&t))
        })
        .copied()
        .collect()
}

pub fn zero_shot_recall_at_k(
    preds: &PredictionSet,
    gt: &SceneGraph,
    k: usize,
    ledger: &ZeroShotLedger,
    denom: Denominator,
) -> Result<ZeroShot, MetricError> {
    check_k(k)?;
    let unseen = zero_shot_relations(gt, ledger);
    if unseen.is_empty() {
        return Ok(ZeroShot {
            score: None,
            count: 0,
        });
    }
    Ok(ZeroShot {
        score: Some(recall_with(preds, &unseen, k, denom)?),
        count: unseen.len(),
    })
}

/// Metric table for one evaluated corpus. `A@K` does not depend on `K` and
/// is repeated in every `K` column.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    /// `None` marks an absent score (zero-shot with no unseen triplets).
    pub cells: BTreeMap<(MetricId, usize), Option<f64>>,
    /// Backing table of `mR@K`, keyed by `K`.
    pub per_predicate: BTreeMap<usize, BTreeMap<PredicateId, f64>>,
    pub n_scenes: usize,
    pub zero_shot_count: usize,
}

impl MetricReport {
    pub fn get(&self, metric: MetricId, k: usize) -> Option<f64> {
        self.cells.get(&(metric, k)).copied().flatten()
    }

    /// Scores in `[0, 1]`, and each `mR@K` equals the mean of its table row.
    pub fn check(&self) -> Result<(), alloc::string::String> {
        for ((m, k), v) in &self.cells {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(v) {
                    return Err(alloc::format!("{m}@{k} = {v} outside [0, 1]"));
                }
            }
        }
        for (k, row) in &self.per_predicate {
            let mean = row.values().sum::<f64>() / row.len() as f64;
            if self.get(MetricId::MeanRecall, *k) != Some(mean) {
                return Err(alloc::format!("mR@{k} does not match its per-predicate table"));
            }
        }
        Ok(())
    }
}

fn mean_of(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Evaluates all five metrics at every `K`. `scenes` pairs each ground-truth
/// graph with a multigraph prediction set; graph-constrained metrics use its
/// best prediction per pair. Scenes without ground truth are skipped, and
/// corpus scores are unweighted means of per-scene scores.
pub fn evaluate_corpus(
    scenes: &[(PredictionSet, &SceneGraph)],
    ks: &[usize],
    ledger: &ZeroShotLedger,
    denom: Denominator,
) -> Result<MetricReport, MetricError> {
    for &k in ks {
        check_k(k)?;
    }
    let scenes: Vec<(PredictionSet, PredictionSet, &SceneGraph)> = scenes
        .iter()
        .filter(|(_, g)| !g.relations.is_empty())
        .map(|(p, g)| (p.clone(), p.constrained(), *g))
        .collect();
    if scenes.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let mut report = MetricReport {
        n_scenes: scenes.len(),
        ..MetricReport::default()
    };

    let mut accuracy = Vec::with_capacity(scenes.len());
    for (multi, _, g) in &scenes {
        accuracy.push(accuracy_at_k(multi, g)?);
        report.zero_shot_count += zero_shot_relations(g, ledger).len();
    }
    let accuracy = mean_of(&accuracy);

    for &k in ks {
        let mut r = Vec::with_capacity(scenes.len());
        let mut ng = Vec::with_capacity(scenes.len());
        let mut zr = Vec::new();
        for (multi, constrained, g) in &scenes {
            r.push(recall_at_k(constrained, g, k, denom)?);
            ng.push(ng_recall_at_k(multi, g, k, denom)?);
            if let Some(s) = zero_shot_recall_at_k(constrained, g, k, ledger, denom)?.score {
                zr.push(s);
            }
        }
        let pairs: Vec<(&PredictionSet, &SceneGraph)> =
            scenes.iter().map(|(_, c, g)| (c, *g)).collect();
        let mr = mean_recall_at_k(&pairs, k, denom)?;
        report.cells.insert((MetricId::Recall, k), mean_of(&r));
        report.cells.insert((MetricId::NgRecall, k), mean_of(&ng));
        report.cells.insert((MetricId::MeanRecall, k), Some(mr.score));
        report.cells.insert((MetricId::Accuracy, k), accuracy);
        report.cells.insert((MetricId::ZeroShotRecall, k), mean_of(&zr));
        report.per_predicate.insert(k, mr.per_class);
    }
    Ok(report)
}
