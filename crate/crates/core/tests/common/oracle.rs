// Brute-force reference implementations of the recall metrics and a random
// small-instance generator. Deliberately quadratic: every rank is recomputed
// by pairwise comparison instead of sorting.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use sgg_fusion_core::graph::{BBox, PredicateId, Relation, SceneGraph, SceneObject};
use sgg_fusion_core::metrics::{Denominator, PredictionMode, PredictionSet, RankedPrediction};
use sgg_fusion_core::synthgen::ZeroShotLedger;

fn before(a: &RankedPrediction, b: &RankedPrediction) -> bool {
    a.confidence > b.confidence
        || (a.confidence == b.confidence
            && (a.subject, a.object, a.predicate) < (b.subject, b.object, b.predicate))
}

/// Predictions whose rank (number of predictions strictly ahead) is below `k`.
pub fn top_k(preds: &[RankedPrediction], k: usize) -> Vec<RankedPrediction> {
    preds
        .iter()
        .filter(|p| preds.iter().filter(|q| before(q, p)).count() < k)
        .copied()
        .collect()
}

pub fn matched(preds: &[RankedPrediction], gt: &[Relation], k: usize) -> usize {
    let top = top_k(preds, k);
    let distinct: BTreeSet<&Relation> = gt.iter().collect();
    distinct
        .into_iter()
        .filter(|r| {
            top.iter()
                .any(|p| p.subject == r.subject && p.object == r.object && p.predicate == r.predicate)
        })
        .count()
}

pub fn recall(preds: &[RankedPrediction], gt: &[Relation], k: usize, denom: Denominator) -> f64 {
    let m = matched(preds, gt, k);
    match denom {
        Denominator::K => m as f64 / k as f64,
        Denominator::Gt => m as f64 / gt.len() as f64,
    }
}

/// Best-ranked prediction of every pair.
pub fn constrained(preds: &[RankedPrediction]) -> Vec<RankedPrediction> {
    preds
        .iter()
        .filter(|p| {
            !preds
                .iter()
                .any(|q| q.subject == p.subject && q.object == p.object && before(q, p))
        })
        .copied()
        .collect()
}

pub fn class_recall(
    preds: &[RankedPrediction],
    gt: &[Relation],
    class: PredicateId,
    k: usize,
    denom: Denominator,
) -> f64 {
    let of_class: Vec<Relation> = gt.iter().filter(|r| r.predicate == class).copied().collect();
    let m = matched(preds, &of_class, k);
    let d = match denom {
        Denominator::K => k,
        Denominator::Gt => k.min(of_class.len()),
    };
    m as f64 / d as f64
}

/// Corpus mR over graph-constrained prediction lists; `None` for an empty corpus.
pub fn mean_recall(
    scenes: &[(Vec<RankedPrediction>, SceneGraph)],
    k: usize,
    denom: Denominator,
) -> Option<f64> {
    let classes: BTreeSet<PredicateId> = scenes
        .iter()
        .flat_map(|(_, g)| g.relations.iter().map(|r| r.predicate))
        .collect();
    if classes.is_empty() {
        return None;
    }
    let mut total = 0.0;
    for &c in &classes {
        let mut sum = 0.0;
        let mut n = 0;
        for (p, g) in scenes {
            if g.relations.iter().any(|r| r.predicate == c) {
                sum += class_recall(p, &g.relations, c, k, denom);
                n += 1;
            }
        }
        total += sum / n as f64;
    }
    Some(total / classes.len() as f64)
}

pub fn accuracy(preds: &[RankedPrediction], gt: &SceneGraph) -> Option<f64> {
    let pairs: BTreeSet<(u32, u32)> = gt.relations.iter().map(|r| (r.subject, r.object)).collect();
    if pairs.is_empty() {
        return None;
    }
    let best = constrained(preds);
    let mut correct = 0;
    for (s, o) in &pairs {
        let top = best.iter().find(|p| p.subject == *s && p.object == *o)?;
        if gt.relations.contains(&Relation::new(*s, *o, top.predicate)) {
            correct += 1;
        }
    }
    Some(correct as f64 / pairs.len() as f64)
}

pub fn unseen(gt: &SceneGraph, ledger: &ZeroShotLedger) -> Vec<Relation> {
    let label = |id: u32| gt.objects.iter().find(|o| o.id == id).unwrap().label;
    gt.relations
        .iter()
        .filter(|r| !ledger.0.contains(&(label(r.subject), r.predicate, label(r.object))))
        .copied()
        .collect()
}

pub fn zero_shot_recall(
    preds: &[RankedPrediction],
    gt: &SceneGraph,
    ledger: &ZeroShotLedger,
    k: usize,
    denom: Denominator,
) -> Option<f64> {
    let z = unseen(gt, ledger);
    if z.is_empty() {
        None
    } else {
        Some(recall(preds, &z, k, denom))
    }
}

/// A random scene with at most `max_objects` objects and the predictions for it.
pub struct Instance {
    pub graph: SceneGraph,
    pub multigraph: Vec<RankedPrediction>,
}

pub fn random_instance<R: Rng>(rng: &mut R, max_objects: u32, predicates: usize, max_preds: usize) -> Instance {
    let n = rng.random_range(2..=max_objects);
    let objects = (0..n)
        .map(|id| SceneObject {
            id,
            label: rng.random_range(0..3),
            bbox: BBox { x1: 0.0, y1: 0.0, x2: 1.0, y2: 1.0 },
        })
        .collect();
    let mut relations = BTreeSet::new();
    for _ in 0..rng.random_range(1..=6) {
        let s = rng.random_range(0..n);
        let o = rng.random_range(0..n);
        if s != o {
            relations.insert(Relation::new(s, o, rng.random_range(0..predicates)));
        }
    }
    if relations.is_empty() {
        relations.insert(Relation::new(0, 1, 0));
    }
    // Coarse confidences so that ties are common.
    let mut seen = BTreeSet::new();
    let mut multigraph = Vec::new();
    for _ in 0..rng.random_range(1..=max_preds) {
        let s = rng.random_range(0..n);
        let o = rng.random_range(0..n);
        let p = rng.random_range(0..predicates);
        if s != o && seen.insert((s, o, p)) {
            multigraph.push(RankedPrediction::new(s, o, p, rng.random_range(0..5) as f64 / 4.0));
        }
    }
    Instance {
        graph: SceneGraph {
            objects,
            relations: relations.into_iter().collect(),
        },
        multigraph,
    }
}

/// Adds predictions for every GT pair that has none, so A@K is defined.
pub fn cover_gt_pairs<R: Rng>(inst: &mut Instance, rng: &mut R, predicates: usize) {
    for (s, o) in inst.graph.pairs() {
        if !inst.multigraph.iter().any(|p| p.subject == s && p.object == o) {
            let p = rng.random_range(0..predicates);
            inst.multigraph.push(RankedPrediction::new(s, o, p, rng.random_range(0..5) as f64 / 4.0));
        }
    }
}

pub fn multigraph_set(inst: &Instance) -> PredictionSet {
    PredictionSet::new(0, PredictionMode::Multigraph, inst.multigraph.clone()).unwrap()
}

/// Random ledger over the 3 object labels used by `random_instance`.
pub fn random_ledger<R: Rng>(rng: &mut R, predicates: usize) -> ZeroShotLedger {
    let mut set = BTreeSet::new();
    for s in 0..3 {
        for p in 0..predicates {
            for o in 0..3 {
                if rng.random_bool(0.5) {
                    set.insert((s, p, o));
                }
            }
        }
    }
    ZeroShotLedger(set)
}
