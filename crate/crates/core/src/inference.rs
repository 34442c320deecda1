//! Turning fused predicate scores into ranked scene predictions.

use alloc::vec::Vec;

use crate::debias::{self, CounterfactualBaseline, DebiasError, TdeSpace};
use crate::fusion::{self, FusionParams, PairFeatures};
use crate::metrics::{PredictionMode, PredictionSet, RankedPrediction};
use crate::numerics::{self, Vector};
use crate::synthgen::Scene;

#[derive(Debug, Clone, PartialEq)]
pub enum Scoring {
    /// Softmax of the fused logits.
    Biased,
    /// TDE scores against a counterfactual baseline.
    Tde {
        baseline: CounterfactualBaseline,
        space: TdeSpace,
    },
}

impl Scoring {
    pub fn tde(baseline: CounterfactualBaseline) -> Self {
        Scoring::Tde {
            baseline,
            space: TdeSpace::default(),
        }
    }
}

/// Per-predicate confidence of one pair.
pub fn pair_scores(
    params: &FusionParams,
    features: &PairFeatures,
    scoring: &Scoring,
) -> Result<Vector, DebiasError> {
    match scoring {
        Scoring::Biased => Ok(numerics::softmax(fusion::fuse(features, params)?.as_vector())),
        Scoring::Tde { baseline, space } => {
            Ok(debias::tde_in(features, params, baseline, *space)?.debiased.into_vector())
        }
    }
}

/// Multigraph predictions for every candidate pair of `scene`: one entry per
/// `(pair, predicate)`.
pub fn predict_scene(
    params: &FusionParams,
    scene: &Scene,
    scoring: &Scoring,
) -> Result<PredictionSet, DebiasError> {
    let mut predictions = Vec::with_capacity(scene.pairs.len() * params.config().n_predicates);
    for pair in &scene.pairs {
        let scores = pair_scores(params, &pair.features, scoring)?;
        predictions.extend(
            scores
                .iter()
                .enumerate()
                .map(|(p, &c)| RankedPrediction::new(pair.subject, pair.object, p, c)),
        );
    }
    Ok(PredictionSet {
        scene_id: scene.id,
        mode: PredictionMode::Multigraph,
        predictions,
    })
}

/// Index of the largest entry; ties go to the lower index.
pub fn argmax(v: &Vector) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
