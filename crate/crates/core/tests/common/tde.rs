// Exact-cancellation checks for the TDE counterfactual.
#![allow(dead_code)]

use rand::Rng;
use sgg_fusion_core::debias::{self, BaselineMode, TdeSpace};
use sgg_fusion_core::fusion::{FusionConfig, FusionKind, FusionParams, PairFeatures, ParamSlot};
use sgg_fusion_core::numerics::{self, Vector};

fn uniform<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vector {
    Vector::new((0..n).map(|_| rng.random_range(-scale..scale)).collect())
}

pub fn config(kind: FusionKind, tied: bool) -> FusionConfig {
    FusionConfig {
        kind,
        d_x: 6,
        d_v: 5,
        n_predicates: 7,
        mfb_factor: 2,
        tied,
        reference_adds_prior: false,
    }
}

/// x set to the baseline feature must give an all-zero debiased vector, in
/// both TDE spaces.
pub fn nullification<R: Rng>(rng: &mut R, kind: FusionKind, mode: BaselineMode, tied: bool) -> Result<(), String> {
    let cfg = config(kind, tied);
    let params = FusionParams::init(cfg.clone(), rng).unwrap();
    let stream: Vec<Vector> = (0..20).map(|_| uniform(rng, cfg.d_x, 3.0)).collect();
    let baseline = debias::baseline_for(mode, cfg.d_x, &stream).unwrap();
    let f = PairFeatures::new(
        baseline.feature(),
        uniform(rng, cfg.d_v, 3.0),
        uniform(rng, cfg.n_predicates, 3.0),
    );
    for space in [TdeSpace::Logits, TdeSpace::Probabilities] {
        let out = debias::tde_in(&f, &params, &baseline, space).map_err(|e| e.to_string())?;
        if out.debiased.as_slice().iter().any(|&d| d != 0.0) {
            return Err(format!("{kind}/{}/{space:?}: {:?}", mode.id(), out.debiased.as_slice()));
        }
    }
    Ok(())
}

/// SUM with a zero baseline: debiased equals `Wx·x` bit for bit, whatever v and z are.
pub fn sum_cancellation<R: Rng>(rng: &mut R) -> Result<(), String> {
    let cfg = config(FusionKind::Sum, true);
    let params = FusionParams::init(cfg.clone(), rng).unwrap();
    let baseline = debias::baseline_for(BaselineMode::Zeros, cfg.d_x, []).unwrap();
    let x = uniform(rng, cfg.d_x, 5.0);
    let expected = numerics::matvec(params.get(ParamSlot::Wx).unwrap(), &x).unwrap();
    for _ in 0..3 {
        let f = PairFeatures::new(
            x.clone(),
            uniform(rng, cfg.d_v, 50.0),
            uniform(rng, cfg.n_predicates, 50.0),
        );
        let out = debias::tde(&f, &params, &baseline).map_err(|e| e.to_string())?;
        let same = out
            .debiased
            .as_slice()
            .iter()
            .zip(expected.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            return Err(format!("{:?} != {:?}", out.debiased.as_slice(), expected.as_slice()));
        }
    }
    Ok(())
}
