mod common;

use common::tde;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sgg_fusion_core::debias::{self, BaselineMode, CounterfactualBaseline};
use sgg_fusion_core::fusion::{FusionKind, FusionParams, PairFeatures};
use sgg_fusion_core::numerics::Vector;

#[test]
fn baseline_input_is_nullified_for_every_kind_and_mode() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for kind in FusionKind::ALL {
        for mode in [BaselineMode::Mean, BaselineMode::Zeros] {
            for tied in [true, false] {
                tde::nullification(&mut rng, kind, mode, tied).unwrap();
            }
        }
    }
}

#[test]
fn sum_with_zero_baseline_is_the_visual_term() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        tde::sum_cancellation(&mut rng).unwrap();
    }
}

fn kind_strategy() -> impl Strategy<Value = FusionKind> {
    prop::sample::select(FusionKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn debiased_is_biased_minus_counterfactual(
        kind in kind_strategy(),
        seed in any::<u64>(),
        xs in prop::collection::vec(-3.0f64..3.0, 6),
        vs in prop::collection::vec(-3.0f64..3.0, 5),
        zs in prop::collection::vec(-3.0f64..3.0, 7),
    ) {
        let params = FusionParams::init(tde::config(kind, true), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let f = PairFeatures::new(Vector::new(xs), Vector::new(vs), Vector::new(zs));
        let baseline = CounterfactualBaseline::MeanFeature(Vector::filled(6, 0.25));
        let out = debias::tde(&f, &params, &baseline).unwrap();
        for ((d, b), c) in out.debiased.as_slice().iter().zip(out.biased.as_slice()).zip(out.counterfactual.as_slice()) {
            prop_assert!((d - (b - c)).abs() <= 1e-12 * (1.0 + b.abs() + c.abs()));
        }
    }

    #[test]
    fn sum_debiased_ignores_v_and_z(
        seed in any::<u64>(),
        v1 in prop::collection::vec(-10.0f64..10.0, 5),
        v2 in prop::collection::vec(-10.0f64..10.0, 5),
        z1 in prop::collection::vec(-10.0f64..10.0, 7),
        z2 in prop::collection::vec(-10.0f64..10.0, 7),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = FusionParams::init(tde::config(FusionKind::Sum, true), &mut rng).unwrap();
        let x = Vector::new((0..6).map(|i| i as f64 - 2.5).collect());
        let baseline = CounterfactualBaseline::MeanFeature(Vector::filled(6, 0.5));
        let a = debias::tde(&PairFeatures::new(x.clone(), Vector::new(v1), Vector::new(z1)), &params, &baseline).unwrap();
        let b = debias::tde(&PairFeatures::new(x, Vector::new(v2), Vector::new(z2)), &params, &baseline).unwrap();
        prop_assert_eq!(a.debiased, b.debiased);
    }
}
