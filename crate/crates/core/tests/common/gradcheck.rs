// Central finite differences against the tape gradients of every fusion kind.
#![allow(dead_code)]

use rand::Rng;
use sgg_fusion_core::fusion::{self, FusionConfig, FusionKind, FusionParams, PairFeatures, TapeBackend};
use sgg_fusion_core::numerics::{self, NodeId, Tape, Vector};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-5;
/// Minimum |u_i·w_i| for a DIST_REF point to count as away from the ReLU kink.
pub const KINK_MARGIN: f64 = 1e-3;

#[derive(Debug, Default, Clone, Copy)]
pub struct Stats {
    pub points: usize,
    pub coordinates: usize,
    pub resampled: usize,
    pub worst: f64,
}

fn uniform<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vector {
    Vector::new((0..n).map(|_| rng.random_range(lo..hi)).collect())
}

/// Loss = mean(r ⊙ f(x, v, z)), a generic scalar read-out of the fusion output.
fn loss(params: &FusionParams, f: &PairFeatures, r: &Vector) -> f64 {
    let out = fusion::fuse(f, params).unwrap().into_vector();
    numerics::mean(&numerics::hadamard(&out, r).unwrap())
}

fn near_kink(params: &FusionParams, f: &PairFeatures) -> bool {
    use sgg_fusion_core::fusion::ParamSlot;
    if params.kind() != FusionKind::DistRef {
        return false;
    }
    let u = numerics::matvec(params.get(ParamSlot::Wx).unwrap(), &f.x).unwrap();
    let w = numerics::matvec(params.get(ParamSlot::Wv).unwrap(), &f.v).unwrap();
    u.iter().zip(w.iter()).any(|(a, b)| (a * b).abs() < KINK_MARGIN)
}

fn relative_error(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - n).abs() / scale
    }
}

pub fn random_config<R: Rng>(rng: &mut R, kind: FusionKind) -> FusionConfig {
    FusionConfig {
        kind,
        d_x: 5,
        d_v: 4,
        n_predicates: 4,
        mfb_factor: 3,
        tied: rng.random_bool(0.5),
        reference_adds_prior: rng.random_bool(0.5),
    }
}

/// Checks `points` random points of `kind`; returns the first failing
/// coordinate as an error.
pub fn check_kind<R: Rng>(rng: &mut R, kind: FusionKind, points: usize) -> Result<Stats, String> {
    let mut stats = Stats::default();
    while stats.points < points {
        let config = random_config(rng, kind);
        let mut params = FusionParams::init(config.clone(), rng).unwrap();
        for (_, m) in params.slots_mut() {
            for w in m.as_mut_slice() {
                *w *= 2.0;
            }
        }
        let f = PairFeatures::new(
            uniform(rng, config.d_x, -1.0, 1.0),
            uniform(rng, config.d_v, -1.0, 1.0),
            uniform(rng, config.n_predicates, -1.0, 1.0),
        );
        if near_kink(&params, &f) {
            stats.resampled += 1;
            continue;
        }
        let r = Vector::new(
            (0..config.n_predicates)
                .map(|_| {
                    let m = rng.random_range(0.5..1.5);
                    if rng.random_bool(0.5) { m } else { -m }
                })
                .collect(),
        );

        let mut tape = Tape::new();
        let mut backend = TapeBackend::load(&mut tape, &params);
        let t = backend.tape();
        let (x, v, z) = (t.vector_leaf(&f.x), t.vector_leaf(&f.v), t.vector_leaf(&f.z));
        let out = fusion::wire(&mut backend, &config, &x, &v, &z).unwrap();
        let leaves = backend.leaves().to_vec();
        let rl = tape.vector_leaf(&r);
        let weighted = tape.hadamard(out, rl).unwrap();
        let l = tape.mean(weighted).unwrap();
        let grads = tape.backward(l).unwrap();

        let mut compare = |what: &str, analytic: f64, numeric: f64| -> Result<(), String> {
            let e = relative_error(analytic, numeric);
            stats.coordinates += 1;
            stats.worst = stats.worst.max(e);
            if e < TOLERANCE {
                Ok(())
            } else {
                Err(format!(
                    "{kind} {what}: analytic {analytic:e} vs numeric {numeric:e} (rel {e:e})"
                ))
            }
        };

        for (i, (slot, id)) in leaves.iter().enumerate() {
            let g = grads.matrix(*id).unwrap();
            for j in 0..g.as_slice().len() {
                let mut plus = params.clone();
                plus.slots_mut()[i].1.as_mut_slice()[j] += STEP;
                let mut minus = params.clone();
                minus.slots_mut()[i].1.as_mut_slice()[j] -= STEP;
                let numeric = (loss(&plus, &f, &r) - loss(&minus, &f, &r)) / (2.0 * STEP);
                compare(&format!("{}[{j}]", slot.name()), g.as_slice()[j], numeric)?;
            }
        }
        for (name, id) in [("x", x), ("v", v), ("z", z)] {
            input_grads(&params, &f, &r, name, id, &grads, &mut compare)?;
        }
        stats.points += 1;
    }
    Ok(stats)
}

fn input_grads(
    params: &FusionParams,
    f: &PairFeatures,
    r: &Vector,
    name: &str,
    id: NodeId,
    grads: &numerics::Gradients,
    compare: &mut impl FnMut(&str, f64, f64) -> Result<(), String>,
) -> Result<(), String> {
    let g = grads.vector(id).unwrap();
    for j in 0..g.dim() {
        let shift = |delta: f64| {
            let mut f = f.clone();
            let target = match name {
                "x" => &mut f.x,
                "v" => &mut f.v,
                _ => &mut f.z,
            };
            target.as_mut_slice()[j] += delta;
            loss(params, &f, r)
        };
        let numeric = (shift(STEP) - shift(-STEP)) / (2.0 * STEP);
        compare(&format!("{name}[{j}]"), g[j], numeric)?;
    }
    Ok(())
}
