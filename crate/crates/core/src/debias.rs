//! Total Direct Effect: the biased prediction minus a counterfactual
//! prediction in which the joint feature `x` is replaced by a baseline
//! (its mean over the training split, or zeros), with `v` and `z` held fixed.
//!
//! Both branches are evaluated together. Linear steps push the branch
//! difference through directly (`W·(x − x̄)`), so contributions shared by
//! both branches cancel exactly instead of up to rounding; non-linear steps
//! take the difference of their two outputs.

use alloc::vec::Vec;

use thiserror::Error;

use crate::fusion::{self, FusionBackend, FusionError, FusionParams, PairFeatures, ParamSlot, PredicateLogits};
use crate::numerics::{self, Vector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DebiasError {
    #[error("mean baseline needs at least one feature vector")]
    EmptyStream,
    #[error("baseline has dimension {baseline}, features have {features}")]
    Dim { baseline: usize, features: usize },
    #[error(transparent)]
    Fusion(#[from] FusionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum BaselineMode {
    #[default]
    Mean,
    Zeros,
}

impl BaselineMode {
    pub fn id(self) -> &'static str {
        match self {
            BaselineMode::Mean => "mean",
            BaselineMode::Zeros => "zeros",
        }
    }
}

/// Whether the subtraction happens on raw logits or after a softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum TdeSpace {
    #[default]
    Logits,
    Probabilities,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CounterfactualBaseline {
    MeanFeature(Vector),
    Zeros(usize),
}

impl CounterfactualBaseline {
    pub fn mode(&self) -> BaselineMode {
        match self {
            CounterfactualBaseline::MeanFeature(_) => BaselineMode::Mean,
            CounterfactualBaseline::Zeros(_) => BaselineMode::Zeros,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            CounterfactualBaseline::MeanFeature(v) => v.dim(),
            CounterfactualBaseline::Zeros(d) => *d,
        }
    }

    /// The vector substituted for `x` in the counterfactual branch.
    pub fn feature(&self) -> Vector {
        match self {
            CounterfactualBaseline::MeanFeature(v) => v.clone(),
            CounterfactualBaseline::Zeros(d) => Vector::zeros(*d),
        }
    }
}

/// Single-pass running mean, `m ← m + (x − m)/n`.
#[derive(Debug, Clone, Default)]
pub struct MeanAccumulator {
    mean: Option<Vec<f64>>,
    count: usize,
}

impl MeanAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: &Vector) -> Result<(), DebiasError> {
        self.count += 1;
        match &mut self.mean {
            None => self.mean = Some(x.as_slice().to_vec()),
            Some(m) => {
                if m.len() != x.dim() {
                    return Err(DebiasError::Dim {
                        baseline: m.len(),
                        features: x.dim(),
                    });
                }
                let n = self.count as f64;
                for (mi, &xi) in m.iter_mut().zip(x.as_slice()) {
                    *mi += (xi - *mi) / n;
                }
            }
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(self) -> Result<CounterfactualBaseline, DebiasError> {
        self.mean
            .map(|m| CounterfactualBaseline::MeanFeature(Vector::new(m)))
            .ok_or(DebiasError::EmptyStream)
    }
}

pub fn accumulate_mean<'a, I>(stream: I) -> Result<CounterfactualBaseline, DebiasError>
where
    I: IntoIterator<Item = &'a Vector>,
{
    let mut acc = MeanAccumulator::new();
    for x in stream {
        acc.push(x)?;
    }
    acc.finish()
}

/// Builds the baseline for `mode`, averaging `stream` when the mode needs it.
pub fn baseline_for<'a, I>(
    mode: BaselineMode,
    d_x: usize,
    stream: I,
) -> Result<CounterfactualBaseline, DebiasError>
where
    I: IntoIterator<Item = &'a Vector>,
{
    match mode {
        BaselineMode::Mean => accumulate_mean(stream),
        BaselineMode::Zeros => Ok(CounterfactualBaseline::Zeros(d_x)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TdeOutput {
    pub biased: PredicateLogits,
    pub counterfactual: PredicateLogits,
    pub debiased: PredicateLogits,
}

#[derive(Debug, Clone)]
struct Branches {
    factual: Vector,
    counterfactual: Vector,
    /// `None` when both branches are known to be identical.
    delta: Option<Vector>,
}

struct TwoBranch<'p> {
    params: &'p FusionParams,
}

impl TwoBranch<'_> {
    fn nonlinear(
        a: &Branches,
        f: impl Fn(&Vector) -> Result<Vector, FusionError>,
    ) -> Result<Branches, FusionError> {
        let factual = f(&a.factual)?;
        let counterfactual = f(&a.counterfactual)?;
        let delta = match a.delta {
            None => None,
            Some(_) => Some(numerics::sub(&factual, &counterfactual)?),
        };
        Ok(Branches {
            factual,
            counterfactual,
            delta,
        })
    }
}

fn combine(
    a: &Option<Vector>,
    b: &Option<Vector>,
    negate_b: bool,
) -> Result<Option<Vector>, FusionError> {
    Ok(match (a, b) {
        (None, None) => None,
        (Some(a), None) => Some(a.clone()),
        (None, Some(b)) if negate_b => Some(b.map(|t| -t)),
        (None, Some(b)) => Some(b.clone()),
        (Some(a), Some(b)) if negate_b => Some(numerics::sub(a, b)?),
        (Some(a), Some(b)) => Some(numerics::add(a, b)?),
    })
}

impl FusionBackend for TwoBranch<'_> {
    type Value = Branches;

    fn project(&mut self, slot: ParamSlot, input: &Branches) -> Result<Branches, FusionError> {
        let w = self.params.get(slot)?;
        Ok(Branches {
            factual: numerics::matvec(w, &input.factual)?,
            counterfactual: numerics::matvec(w, &input.counterfactual)?,
            delta: input
                .delta
                .as_ref()
                .map(|d| numerics::matvec(w, d))
                .transpose()?,
        })
    }

    fn add(&mut self, a: &Branches, b: &Branches) -> Result<Branches, FusionError> {
        Ok(Branches {
            factual: numerics::add(&a.factual, &b.factual)?,
            counterfactual: numerics::add(&a.counterfactual, &b.counterfactual)?,
            delta: combine(&a.delta, &b.delta, false)?,
        })
    }

    fn sub(&mut self, a: &Branches, b: &Branches) -> Result<Branches, FusionError> {
        Ok(Branches {
            factual: numerics::sub(&a.factual, &b.factual)?,
            counterfactual: numerics::sub(&a.counterfactual, &b.counterfactual)?,
            delta: combine(&a.delta, &b.delta, true)?,
        })
    }

    fn hadamard(&mut self, a: &Branches, b: &Branches) -> Result<Branches, FusionError> {
        let factual = numerics::hadamard(&a.factual, &b.factual)?;
        let counterfactual = numerics::hadamard(&a.counterfactual, &b.counterfactual)?;
        let delta = if a.delta.is_none() && b.delta.is_none() {
            None
        } else {
            Some(numerics::sub(&factual, &counterfactual)?)
        };
        Ok(Branches {
            factual,
            counterfactual,
            delta,
        })
    }

    fn sigmoid(&mut self, a: &Branches) -> Result<Branches, FusionError> {
        Self::nonlinear(a, |v| Ok(numerics::sigmoid(v)))
    }

    fn relu(&mut self, a: &Branches) -> Result<Branches, FusionError> {
        Self::nonlinear(a, |v| Ok(numerics::relu(v)))
    }

    fn square(&mut self, a: &Branches) -> Result<Branches, FusionError> {
        Self::nonlinear(a, |v| Ok(numerics::square(v)))
    }

    fn sum_pool(&mut self, a: &Branches, window: usize) -> Result<Branches, FusionError> {
        Ok(Branches {
            factual: numerics::sum_pool(&a.factual, window)?,
            counterfactual: numerics::sum_pool(&a.counterfactual, window)?,
            delta: a
                .delta
                .as_ref()
                .map(|d| numerics::sum_pool(d, window))
                .transpose()?,
        })
    }
}

/// TDE on raw logits.
pub fn tde(
    f: &PairFeatures,
    params: &FusionParams,
    baseline: &CounterfactualBaseline,
) -> Result<TdeOutput, DebiasError> {
    tde_in(f, params, baseline, TdeSpace::Logits)
}

pub fn tde_in(
    f: &PairFeatures,
    params: &FusionParams,
    baseline: &CounterfactualBaseline,
    space: TdeSpace,
) -> Result<TdeOutput, DebiasError> {
    if baseline.dim() != f.x.dim() {
        return Err(DebiasError::Dim {
            baseline: baseline.dim(),
            features: f.x.dim(),
        });
    }
    // Dimension checks on (x, v, z) against the parameters.
    fusion::fuse(f, params)?;

    let cf_x = baseline.feature();
    let delta_x = numerics::sub(&f.x, &cf_x).map_err(FusionError::from)?;
    let same = |v: &Vector| Branches {
        factual: v.clone(),
        counterfactual: v.clone(),
        delta: None,
    };
    let x = Branches {
        factual: f.x.clone(),
        counterfactual: cf_x,
        delta: Some(delta_x),
    };
    let out = fusion::wire(
        &mut TwoBranch { params },
        params.config(),
        &x,
        &same(&f.v),
        &same(&f.z),
    )?;
    let p = params.config().n_predicates;
    Ok(match space {
        TdeSpace::Logits => TdeOutput {
            biased: PredicateLogits(out.factual),
            counterfactual: PredicateLogits(out.counterfactual),
            debiased: PredicateLogits(out.delta.unwrap_or_else(|| Vector::zeros(p))),
        },
        TdeSpace::Probabilities => {
            let biased = numerics::softmax(&out.factual);
            let counterfactual = numerics::softmax(&out.counterfactual);
            let debiased = numerics::sub(&biased, &counterfactual).map_err(FusionError::from)?;
            TdeOutput {
                biased: PredicateLogits(biased),
                counterfactual: PredicateLogits(counterfactual),
                debiased: PredicateLogits(debiased),
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{FusionConfig, FusionKind};
    use crate::numerics::Matrix;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn mean_examples() {
        let one = Vector::from([1.0, 1.0]);
        assert_eq!(
            accumulate_mean([&one]).unwrap(),
            CounterfactualBaseline::MeanFeature(one.clone())
        );
        let (a, b) = (Vector::from([0.0, 2.0]), Vector::from([2.0, 0.0]));
        assert_eq!(
            accumulate_mean([&a, &b]).unwrap(),
            CounterfactualBaseline::MeanFeature(one)
        );
    }

    #[test]
    fn mean_of_standard_normals_is_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<Vector> = (0..1000)
            .map(|_| {
                Vector::new(
                    (0..8)
                        .map(|_| StandardNormal.sample(&mut rng))
                        .collect(),
                )
            })
            .collect();
        let m = accumulate_mean(&samples).unwrap().feature();
        assert!(m.iter().all(|c| c.abs() < 0.12), "{m:?}");
    }

    #[test]
    fn empty_and_ragged_streams_fail() {
        assert_eq!(
            accumulate_mean(core::iter::empty()).unwrap_err(),
            DebiasError::EmptyStream
        );
        let (a, b) = (Vector::from([0.0, 2.0]), Vector::from([2.0]));
        assert!(matches!(
            accumulate_mean([&a, &b]),
            Err(DebiasError::Dim { .. })
        ));
        assert_eq!(
            baseline_for(BaselineMode::Zeros, 3, core::iter::empty()).unwrap(),
            CounterfactualBaseline::Zeros(3)
        );
    }

    fn sum_params() -> FusionParams {
        let c = FusionConfig {
            kind: FusionKind::Sum,
            d_x: 2,
            d_v: 2,
            n_predicates: 2,
            ..FusionConfig::default()
        };
        FusionParams::from_slots(
            c,
            vec![
                (ParamSlot::Wx, Matrix::from_rows(&[&[0.3, -1.7], &[2.2, 0.9]]).unwrap()),
                (ParamSlot::Wv, Matrix::from_rows(&[&[1.1, 0.4], &[-0.6, 0.8]]).unwrap()),
            ],
        )
        .unwrap()
    }

    #[test]
    fn sum_with_zero_baseline_is_projection() {
        let p = sum_params();
        let x = Vector::from([0.123, -4.56]);
        let f = PairFeatures::new(x.clone(), Vector::from([7.7, -0.01]), Vector::from([1e3, -2.5]));
        let out = tde(&f, &p, &CounterfactualBaseline::Zeros(2)).unwrap();
        let expected = numerics::matvec(p.get(ParamSlot::Wx).unwrap(), &x).unwrap();
        assert_eq!(out.debiased.0, expected);
    }

    #[test]
    fn identical_branches_cancel() {
        let p = sum_params();
        let x = Vector::from([0.5, 0.25]);
        let f = PairFeatures::new(x.clone(), Vector::from([1.0, 2.0]), Vector::from([3.0, 4.0]));
        let out = tde(&f, &p, &CounterfactualBaseline::MeanFeature(x)).unwrap();
        assert_eq!(out.debiased.0, Vector::zeros(2));
    }

    #[test]
    fn baseline_dimension_is_checked() {
        let p = sum_params();
        let f = PairFeatures::new(Vector::zeros(2), Vector::zeros(2), Vector::zeros(2));
        assert_eq!(
            tde(&f, &p, &CounterfactualBaseline::Zeros(3)).unwrap_err(),
            DebiasError::Dim {
                baseline: 3,
                features: 2
            }
        );
    }

    #[test]
    fn probability_space_differences_sum_to_zero() {
        let p = sum_params();
        let f = PairFeatures::new(Vector::from([1.0, -1.0]), Vector::from([0.2, 0.1]), Vector::from([0.0, 1.0]));
        let out = tde_in(&f, &p, &CounterfactualBaseline::Zeros(2), TdeSpace::Probabilities).unwrap();
        let total: f64 = out.debiased.as_slice().iter().sum();
        assert!(total.abs() < 1e-15);
        assert!((out.biased.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
