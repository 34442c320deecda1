//! Mini-batch SGD on softmax cross-entropy over predicate labels.
//!
//! Batches are drawn with replacement from a single ChaCha stream, so the
//! random state, the iteration counter and the optimizer state are all a
//! run needs to continue bit-for-bit from a [`Checkpoint`].

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fusion::{self, FusionError, FusionParams, PairFeatures, TapeBackend};
use crate::graph::PredicateId;
use crate::inference::argmax;
use crate::numerics::{self, Tape, TapeError};

/// A labelled training example.
pub type Example<'a> = (&'a PairFeatures, PredicateId);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(&'static str),
    #[error("no training examples")]
    EmptyData,
    #[error("label {label} out of range for {classes} predicates")]
    Label { label: PredicateId, classes: usize },
    #[error("loss or parameters stopped being finite at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("gradient layout does not match the parameters")]
    Layout,
    #[error("checkpoint does not match the training setup: {0}")]
    Checkpoint(&'static str),
    #[error("validation failed: {0}")]
    Validation(alloc::string::String),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Tape(#[from] TapeError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_iter: usize,
    /// Iterations between validation windows.
    pub validation_period: usize,
    /// Windows without improvement of validation loss before stopping.
    pub patience: usize,
    pub momentum: f64,
    /// Size of the fixed training subset the reported train loss is measured on.
    pub train_eval_samples: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 64,
            max_iter: 5000,
            validation_period: 200,
            patience: 3,
            momentum: 0.0,
            train_eval_samples: 2048,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(TrainError::Config("learning_rate must be finite and >= 0"));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be >= 1"));
        }
        if self.validation_period == 0 {
            return Err(TrainError::Config("validation_period must be >= 1"));
        }
        if self.patience == 0 {
            return Err(TrainError::Config("patience must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainError::Config("momentum must lie in [0, 1)"));
        }
        if self.train_eval_samples == 0 {
            return Err(TrainError::Config("train_eval_samples must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Validation {
    pub loss: f64,
    pub accuracy: f64,
}

/// Scores parameters at the end of a validation window.
pub trait Validator {
    fn validate(&mut self, params: &FusionParams) -> Result<Validation, TrainError>;
}

/// Mean cross-entropy and top-1 accuracy over held-out examples.
pub struct ExampleValidator<'a> {
    examples: Vec<Example<'a>>,
}

impl<'a> ExampleValidator<'a> {
    pub fn new(examples: Vec<Example<'a>>) -> Self {
        Self { examples }
    }
}

impl Validator for ExampleValidator<'_> {
    fn validate(&mut self, params: &FusionParams) -> Result<Validation, TrainError> {
        if self.examples.is_empty() {
            return Err(TrainError::Validation("no validation examples".into()));
        }
        let mut loss = 0.0;
        let mut correct = 0usize;
        for &(f, label) in &self.examples {
            let logits = fusion::fuse(f, params)?.into_vector();
            check_label(label, logits.dim())?;
            loss += numerics::cross_entropy(&logits, label);
            if argmax(&logits) == label {
                correct += 1;
            }
        }
        let n = self.examples.len() as f64;
        Ok(Validation {
            loss: loss / n,
            accuracy: correct as f64 / n,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HistoryEntry {
    pub iteration: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
    pub validation_accuracy: Option<f64>,
}

/// Position of a ChaCha8 stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EarlyStopState {
    pub best_loss: Option<f64>,
    pub best_iteration: usize,
    pub best_params: Option<FusionParams>,
    /// Consecutive windows without improvement.
    pub stale: usize,
}

/// Everything needed to continue a run exactly.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Checkpoint {
    pub params: FusionParams,
    pub iteration: usize,
    pub validation_loss: Option<f64>,
    pub rng: RngState,
    pub velocity: Option<FusionParams>,
    pub early_stop: EarlyStopState,
    pub history: Vec<HistoryEntry>,
    pub stopped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Running,
    EarlyStopped,
    Finished,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Best parameters by validation loss, or the final ones without validation.
    pub params: FusionParams,
    pub final_params: FusionParams,
    pub best_iteration: usize,
    pub iterations: usize,
    pub history: Vec<HistoryEntry>,
    pub stopped_early: bool,
}

fn check_label(label: PredicateId, classes: usize) -> Result<(), TrainError> {
    if label >= classes {
        Err(TrainError::Label { label, classes })
    } else {
        Ok(())
    }
}

/// Mean cross-entropy over `batch` and its gradient with respect to every
/// parameter slot, from one reverse sweep.
pub fn batch_loss_and_grad(
    params: &FusionParams,
    batch: &[Example<'_>],
) -> Result<(f64, FusionParams), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyData);
    }
    let config = params.config().clone();
    let mut tape = Tape::new();
    let mut backend = TapeBackend::load(&mut tape, params);
    let mut total = None;
    for &(f, label) in batch {
        check_label(label, config.n_predicates)?;
        params.check_features(f)?;
        let t = backend.tape();
        let (x, v, z) = (t.vector_leaf(&f.x), t.vector_leaf(&f.v), t.vector_leaf(&f.z));
        let logits = fusion::wire(&mut backend, &config, &x, &v, &z)?;
        let t = backend.tape();
        let ce = t.cross_entropy(logits, label)?;
        total = Some(match total {
            None => ce,
            Some(acc) => t.add(acc, ce)?,
        });
    }
    let leaves = backend.leaves().to_vec();
    let total = total.expect("batch is non-empty");
    let loss = tape.scale(total, 1.0 / batch.len() as f64)?;
    let value = tape.scalar_value(loss)?;
    let grads = tape.backward(loss)?;
    let mut out = params.zeros_like();
    for ((slot, g), (leaf_slot, id)) in out.slots_mut().iter_mut().zip(&leaves) {
        debug_assert_eq!(slot, leaf_slot);
        *g = grads.matrix(*id)?;
    }
    Ok((value, out))
}

/// Mean cross-entropy without gradients.
pub fn mean_loss(params: &FusionParams, examples: &[Example<'_>]) -> Result<f64, TrainError> {
    if examples.is_empty() {
        return Err(TrainError::EmptyData);
    }
    let mut sum = 0.0;
    for &(f, label) in examples {
        let logits = fusion::fuse(f, params)?.into_vector();
        check_label(label, logits.dim())?;
        sum += numerics::cross_entropy(&logits, label);
    }
    Ok(sum / examples.len() as f64)
}

/// `params -= lr * grads`.
pub fn sgd_step(params: &mut FusionParams, grads: &FusionParams, lr: f64) -> Result<(), TrainError> {
    axpy(params, grads, -lr)
}

fn axpy(y: &mut FusionParams, x: &FusionParams, a: f64) -> Result<(), TrainError> {
    if !y.same_layout(x) {
        return Err(TrainError::Layout);
    }
    for ((_, my), (_, mx)) in y.slots_mut().iter_mut().zip(x.slots()) {
        for (w, g) in my.as_mut_slice().iter_mut().zip(mx.as_slice()) {
            *w += a * g;
        }
    }
    Ok(())
}

fn all_finite(p: &FusionParams) -> bool {
    p.slots()
        .iter()
        .all(|(_, m)| m.as_slice().iter().all(|w| w.is_finite()))
}

/// Evenly strided subset used for the reported train loss.
fn eval_subset<'a>(data: &[Example<'a>], n: usize) -> Vec<Example<'a>> {
    if data.len() <= n {
        return data.to_vec();
    }
    (0..n).map(|i| data[i * data.len() / n]).collect()
}

pub struct Trainer<'d> {
    cfg: TrainConfig,
    data: &'d [Example<'d>],
    eval: Vec<Example<'d>>,
    rng: ChaCha8Rng,
    params: FusionParams,
    velocity: Option<FusionParams>,
    iteration: usize,
    last_validation: Option<f64>,
    early: EarlyStopState,
    history: Vec<HistoryEntry>,
    stopped: bool,
}

impl<'d> Trainer<'d> {
    pub fn new(init: FusionParams, data: &'d [Example<'d>], cfg: TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(TrainError::EmptyData);
        }
        let eval = eval_subset(data, cfg.train_eval_samples);
        let train_loss = mean_loss(&init, &eval)?;
        Ok(Self {
            velocity: (cfg.momentum > 0.0).then(|| init.zeros_like()),
            cfg,
            data,
            eval,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            params: init,
            iteration: 0,
            last_validation: None,
            early: EarlyStopState {
                best_loss: None,
                best_iteration: 0,
                best_params: None,
                stale: 0,
            },
            history: alloc::vec![HistoryEntry {
                iteration: 0,
                train_loss,
                validation_loss: None,
                validation_accuracy: None,
            }],
            stopped: false,
        })
    }

    pub fn from_checkpoint(
        checkpoint: Checkpoint,
        data: &'d [Example<'d>],
        cfg: TrainConfig,
    ) -> Result<Self, TrainError> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(TrainError::EmptyData);
        }
        if checkpoint.iteration > cfg.max_iter {
            return Err(TrainError::Checkpoint("iteration beyond max_iter"));
        }
        if (cfg.momentum > 0.0) != checkpoint.velocity.is_some() {
            return Err(TrainError::Checkpoint("momentum state does not match the config"));
        }
        if let Some(v) = &checkpoint.velocity {
            if !v.same_layout(&checkpoint.params) {
                return Err(TrainError::Checkpoint("velocity layout differs from params"));
            }
        }
        Ok(Self {
            cfg,
            data,
            eval: eval_subset(data, cfg.train_eval_samples),
            rng: checkpoint.rng.restore(),
            params: checkpoint.params,
            velocity: checkpoint.velocity,
            iteration: checkpoint.iteration,
            last_validation: checkpoint.validation_loss,
            early: checkpoint.early_stop,
            history: checkpoint.history,
            stopped: checkpoint.stopped,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn params(&self) -> &FusionParams {
        &self.params
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn status(&self) -> Status {
        if self.stopped {
            Status::EarlyStopped
        } else if self.iteration >= self.cfg.max_iter {
            Status::Finished
        } else {
            Status::Running
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            iteration: self.iteration,
            validation_loss: self.last_validation,
            rng: RngState::capture(&self.rng),
            velocity: self.velocity.clone(),
            early_stop: self.early.clone(),
            history: self.history.clone(),
            stopped: self.stopped,
        }
    }

    /// One SGD step on a freshly sampled batch.
    pub fn step(&mut self) -> Result<f64, TrainError> {
        let n = self.data.len();
        let batch: Vec<Example<'d>> = (0..self.cfg.batch_size)
            .map(|_| self.data[self.rng.random_range(0..n)])
            .collect();
        let (loss, grads) = batch_loss_and_grad(&self.params, &batch)?;
        self.iteration += 1;
        if !loss.is_finite() {
            return Err(TrainError::Diverged {
                iteration: self.iteration,
            });
        }
        match &mut self.velocity {
            Some(v) => {
                for ((_, mv), (_, mg)) in v.slots_mut().iter_mut().zip(grads.slots()) {
                    for (a, g) in mv.as_mut_slice().iter_mut().zip(mg.as_slice()) {
                        *a = self.cfg.momentum * *a + g;
                    }
                }
                axpy(&mut self.params, v, -self.cfg.learning_rate)?;
            }
            None => sgd_step(&mut self.params, &grads, self.cfg.learning_rate)?,
        }
        if !all_finite(&self.params) {
            return Err(TrainError::Diverged {
                iteration: self.iteration,
            });
        }
        Ok(loss)
    }

    fn end_window(&mut self, validator: &mut Option<&mut dyn Validator>) -> Result<(), TrainError> {
        let train_loss = mean_loss(&self.params, &self.eval)?;
        if !train_loss.is_finite() {
            return Err(TrainError::Diverged {
                iteration: self.iteration,
            });
        }
        let validation = match validator {
            Some(v) => Some(v.validate(&self.params)?),
            None => None,
        };
        self.history.push(HistoryEntry {
            iteration: self.iteration,
            train_loss,
            validation_loss: validation.map(|v| v.loss),
            validation_accuracy: validation.map(|v| v.accuracy),
        });
        if let Some(v) = validation {
            self.last_validation = Some(v.loss);
            if self.early.best_loss.is_none_or(|best| v.loss < best) {
                self.early.best_loss = Some(v.loss);
                self.early.best_iteration = self.iteration;
                self.early.best_params = Some(self.params.clone());
                self.early.stale = 0;
            } else {
                self.early.stale += 1;
                if self.early.stale >= self.cfg.patience {
                    self.stopped = true;
                }
            }
        }
        Ok(())
    }

    /// Trains until `target` iterations (capped at `max_iter`) or an early stop.
    pub fn run_until(
        &mut self,
        target: usize,
        mut validator: Option<&mut dyn Validator>,
    ) -> Result<Status, TrainError> {
        let target = target.min(self.cfg.max_iter);
        while self.status() == Status::Running && self.iteration < target {
            self.step()?;
            if self.iteration.is_multiple_of(self.cfg.validation_period) || self.iteration == self.cfg.max_iter {
                self.end_window(&mut validator)?;
            }
        }
        Ok(self.status())
    }

    pub fn run(&mut self, validator: Option<&mut dyn Validator>) -> Result<Status, TrainError> {
        self.run_until(self.cfg.max_iter, validator)
    }

    pub fn finish(self) -> TrainOutcome {
        let (params, best_iteration) = match self.early.best_params {
            Some(p) => (p, self.early.best_iteration),
            None => (self.params.clone(), self.iteration),
        };
        TrainOutcome {
            params,
            final_params: self.params,
            best_iteration,
            iterations: self.iteration,
            history: self.history,
            stopped_early: self.stopped,
        }
    }
}

/// Runs a full training loop from `init`.
pub fn train(
    init: FusionParams,
    data: &[Example<'_>],
    cfg: TrainConfig,
    validator: Option<&mut dyn Validator>,
) -> Result<TrainOutcome, TrainError> {
    let mut trainer = Trainer::new(init, data, cfg)?;
    trainer.run(validator)?;
    Ok(trainer.finish())
}

/// Continues a run from `checkpoint` to completion.
pub fn resume(
    checkpoint: Checkpoint,
    data: &[Example<'_>],
    cfg: TrainConfig,
    validator: Option<&mut dyn Validator>,
) -> Result<TrainOutcome, TrainError> {
    let mut trainer = Trainer::from_checkpoint(checkpoint, data, cfg)?;
    trainer.run(validator)?;
    Ok(trainer.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{FusionConfig, FusionKind};
    use crate::numerics::Vector;
    use alloc::vec;

    fn config(kind: FusionKind) -> FusionConfig {
        FusionConfig {
            kind,
            d_x: 3,
            d_v: 2,
            n_predicates: 3,
            mfb_factor: 2,
            ..FusionConfig::default()
        }
    }

    /// Label equals the index of the largest `x` coordinate.
    fn toy_data(n: usize, seed: u64) -> Vec<PairFeatures> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                let v: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
                PairFeatures::new(Vector::new(x), Vector::new(v), Vector::zeros(3))
            })
            .collect()
    }

    fn labelled(features: &[PairFeatures]) -> Vec<Example<'_>> {
        features.iter().map(|f| (f, argmax(&f.x))).collect()
    }

    fn init(kind: FusionKind) -> FusionParams {
        FusionParams::init(config(kind), &mut ChaCha8Rng::seed_from_u64(9)).unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_params_and_flat_history() {
        let feats = toy_data(32, 1);
        let data = labelled(&feats);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            max_iter: 20,
            validation_period: 5,
            ..TrainConfig::default()
        };
        let p0 = init(FusionKind::Gate);
        let out = train(p0.clone(), &data, cfg, None).unwrap();
        assert_eq!(out.final_params, p0);
        assert_eq!(out.history.len(), 5);
        assert!(out.history.iter().all(|h| h.train_loss == out.history[0].train_loss));
    }

    #[test]
    fn sgd_step_moves_against_gradient() {
        let feats = toy_data(8, 2);
        let data = labelled(&feats);
        let mut p = init(FusionKind::Sum);
        let (loss, g) = batch_loss_and_grad(&p, &data).unwrap();
        sgd_step(&mut p, &g, 1e-3).unwrap();
        assert!(mean_loss(&p, &data).unwrap() < loss);
        let other = FusionParams::zeros(config(FusionKind::Gate)).unwrap();
        assert_eq!(sgd_step(&mut p, &other, 0.1), Err(TrainError::Layout));
    }

    #[test]
    fn batch_loss_matches_eager_loss() {
        for kind in FusionKind::ALL {
            let feats = toy_data(5, 3);
            let data = labelled(&feats);
            let p = init(kind);
            let (loss, _) = batch_loss_and_grad(&p, &data).unwrap();
            assert!((loss - mean_loss(&p, &data).unwrap()).abs() < 1e-12, "{kind}");
        }
    }

    #[test]
    fn training_lowers_loss_for_every_kind() {
        let feats = toy_data(256, 4);
        let data = labelled(&feats);
        for kind in FusionKind::ALL {
            let cfg = TrainConfig {
                learning_rate: 0.5,
                batch_size: 16,
                max_iter: 200,
                validation_period: 50,
                ..TrainConfig::default()
            };
            let out = train(init(kind), &data, cfg, None).unwrap();
            let first = out.history.first().unwrap().train_loss;
            let last = out.history.last().unwrap().train_loss;
            assert!(last < first, "{kind}: {first} -> {last}");
        }
    }

    struct Scripted(Vec<f64>);

    impl Validator for Scripted {
        fn validate(&mut self, _: &FusionParams) -> Result<Validation, TrainError> {
            Ok(Validation {
                loss: self.0.remove(0),
                accuracy: 0.0,
            })
        }
    }

    #[test]
    fn early_stopping_returns_best_window() {
        let feats = toy_data(16, 5);
        let data = labelled(&feats);
        let cfg = TrainConfig {
            learning_rate: 0.1,
            batch_size: 4,
            max_iter: 100,
            validation_period: 10,
            patience: 2,
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(init(FusionKind::Sum), &data, cfg).unwrap();
        let mut v = Scripted(vec![1.0, 0.9, 0.95, 0.96, 0.97]);
        let mut at_20 = None;
        while trainer.status() == Status::Running {
            let next = trainer.iteration() + 10;
            trainer.run_until(next, Some(&mut v)).unwrap();
            if trainer.iteration() == 20 {
                at_20 = Some(trainer.params().clone());
            }
        }
        assert_eq!(trainer.status(), Status::EarlyStopped);
        let out = trainer.finish();
        assert_eq!(out.iterations, 40);
        assert_eq!(out.best_iteration, 20);
        assert_eq!(Some(out.params), at_20);
        assert!(out.stopped_early);
    }

    #[test]
    fn resume_is_bit_identical() {
        let feats = toy_data(64, 6);
        let data = labelled(&feats);
        let val_feats = toy_data(16, 7);
        let val = labelled(&val_feats);
        let cfg = TrainConfig {
            learning_rate: 0.2,
            batch_size: 8,
            max_iter: 60,
            validation_period: 10,
            momentum: 0.5,
            patience: 100,
            ..TrainConfig::default()
        };
        let full = train(
            init(FusionKind::MfbGate),
            &data,
            cfg,
            Some(&mut ExampleValidator::new(val.clone())),
        )
        .unwrap();

        let mut first = Trainer::new(init(FusionKind::MfbGate), &data, cfg).unwrap();
        first
            .run_until(25, Some(&mut ExampleValidator::new(val.clone())))
            .unwrap();
        let resumed = resume(
            first.checkpoint(),
            &data,
            cfg,
            Some(&mut ExampleValidator::new(val)),
        )
        .unwrap();
        assert_eq!(resumed, full);
    }

    #[test]
    fn divergence_reports_iteration() {
        let feats = toy_data(16, 8);
        let data = labelled(&feats);
        let cfg = TrainConfig {
            learning_rate: f64::MAX,
            batch_size: 4,
            max_iter: 50,
            ..TrainConfig::default()
        };
        let err = train(init(FusionKind::Sum), &data, cfg, None).unwrap_err();
        assert!(matches!(err, TrainError::Diverged { iteration } if iteration >= 1));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
            TrainConfig { learning_rate: f64::NAN, ..TrainConfig::default() },
            TrainConfig { momentum: 1.0, ..TrainConfig::default() },
            TrainConfig { validation_period: 0, ..TrainConfig::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(TrainError::Config(_))));
        }
        let data: Vec<Example<'_>> = Vec::new();
        assert_eq!(
            Trainer::new(init(FusionKind::Sum), &data, TrainConfig::default()).err(),
            Some(TrainError::EmptyData)
        );
    }
}
