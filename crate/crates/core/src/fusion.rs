//! The six fusion functions mapping a pair's three hidden states
//! `(x, v, z)` to predicate logits.
//!
//! | id         | logits                                              |
//! |------------|-----------------------------------------------------|
//! | `sum`      | `Wx·x + Wv·v + z`                                   |
//! | `gate`     | `(Wr·x) ⊙ σ(Wx·x + Wv·v + z)`                       |
//! | `dist-ref` | `ReLU(Wx·x ⊙ Wv·v) − (Wx·x − Wv·v)²`                |
//! | `mfb-ref`  | `SumPool_k(Ux·x ⊙ Uv·v)`                            |
//! | `dist`     | `σ(Wx·x + Wv·v + z) − σ(Wx·x − Wv·v)²`              |
//! | `mfb-gate` | `σ(Wx·x ⊙ Wv·v) ⊙ σ(Wx·x + Wv·v + z)`               |
//!
//! `dist-ref` and `mfb-ref` are two-input functions; inside the three-input
//! pipeline they consume `(x, v)` and add `z` afterwards only when
//! [`FusionConfig::reference_adds_prior`] is set.
//!
//! Every function is written once against [`FusionBackend`], so the eager
//! evaluator, the gradient tape and the counterfactual evaluator in
//! [`crate::debias`] all share the same wiring.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::numerics::{self, Matrix, NodeId, ShapeError, Tape, TapeError, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FusionKind {
    #[cfg_attr(feature = "serde", serde(rename = "sum"))]
    Sum,
    #[cfg_attr(feature = "serde", serde(rename = "gate"))]
    Gate,
    #[cfg_attr(feature = "serde", serde(rename = "dist-ref"))]
    DistRef,
    #[cfg_attr(feature = "serde", serde(rename = "mfb-ref"))]
    MfbRef,
    #[cfg_attr(feature = "serde", serde(rename = "dist"))]
    Dist,
    #[cfg_attr(feature = "serde", serde(rename = "mfb-gate"))]
    MfbGate,
}

impl FusionKind {
    pub const ALL: [FusionKind; 6] = [
        FusionKind::Sum,
        FusionKind::Gate,
        FusionKind::DistRef,
        FusionKind::MfbRef,
        FusionKind::Dist,
        FusionKind::MfbGate,
    ];

    /// Stable identifier used in CLI flags and report keys.
    pub fn id(self) -> &'static str {
        match self {
            FusionKind::Sum => "sum",
            FusionKind::Gate => "gate",
            FusionKind::DistRef => "dist-ref",
            FusionKind::MfbRef => "mfb-ref",
            FusionKind::Dist => "dist",
            FusionKind::MfbGate => "mfb-gate",
        }
    }

    fn is_reference(self) -> bool {
        matches!(self, FusionKind::DistRef | FusionKind::MfbRef)
    }
}

impl fmt::Display for FusionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown fusion id `{0}` (valid: sum, gate, dist-ref, mfb-ref, dist, mfb-gate)")]
pub struct UnknownFusion(pub alloc::string::String);

impl FromStr for FusionKind {
    type Err = UnknownFusion;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FusionKind::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| UnknownFusion(s.into()))
    }
}

/// Named parameter matrices. The `Aux` slots exist only when the weights of
/// the second term of `dist`/`mfb-gate` are untied from the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ParamSlot {
    Wx,
    Wv,
    Wr,
    Ux,
    Uv,
    WxAux,
    WvAux,
}

impl ParamSlot {
    pub const ALL: [ParamSlot; 7] = [
        ParamSlot::Wx,
        ParamSlot::Wv,
        ParamSlot::Wr,
        ParamSlot::Ux,
        ParamSlot::Uv,
        ParamSlot::WxAux,
        ParamSlot::WvAux,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamSlot::Wx => "w_x",
            ParamSlot::Wv => "w_v",
            ParamSlot::Wr => "w_r",
            ParamSlot::Ux => "u_x",
            ParamSlot::Uv => "u_v",
            ParamSlot::WxAux => "w_x_aux",
            ParamSlot::WvAux => "w_v_aux",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("expected fusion kind {expected}, parameters are for {found}")]
    WrongKind {
        expected: FusionKind,
        found: FusionKind,
    },
    #[error("{what}: expected dimension {expected}, got {found}")]
    FeatureDim {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("parameter {0:?} is not present for this fusion kind")]
    MissingParam(ParamSlot),
    #[error("parameter {slot:?} has shape {found:?}, expected {expected:?}")]
    ParamShape {
        slot: ParamSlot,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("invalid fusion config: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Tape(#[from] TapeError),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct FusionConfig {
    pub kind: FusionKind,
    pub d_x: usize,
    pub d_v: usize,
    pub n_predicates: usize,
    /// SumPool expansion factor of `mfb-ref`.
    pub mfb_factor: usize,
    /// Share `Wx`/`Wv` between the two terms of `dist` and `mfb-gate`.
    pub tied: bool,
    /// Add `z` to the output of the two-input reference functions.
    pub reference_adds_prior: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            kind: FusionKind::Sum,
            d_x: 64,
            d_v: 64,
            n_predicates: 50,
            mfb_factor: 5,
            tied: true,
            reference_adds_prior: false,
        }
    }
}

impl FusionConfig {
    pub fn with_kind(&self, kind: FusionKind) -> Self {
        Self {
            kind,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        if self.d_x == 0 || self.d_v == 0 {
            return Err(FusionError::Config("feature dimensions must be positive"));
        }
        if self.n_predicates == 0 {
            return Err(FusionError::Config("n_predicates must be positive"));
        }
        if self.kind == FusionKind::MfbRef && self.mfb_factor == 0 {
            return Err(FusionError::Config("mfb_factor must be positive"));
        }
        Ok(())
    }

    /// The parameter matrices this configuration needs, with their shapes.
    pub fn layout(&self) -> Vec<(ParamSlot, usize, usize)> {
        let p = self.n_predicates;
        let (dx, dv) = (self.d_x, self.d_v);
        let mut out = Vec::new();
        match self.kind {
            FusionKind::Sum | FusionKind::DistRef => {
                out.push((ParamSlot::Wx, p, dx));
                out.push((ParamSlot::Wv, p, dv));
            }
            FusionKind::Gate => {
                out.push((ParamSlot::Wx, p, dx));
                out.push((ParamSlot::Wv, p, dv));
                out.push((ParamSlot::Wr, p, dx));
            }
            FusionKind::MfbRef => {
                out.push((ParamSlot::Ux, self.mfb_factor * p, dx));
                out.push((ParamSlot::Uv, self.mfb_factor * p, dv));
            }
            FusionKind::Dist | FusionKind::MfbGate => {
                out.push((ParamSlot::Wx, p, dx));
                out.push((ParamSlot::Wv, p, dv));
                if !self.tied {
                    out.push((ParamSlot::WxAux, p, dx));
                    out.push((ParamSlot::WvAux, p, dv));
                }
            }
        }
        out
    }

    fn second_term_slots(&self) -> (ParamSlot, ParamSlot) {
        if self.tied {
            (ParamSlot::Wx, ParamSlot::Wv)
        } else {
            (ParamSlot::WxAux, ParamSlot::WvAux)
        }
    }
}

/// The trainable state of one fusion function.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FusionParams {
    config: FusionConfig,
    slots: Vec<(ParamSlot, Matrix)>,
}

impl FusionParams {
    pub fn zeros(config: FusionConfig) -> Result<Self, FusionError> {
        config.validate()?;
        let slots = config
            .layout()
            .into_iter()
            .map(|(slot, r, c)| (slot, Matrix::zeros(r, c)))
            .collect();
        Ok(Self { config, slots })
    }

    /// Uniform initialization in `[-1/√fan_in, 1/√fan_in]`.
    pub fn init<R: Rng + ?Sized>(config: FusionConfig, rng: &mut R) -> Result<Self, FusionError> {
        let mut params = Self::zeros(config)?;
        for (_, m) in params.slots.iter_mut() {
            let bound = 1.0 / libm::sqrt(m.cols() as f64);
            for w in m.as_mut_slice() {
                *w = rng.random_range(-bound..=bound);
            }
        }
        Ok(params)
    }

    /// Assembles parameters from explicit matrices, checking that exactly the
    /// slots required by `config` are present with the right shapes.
    pub fn from_slots(
        config: FusionConfig,
        mut slots: Vec<(ParamSlot, Matrix)>,
    ) -> Result<Self, FusionError> {
        config.validate()?;
        let layout = config.layout();
        let mut ordered = Vec::with_capacity(layout.len());
        for (slot, r, c) in layout {
            let pos = slots
                .iter()
                .position(|(s, _)| *s == slot)
                .ok_or(FusionError::MissingParam(slot))?;
            let (_, m) = slots.swap_remove(pos);
            if m.shape() != (r, c) {
                return Err(FusionError::ParamShape {
                    slot,
                    expected: (r, c),
                    found: m.shape(),
                });
            }
            ordered.push((slot, m));
        }
        if !slots.is_empty() {
            return Err(FusionError::Config(
                "unexpected parameter for this fusion kind",
            ));
        }
        Ok(Self {
            config,
            slots: ordered,
        })
    }

    pub fn config(&self) -> &FusionConfig {
        &self.config
    }

    pub fn kind(&self) -> FusionKind {
        self.config.kind
    }

    pub fn get(&self, slot: ParamSlot) -> Result<&Matrix, FusionError> {
        self.slots
            .iter()
            .find(|(s, _)| *s == slot)
            .map(|(_, m)| m)
            .ok_or(FusionError::MissingParam(slot))
    }

    pub fn get_mut(&mut self, slot: ParamSlot) -> Result<&mut Matrix, FusionError> {
        self.slots
            .iter_mut()
            .find(|(s, _)| *s == slot)
            .map(|(_, m)| m)
            .ok_or(FusionError::MissingParam(slot))
    }

    pub fn slots(&self) -> &[(ParamSlot, Matrix)] {
        &self.slots
    }

    pub fn slots_mut(&mut self) -> &mut [(ParamSlot, Matrix)] {
        &mut self.slots
    }

    pub fn n_weights(&self) -> usize {
        self.slots.iter().map(|(_, m)| m.as_slice().len()).sum()
    }

    /// Same layout, every entry zero; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            slots: self
                .slots
                .iter()
                .map(|(s, m)| (*s, Matrix::zeros(m.rows(), m.cols())))
                .collect(),
        }
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.slots.len() == other.slots.len()
            && self
                .slots
                .iter()
                .zip(&other.slots)
                .all(|((a, ma), (b, mb))| a == b && ma.shape() == mb.shape())
    }

    pub fn check_features(&self, f: &PairFeatures) -> Result<(), FusionError> {
        let c = &self.config;
        for (what, expected, found) in [
            ("x", c.d_x, f.x.dim()),
            ("v", c.d_v, f.v.dim()),
            ("z", c.n_predicates, f.z.dim()),
        ] {
            if expected != found {
                return Err(FusionError::FeatureDim {
                    what,
                    expected,
                    found,
                });
            }
        }
        Ok(())
    }
}

/// The three hidden states of one ordered object pair.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PairFeatures {
    /// Joint feature of the two objects.
    pub x: Vector,
    /// Visual context of the union box.
    pub v: Vector,
    /// Class-prior logits over predicates.
    pub z: Vector,
}

impl PairFeatures {
    pub fn new(x: Vector, v: Vector, z: Vector) -> Self {
        Self { x, v, z }
    }
}

/// Fusion output, one logit per predicate class.
#[derive(Debug, Clone, PartialEq)]
pub struct PredicateLogits(pub Vector);

impl PredicateLogits {
    pub fn as_vector(&self) -> &Vector {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn into_vector(self) -> Vector {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }
}

/// The primitive operations a fusion function is wired from.
pub trait FusionBackend {
    type Value: Clone;

    fn project(&mut self, slot: ParamSlot, input: &Self::Value) -> Result<Self::Value, FusionError>;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value, FusionError>;
    fn sub(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value, FusionError>;
    fn hadamard(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value, FusionError>;
    fn sigmoid(&mut self, a: &Self::Value) -> Result<Self::Value, FusionError>;
    fn relu(&mut self, a: &Self::Value) -> Result<Self::Value, FusionError>;
    fn square(&mut self, a: &Self::Value) -> Result<Self::Value, FusionError>;
    fn sum_pool(&mut self, a: &Self::Value, window: usize) -> Result<Self::Value, FusionError>;
}

/// Wires the fusion function selected by `config.kind`.
pub fn wire<B: FusionBackend>(
    b: &mut B,
    config: &FusionConfig,
    x: &B::Value,
    v: &B::Value,
    z: &B::Value,
) -> Result<B::Value, FusionError> {
    use ParamSlot::*;
    let out = match config.kind {
        FusionKind::Sum => {
            let px = b.project(Wx, x)?;
            let pv = b.project(Wv, v)?;
            let s = b.add(&px, &pv)?;
            b.add(&s, z)?
        }
        FusionKind::Gate => {
            let px = b.project(Wx, x)?;
            let pv = b.project(Wv, v)?;
            let s = b.add(&px, &pv)?;
            let s = b.add(&s, z)?;
            let gate = b.sigmoid(&s)?;
            let r = b.project(Wr, x)?;
            b.hadamard(&r, &gate)?
        }
        FusionKind::DistRef => {
            let px = b.project(Wx, x)?;
            let pv = b.project(Wv, v)?;
            let prod = b.hadamard(&px, &pv)?;
            let rect = b.relu(&prod)?;
            let diff = b.sub(&px, &pv)?;
            let sq = b.square(&diff)?;
            b.sub(&rect, &sq)?
        }
        FusionKind::MfbRef => {
            let px = b.project(Ux, x)?;
            let pv = b.project(Uv, v)?;
            let prod = b.hadamard(&px, &pv)?;
            b.sum_pool(&prod, config.mfb_factor)?
        }
        FusionKind::Dist => {
            let (ax, av) = config.second_term_slots();
            let px = b.project(Wx, x)?;
            let pv = b.project(Wv, v)?;
            let s = b.add(&px, &pv)?;
            let s = b.add(&s, z)?;
            let first = b.sigmoid(&s)?;
            let (qx, qv) = if config.tied {
                (px, pv)
            } else {
                (b.project(ax, x)?, b.project(av, v)?)
            };
            let d = b.sub(&qx, &qv)?;
            let d = b.sigmoid(&d)?;
            let d = b.square(&d)?;
            b.sub(&first, &d)?
        }
        FusionKind::MfbGate => {
            let (ax, av) = config.second_term_slots();
            let px = b.project(Wx, x)?;
            let pv = b.project(Wv, v)?;
            let prod = b.hadamard(&px, &pv)?;
            let coattn = b.sigmoid(&prod)?;
            let (qx, qv) = if config.tied {
                (px, pv)
            } else {
                (b.project(ax, x)?, b.project(av, v)?)
            };
            let s = b.add(&qx, &qv)?;
            let s = b.add(&s, z)?;
            let gate = b.sigmoid(&s)?;
            b.hadamard(&coattn, &gate)?
        }
    };
    if config.kind.is_reference() && config.reference_adds_prior {
        b.add(&out, z)
    } else {
        Ok(out)
    }
}

/// Direct evaluation on owned vectors.
pub struct Eager<'p> {
    params: &'p FusionParams,
}

impl<'p> Eager<'p> {
    pub fn new(params: &'p FusionParams) -> Self {
        Self { params }
    }
}

impl FusionBackend for Eager<'_> {
    type Value = Vector;

    fn project(&mut self, slot: ParamSlot, input: &Vector) -> Result<Vector, FusionError> {
        Ok(numerics::matvec(self.params.get(slot)?, input)?)
    }
    fn add(&mut self, a: &Vector, b: &Vector) -> Result<Vector, FusionError> {
        Ok(numerics::add(a, b)?)
    }
    fn sub(&mut self, a: &Vector, b: &Vector) -> Result<Vector, FusionError> {
        Ok(numerics::sub(a, b)?)
    }
    fn hadamard(&mut self, a: &Vector, b: &Vector) -> Result<Vector, FusionError> {
        Ok(numerics::hadamard(a, b)?)
    }
    fn sigmoid(&mut self, a: &Vector) -> Result<Vector, FusionError> {
        Ok(numerics::sigmoid(a))
    }
    fn relu(&mut self, a: &Vector) -> Result<Vector, FusionError> {
        Ok(numerics::relu(a))
    }
    fn square(&mut self, a: &Vector) -> Result<Vector, FusionError> {
        Ok(numerics::square(a))
    }
    fn sum_pool(&mut self, a: &Vector, window: usize) -> Result<Vector, FusionError> {
        Ok(numerics::sum_pool(a, window)?)
    }
}

/// Records the fusion on a [`Tape`] against parameter leaves placed there by
/// [`TapeBackend::load`].
pub struct TapeBackend<'t> {
    tape: &'t mut Tape,
    leaves: Vec<(ParamSlot, NodeId)>,
}

impl<'t> TapeBackend<'t> {
    pub fn load(tape: &'t mut Tape, params: &FusionParams) -> Self {
        let leaves = params
            .slots()
            .iter()
            .map(|(slot, m)| (*slot, tape.matrix_leaf(m)))
            .collect();
        Self { tape, leaves }
    }

    pub fn leaves(&self) -> &[(ParamSlot, NodeId)] {
        &self.leaves
    }

    pub fn tape(&mut self) -> &mut Tape {
        self.tape
    }
}

impl FusionBackend for TapeBackend<'_> {
    type Value = NodeId;

    fn project(&mut self, slot: ParamSlot, input: &NodeId) -> Result<NodeId, FusionError> {
        let w = self
            .leaves
            .iter()
            .find(|(s, _)| *s == slot)
            .map(|(_, id)| *id)
            .ok_or(FusionError::MissingParam(slot))?;
        Ok(self.tape.matvec(w, *input)?)
    }
    fn add(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId, FusionError> {
        Ok(self.tape.add(*a, *b)?)
    }
    fn sub(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId, FusionError> {
        Ok(self.tape.sub(*a, *b)?)
    }
    fn hadamard(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId, FusionError> {
        Ok(self.tape.hadamard(*a, *b)?)
    }
    fn sigmoid(&mut self, a: &NodeId) -> Result<NodeId, FusionError> {
        Ok(self.tape.sigmoid(*a)?)
    }
    fn relu(&mut self, a: &NodeId) -> Result<NodeId, FusionError> {
        Ok(self.tape.relu(*a)?)
    }
    fn square(&mut self, a: &NodeId) -> Result<NodeId, FusionError> {
        Ok(self.tape.square(*a)?)
    }
    fn sum_pool(&mut self, a: &NodeId, window: usize) -> Result<NodeId, FusionError> {
        Ok(self.tape.sum_pool(*a, window)?)
    }
}

/// Evaluates whichever fusion function `params` was built for.
pub fn fuse(f: &PairFeatures, params: &FusionParams) -> Result<PredicateLogits, FusionError> {
    params.check_features(f)?;
    let out = wire(&mut Eager::new(params), params.config(), &f.x, &f.v, &f.z)?;
    Ok(PredicateLogits(out))
}

fn fuse_as(
    kind: FusionKind,
    f: &PairFeatures,
    params: &FusionParams,
) -> Result<PredicateLogits, FusionError> {
    if params.kind() != kind {
        return Err(FusionError::WrongKind {
            expected: kind,
            found: params.kind(),
        });
    }
    fuse(f, params)
}

pub fn fuse_sum(f: &PairFeatures, p: &FusionParams) -> Result<PredicateLogits, FusionError> {
    fuse_as(FusionKind::Sum, f, p)
}

pub fn fuse_gate(f: &PairFeatures, p: &FusionParams) -> Result<PredicateLogits, FusionError> {
    fuse_as(FusionKind::Gate, f, p)
}

pub fn fuse_dist_adapted(
    f: &PairFeatures,
    p: &FusionParams,
) -> Result<PredicateLogits, FusionError> {
    fuse_as(FusionKind::Dist, f, p)
}

pub fn fuse_mfb_gate(f: &PairFeatures, p: &FusionParams) -> Result<PredicateLogits, FusionError> {
    fuse_as(FusionKind::MfbGate, f, p)
}

fn fuse_two_input(
    kind: FusionKind,
    a: &Vector,
    b: &Vector,
    p: &FusionParams,
) -> Result<Vector, FusionError> {
    if p.kind() != kind {
        return Err(FusionError::WrongKind {
            expected: kind,
            found: p.kind(),
        });
    }
    let config = FusionConfig {
        reference_adds_prior: false,
        ..p.config().clone()
    };
    let unused = Vector::zeros(0);
    wire(&mut Eager::new(p), &config, a, b, &unused)
}

/// Two-input distance fusion `ReLU(Wx·a ⊙ Wv·b) − (Wx·a − Wv·b)²`.
pub fn fuse_dist_ref(a: &Vector, b: &Vector, p: &FusionParams) -> Result<Vector, FusionError> {
    fuse_two_input(FusionKind::DistRef, a, b, p)
}

/// Two-input factorized bilinear pooling `SumPool_k(Ux·a ⊙ Uv·b)`.
pub fn fuse_mfb_ref(a: &Vector, b: &Vector, p: &FusionParams) -> Result<Vector, FusionError> {
    fuse_two_input(FusionKind::MfbRef, a, b, p)
}
