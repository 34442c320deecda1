//! Predicate-classification head of a scene graph generation pipeline:
//! fusion functions over pair features, Total Direct Effect debiasing,
//! a synthetic long-tail scene generator, SGG recall metrics, and a
//! mini-batch trainer.
//!
//! The crate is `no_std` and only needs `alloc`; file formats, the ablation
//! runner and the CLI live in `sgg-fusion-lab`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod debias;
pub mod fusion;
pub mod graph;
pub mod inference;
pub mod metrics;
pub mod numerics;
pub mod synthgen;
pub mod trainer;
