#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sgg_fusion_lab::config::LabConfig;

pub const TINY: &str = "\
[data]
n_scenes = 40
n_object_classes = 10
n_predicate_classes = 8
head_predicates = 2
d_x = 8
d_v = 6
objects_per_scene = [3, 6]
relations_per_scene = [2, 5]

[train]
max_iter = 120
validation_period = 40

[ablation]
ks = [5, 10]
";

pub fn tiny() -> LabConfig {
    LabConfig::parse(TINY, Path::new("tiny.toml")).unwrap()
}

/// Runs the binary in `cwd` with `SGG_LAB_OUT` cleared.
pub fn sgg_lab(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgg-lab"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SGG_LAB_OUT")
        .output()
        .unwrap()
}

pub fn write_tiny(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.toml");
    std::fs::write(&path, TINY).unwrap();
    path
}

/// Every file below `dir`, relative to it, sorted.
pub fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

/// Monte-Carlo mean and sample standard deviation of a corpus score under
/// uniformly random confidences for every (pair, predicate).
pub fn random_ranking_baseline(
    scenes: &[sgg_fusion_core::synthgen::Scene],
    n_predicates: usize,
    draws: usize,
    seed: u64,
    score: impl Fn(&[(sgg_fusion_core::metrics::PredictionSet, &sgg_fusion_core::graph::SceneGraph)]) -> f64,
) -> (f64, f64) {
    use rand::{Rng, SeedableRng};
    use sgg_fusion_core::metrics::{PredictionMode, PredictionSet, RankedPrediction};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(draws);
    for _ in 0..draws {
        let sets: Vec<_> = scenes
            .iter()
            .map(|s| {
                let mut preds = Vec::new();
                for pair in &s.pairs {
                    for p in 0..n_predicates {
                        preds.push(RankedPrediction::new(pair.subject, pair.object, p, rng.random()));
                    }
                }
                (PredictionSet::new(s.id, PredictionMode::Multigraph, preds).unwrap(), &s.graph)
            })
            .collect();
        values.push(score(&sets));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
