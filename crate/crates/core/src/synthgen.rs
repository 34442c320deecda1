//! Synthetic scenes with a known generative model, standing in for the
//! detector, context encoder and class-prior networks upstream of fusion.
//!
//! For each related pair a latent visual cluster `c` is drawn from the
//! cluster marginal of the predicate prior, and the joint feature is
//! `x ~ N(e_c, σ²I)` around a fixed cluster embedding `e_c`. The predicate is
//! then drawn from the mixture
//!
//! ```text
//! λ · prior(subject class, object class) + (1 − λ) · uniform(cluster c)
//! ```
//!
//! so `x` carries predicate signal only when `λ < 1`, while `z` is the log of
//! the pair-conditional prior plus small noise and carries exactly the
//! language bias. The union-box context `v` is a noisy embedding of the box
//! geometry.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal, StandardNormal};
use thiserror::Error;

use crate::fusion::PairFeatures;
use crate::graph::{BBox, ClassId, ClassTriplet, ObjectId, PredicateId, Relation, SceneGraph, SceneObject};
use crate::numerics::{self, Matrix, Vector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid config `{key}`: {reason}")]
    Config {
        key: &'static str,
        reason: &'static str,
    },
}

fn config_err(key: &'static str, reason: &'static str) -> SynthError {
    SynthError::Config { key, reason }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct SynthConfig {
    pub n_object_classes: usize,
    pub n_predicate_classes: usize,
    /// Number of most frequent predicates forming the head of the prior.
    pub head_predicates: usize,
    /// Probability mass carried by the head predicates.
    pub head_mass: f64,
    /// λ: 0 draws predicates from the visual cluster, 1 from the class prior.
    pub bias_mix: f64,
    /// Inclusive range.
    pub objects_per_scene: (usize, usize),
    /// Inclusive range, capped by the number of ordered object pairs.
    pub relations_per_scene: (usize, usize),
    pub d_x: usize,
    pub d_v: usize,
    /// Predicates per visual cluster.
    pub visual_cluster_size: usize,
    /// Per-coordinate standard deviation of the `x` and `v` noise.
    pub feature_noise: f64,
    /// Norm of the cluster embeddings `e_c`.
    pub embedding_norm: f64,
    /// Standard deviation of the noise added to `z`.
    pub prior_noise: f64,
    /// Amplitude of the per-class-pair reweighting of the prior (log scale).
    pub pair_prior_spread: f64,
    pub n_scenes: usize,
    /// Train/validation/test fractions.
    pub split: [f64; 3],
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_object_classes: 150,
            n_predicate_classes: 50,
            head_predicates: 5,
            head_mass: 0.75,
            bias_mix: 0.5,
            objects_per_scene: (6, 12),
            relations_per_scene: (12, 24),
            d_x: 64,
            d_v: 64,
            visual_cluster_size: 1,
            feature_noise: 0.5,
            embedding_norm: 3.0,
            prior_noise: 0.1,
            pair_prior_spread: 0.5,
            n_scenes: 1000,
            split: [0.8, 0.1, 0.1],
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_object_classes == 0 {
            return Err(config_err("n_object_classes", "must be positive"));
        }
        if self.n_predicate_classes == 0 {
            return Err(config_err("n_predicate_classes", "must be positive"));
        }
        if self.head_predicates >= self.n_predicate_classes {
            return Err(config_err(
                "head_predicates",
                "must be smaller than n_predicate_classes",
            ));
        }
        if self.head_predicates == 0 {
            if self.head_mass != 0.0 {
                return Err(config_err("head_mass", "must be 0 when head_predicates is 0"));
            }
        } else if !(self.head_mass > 0.0 && self.head_mass < 1.0) {
            return Err(config_err("head_mass", "must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.bias_mix) {
            return Err(config_err("bias_mix", "must lie in [0, 1]"));
        }
        let (omin, omax) = self.objects_per_scene;
        if omin < 2 || omin > omax {
            return Err(config_err("objects_per_scene", "need 2 <= min <= max"));
        }
        let (rmin, rmax) = self.relations_per_scene;
        if rmin == 0 || rmin > rmax {
            return Err(config_err("relations_per_scene", "need 1 <= min <= max"));
        }
        if self.d_x == 0 || self.d_v == 0 {
            return Err(config_err("d_x", "feature dimensions must be positive"));
        }
        if self.visual_cluster_size == 0 {
            return Err(config_err("visual_cluster_size", "must be positive"));
        }
        for (key, v) in [
            ("feature_noise", self.feature_noise),
            ("embedding_norm", self.embedding_norm),
            ("prior_noise", self.prior_noise),
            ("pair_prior_spread", self.pair_prior_spread),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(config_err(key, "must be finite and non-negative"));
            }
        }
        validate_ratios(&self.split)?;
        Ok(())
    }
}

fn validate_ratios(ratios: &[f64; 3]) -> Result<(), SynthError> {
    if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(config_err("split", "ratios must be non-negative"));
    }
    if (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(config_err("split", "ratios must sum to 1"));
    }
    Ok(())
}

/// Global predicate prior: the head classes share `head_mass` uniformly and
/// the tail classes share the rest uniformly.
pub fn predicate_prior(cfg: &SynthConfig) -> Result<Vec<f64>, SynthError> {
    if cfg.n_predicate_classes == 0 {
        return Err(config_err("n_predicate_classes", "must be positive"));
    }
    if cfg.head_predicates >= cfg.n_predicate_classes {
        return Err(config_err(
            "head_predicates",
            "must be smaller than n_predicate_classes",
        ));
    }
    let p = cfg.n_predicate_classes;
    let h = cfg.head_predicates;
    if h == 0 {
        return Ok(alloc::vec![1.0 / p as f64; p]);
    }
    let head = cfg.head_mass / h as f64;
    let tail = (1.0 - cfg.head_mass) / (p - h) as f64;
    Ok((0..p).map(|i| if i < h { head } else { tail }).collect())
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn unit_hash(parts: &[u64]) -> f64 {
    let h = parts.iter().fold(0u64, |acc, &p| splitmix64(acc ^ p));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

const WORLD_STREAM: u64 = u64::MAX;
const SPLIT_STREAM: u64 = u64::MAX - 1;
const GEOMETRY_FEATURES: usize = 8;

/// Stream used by [`SceneGenerator::generate_scene`] for scene `index`.
pub fn scene_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Stream reserved for shuffling scenes into splits.
pub fn split_rng(seed: u64) -> ChaCha8Rng {
    scene_rng(seed, SPLIT_STREAM)
}

/// Features of one ordered object pair.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PairSample {
    pub subject: ObjectId,
    pub object: ObjectId,
    pub features: PairFeatures,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: u64,
    pub graph: SceneGraph,
    /// One entry per relation-candidate pair.
    pub pairs: Vec<PairSample>,
}

impl Scene {
    pub fn pair(&self, subject: ObjectId, object: ObjectId) -> Option<&PairSample> {
        self.pairs
            .iter()
            .find(|p| p.subject == subject && p.object == object)
    }

    /// `(features, predicate)` for every ground-truth relation whose pair has
    /// features.
    pub fn examples(&self) -> impl Iterator<Item = (&PairFeatures, PredicateId)> + '_ {
        self.graph.relations.iter().filter_map(move |r| {
            self.pair(r.subject, r.object)
                .map(|p| (&p.features, r.predicate))
        })
    }
}

/// A configured generator. Construction draws the fixed world (cluster
/// embeddings and the geometry projection) from a dedicated stream.
#[derive(Debug, Clone)]
pub struct SceneGenerator {
    cfg: SynthConfig,
    prior: Vec<f64>,
    cluster_sampler: WeightedIndex<f64>,
    embeddings: Vec<Vector>,
    geometry: Matrix,
}

impl SceneGenerator {
    pub fn new(cfg: SynthConfig) -> Result<Self, SynthError> {
        cfg.validate()?;
        let prior = predicate_prior(&cfg)?;
        let size = cfg.visual_cluster_size;
        let n_clusters = cfg.n_predicate_classes.div_ceil(size);
        let cluster_mass: Vec<f64> = (0..n_clusters)
            .map(|c| prior[c * size..((c + 1) * size).min(prior.len())].iter().sum())
            .collect();
        let cluster_sampler = WeightedIndex::new(&cluster_mass)
            .map_err(|_| config_err("head_mass", "predicate prior has no mass"))?;

        let mut world = scene_rng(cfg.seed, WORLD_STREAM);
        let embeddings = (0..n_clusters)
            .map(|_| {
                let raw = Vector::new(
                    (0..cfg.d_x)
                        .map(|_| StandardNormal.sample(&mut world))
                        .collect(),
                );
                let norm = libm::sqrt(numerics::dot(&raw, &raw).unwrap_or(1.0));
                numerics::scale(&raw, cfg.embedding_norm / norm)
            })
            .collect();
        let g_scale = 1.0 / libm::sqrt(GEOMETRY_FEATURES as f64);
        let geometry = Matrix::new(
            cfg.d_v,
            GEOMETRY_FEATURES,
            (0..cfg.d_v * GEOMETRY_FEATURES)
                .map(|_| {
                    let n: f64 = StandardNormal.sample(&mut world);
                    g_scale * n
                })
                .collect(),
        )
        .expect("geometry shape");
        Ok(Self {
            cfg,
            prior,
            cluster_sampler,
            embeddings,
            geometry,
        })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn cluster_of(&self, predicate: PredicateId) -> usize {
        predicate / self.cfg.visual_cluster_size
    }

    pub fn n_clusters(&self) -> usize {
        self.embeddings.len()
    }

    pub fn cluster_embedding(&self, cluster: usize) -> &Vector {
        &self.embeddings[cluster]
    }

    /// Class-pair conditional prior: the global prior reweighted by a
    /// deterministic per-(subject class, object class, predicate) factor and
    /// renormalized so head and tail keep their global masses.
    pub fn pair_prior(&self, subject: ClassId, object: ClassId) -> Vec<f64> {
        let cfg = &self.cfg;
        let mut w: Vec<f64> = self
            .prior
            .iter()
            .enumerate()
            .map(|(p, &m)| {
                let u = 2.0 * unit_hash(&[cfg.seed, subject as u64, object as u64, p as u64]) - 1.0;
                m * libm::exp(cfg.pair_prior_spread * u)
            })
            .collect();
        let h = cfg.head_predicates;
        let groups: [(core::ops::Range<usize>, f64); 2] = if h == 0 {
            [(0..w.len(), 1.0), (0..0, 0.0)]
        } else {
            [(0..h, cfg.head_mass), (h..w.len(), 1.0 - cfg.head_mass)]
        };
        for (range, mass) in groups {
            let total: f64 = w[range.clone()].iter().sum();
            if total > 0.0 {
                for x in &mut w[range] {
                    *x *= mass / total;
                }
            }
        }
        w
    }

    fn geometry_features(s: &BBox, o: &BBox) -> Vector {
        let (sx, sy) = s.center();
        let (ox, oy) = o.center();
        let u = s.union(o);
        Vector::new(alloc::vec![
            ox - sx,
            oy - sy,
            libm::log(o.width() / s.width()),
            libm::log(o.height() / s.height()),
            u.width(),
            u.height(),
            s.iou(o),
            1.0,
        ])
    }

    fn noisy<R: Rng + ?Sized>(&self, mean: &Vector, sd: f64, rng: &mut R) -> Vector {
        if sd == 0.0 {
            return mean.clone();
        }
        let noise = Normal::new(0.0, sd).expect("finite noise");
        Vector::new(mean.iter().map(|&m| m + noise.sample(rng)).collect())
    }

    fn random_box<R: Rng + ?Sized>(rng: &mut R) -> BBox {
        loop {
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            let (c, d): (f64, f64) = (rng.random(), rng.random());
            let b = BBox {
                x1: a.min(b),
                x2: a.max(b),
                y1: c.min(d),
                y2: c.max(d),
            };
            if b.width() > 1e-3 && b.height() > 1e-3 {
                return b;
            }
        }
    }

    /// Generates scene `id` from an explicit random stream.
    pub fn generate_scene_with<R: Rng + ?Sized>(&self, id: u64, rng: &mut R) -> Scene {
        let cfg = &self.cfg;
        let n_obj = rng.random_range(cfg.objects_per_scene.0..=cfg.objects_per_scene.1);
        let objects: Vec<SceneObject> = (0..n_obj)
            .map(|i| SceneObject {
                id: i as ObjectId,
                label: rng.random_range(0..cfg.n_object_classes),
                bbox: Self::random_box(rng),
            })
            .collect();

        let mut candidates: Vec<(usize, usize)> = (0..n_obj)
            .flat_map(|s| (0..n_obj).filter(move |&o| o != s).map(move |o| (s, o)))
            .collect();
        candidates.shuffle(rng);
        let n_rel = rng
            .random_range(cfg.relations_per_scene.0..=cfg.relations_per_scene.1)
            .min(candidates.len());
        candidates.truncate(n_rel);
        candidates.sort_unstable();

        let size = cfg.visual_cluster_size;
        let mut relations = Vec::with_capacity(n_rel);
        let mut pairs = Vec::with_capacity(n_rel);
        for (s, o) in candidates {
            let (so, oo) = (&objects[s], &objects[o]);
            let pair_prior = self.pair_prior(so.label, oo.label);
            let cluster = self.cluster_sampler.sample(rng);
            let predicate = if rng.random::<f64>() < cfg.bias_mix {
                WeightedIndex::new(&pair_prior)
                    .expect("pair prior has mass")
                    .sample(rng)
            } else {
                let lo = cluster * size;
                let hi = ((cluster + 1) * size).min(cfg.n_predicate_classes);
                rng.random_range(lo..hi)
            };
            let x = self.noisy(&self.embeddings[cluster], cfg.feature_noise, rng);
            let geo = Self::geometry_features(&so.bbox, &oo.bbox);
            let v_mean = numerics::matvec(&self.geometry, &geo).expect("geometry shape");
            let v = self.noisy(&v_mean, cfg.feature_noise, rng);
            let log_prior = Vector::new(pair_prior.iter().map(|&p| libm::log(p)).collect());
            let z = self.noisy(&log_prior, cfg.prior_noise, rng);
            relations.push(Relation::new(so.id, oo.id, predicate));
            pairs.push(PairSample {
                subject: so.id,
                object: oo.id,
                features: PairFeatures::new(x, v, z),
            });
        }
        Scene {
            id,
            graph: SceneGraph { objects, relations },
            pairs,
        }
    }

    /// Scene `index` drawn from its own derived stream, so scenes can be
    /// generated independently and in any order.
    pub fn generate_scene(&self, index: u64) -> Scene {
        self.generate_scene_with(index, &mut scene_rng(self.cfg.seed, index))
    }

    /// All `n_scenes` scenes of the configured dataset.
    pub fn generate(&self) -> Vec<Scene> {
        (0..self.cfg.n_scenes as u64)
            .map(|i| self.generate_scene(i))
            .collect()
    }
}

/// One scene from an explicit random stream; builds the generator world
/// from `cfg` first.
pub fn generate_scene<R: Rng + ?Sized>(
    cfg: &SynthConfig,
    id: u64,
    rng: &mut R,
) -> Result<Scene, SynthError> {
    Ok(SceneGenerator::new(cfg.clone())?.generate_scene_with(id, rng))
}

/// Class-level triplets occurring in the training split.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ZeroShotLedger(pub BTreeSet<ClassTriplet>);

impl ZeroShotLedger {
    pub fn from_scenes<'a, I: IntoIterator<Item = &'a SceneGraph>>(graphs: I) -> Self {
        Self(
            graphs
                .into_iter()
                .flat_map(|g| g.relations.iter().filter_map(|r| g.class_triplet(r)))
                .collect(),
        )
    }

    pub fn contains(&self, triplet: &ClassTriplet) -> bool {
        self.0.contains(triplet)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct DatasetSplits {
    pub train: Vec<Scene>,
    pub validation: Vec<Scene>,
    pub test: Vec<Scene>,
    pub ledger: ZeroShotLedger,
}

/// Shuffles scenes and cuts them into train/validation/test. The ledger is
/// the exact set of class-level triplets in the training split.
pub fn split_dataset<R: Rng + ?Sized>(
    mut scenes: Vec<Scene>,
    ratios: [f64; 3],
    rng: &mut R,
) -> Result<DatasetSplits, SynthError> {
    validate_ratios(&ratios)?;
    let n = scenes.len();
    let n_train = libm::round(ratios[0] * n as f64) as usize;
    let n_val = libm::round(ratios[1] * n as f64) as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(config_err("split", "every split must receive at least one scene"));
    }
    scenes.shuffle(rng);
    let test = scenes.split_off(n_train + n_val);
    let validation = scenes.split_off(n_train);
    let train = scenes;
    let ledger = ZeroShotLedger::from_scenes(train.iter().map(|s| &s.graph));
    Ok(DatasetSplits {
        train,
        validation,
        test,
        ledger,
    })
}

/// Generates the configured dataset and splits it with the reserved split
/// stream.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<DatasetSplits, SynthError> {
    let generator = SceneGenerator::new(cfg.clone())?;
    split_dataset(generator.generate(), cfg.split, &mut split_rng(cfg.seed))
}
