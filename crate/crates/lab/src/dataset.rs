//! On-disk datasets: one JSON file per split plus a manifest.
//!
//! Feature vectors are stored as base64 of their little-endian `f64` bytes,
//! so a round trip is bit-exact.

use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sgg_fusion_core::fusion::PairFeatures;
use sgg_fusion_core::graph::{ClassTriplet, Relation, SceneGraph, SceneObject};
use sgg_fusion_core::numerics::Vector;
use sgg_fusion_core::synthgen::{DatasetSplits, PairSample, Scene, SynthConfig, ZeroShotLedger};

use crate::error::{self, LabError, Result};

pub const MANIFEST: &str = "manifest.json";
pub const SPLITS: [&str; 3] = ["train", "validation", "test"];
const SCENES_FORMAT: &str = "sgg-scenes";
const MANIFEST_FORMAT: &str = "sgg-dataset";
const VERSION: u32 = 1;

pub fn encode_f64s(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f64s(text: &str) -> std::result::Result<Vec<f64>, String> {
    let bytes = STANDARD.decode(text).map_err(|e| e.to_string())?;
    if bytes.len() % 8 != 0 {
        return Err(format!("{} bytes is not a whole number of doubles", bytes.len()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairRecord {
    subject: u32,
    object: u32,
    x: String,
    v: String,
    z: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneRecord {
    id: u64,
    objects: Vec<SceneObject>,
    relations: Vec<Relation>,
    pairs: Vec<PairRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitFile {
    format: String,
    version: u32,
    split: String,
    scenes: Vec<SceneRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub scenes: usize,
    pub relations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub config: SynthConfig,
    pub files: Vec<(String, String)>,
    pub counts: Vec<(String, SplitCounts)>,
    /// Class-level triplets seen in the training split.
    pub ledger: Vec<ClassTriplet>,
}

fn record(scene: &Scene) -> SceneRecord {
    SceneRecord {
        id: scene.id,
        objects: scene.graph.objects.clone(),
        relations: scene.graph.relations.clone(),
        pairs: scene
            .pairs
            .iter()
            .map(|p| PairRecord {
                subject: p.subject,
                object: p.object,
                x: encode_f64s(p.features.x.as_slice()),
                v: encode_f64s(p.features.v.as_slice()),
                z: encode_f64s(p.features.z.as_slice()),
            })
            .collect(),
    }
}

fn scene(path: &Path, index: usize, r: SceneRecord) -> Result<Scene> {
    let field = |i: usize, name: &str| format!("scenes[{index}].pairs[{i}].{name}");
    let mut pairs = Vec::with_capacity(r.pairs.len());
    for (i, p) in r.pairs.into_iter().enumerate() {
        let decode = |text: &str, name: &str| {
            decode_f64s(text)
                .map(Vector::new)
                .map_err(|e| LabError::format(path, field(i, name), e))
        };
        pairs.push(PairSample {
            subject: p.subject,
            object: p.object,
            features: PairFeatures::new(decode(&p.x, "x")?, decode(&p.v, "v")?, decode(&p.z, "z")?),
        });
    }
    let graph = SceneGraph {
        objects: r.objects,
        relations: r.relations,
    };
    graph
        .validate()
        .map_err(|e| LabError::format(path, format!("scenes[{index}]"), e))?;
    Ok(Scene {
        id: r.id,
        graph,
        pairs,
    })
}

pub(crate) fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    bytes
}

pub fn split_file(dir: &Path, split: &str) -> PathBuf {
    dir.join(format!("{split}.json"))
}

/// Writes the three split files and the manifest into `dir`.
pub fn save(dir: &Path, cfg: &SynthConfig, splits: &DatasetSplits) -> Result<Manifest> {
    let parts = [&splits.train, &splits.validation, &splits.test];
    let mut files = Vec::new();
    let mut counts = Vec::new();
    for (name, scenes) in SPLITS.iter().zip(parts) {
        let file = SplitFile {
            format: SCENES_FORMAT.into(),
            version: VERSION,
            split: (*name).into(),
            scenes: scenes.iter().map(record).collect(),
        };
        let path = split_file(dir, name);
        error::write(&path, &to_json(&file))?;
        files.push((name.to_string(), format!("{name}.json")));
        counts.push((
            name.to_string(),
            SplitCounts {
                scenes: scenes.len(),
                relations: scenes.iter().map(|s| s.graph.relations.len()).sum(),
            },
        ));
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: VERSION,
        seed: cfg.seed,
        config: cfg.clone(),
        files,
        counts,
        ledger: splits.ledger.0.iter().copied().collect(),
    };
    error::write(&dir.join(MANIFEST), &to_json(&manifest))?;
    Ok(manifest)
}

pub(crate) fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = error::read(path)?;
    let de = &mut serde_json::Deserializer::from_slice(&bytes);
    serde_path_to_error::deserialize(de)
        .map_err(|e| LabError::format(path, e.path().to_string(), e.inner()))
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let m: Manifest = parse_json(&path)?;
    if m.format != MANIFEST_FORMAT || m.version != VERSION {
        return Err(LabError::format(
            &path,
            "format",
            format!("expected {MANIFEST_FORMAT} v{VERSION}, found {} v{}", m.format, m.version),
        ));
    }
    Ok(m)
}

pub fn load_split(dir: &Path, split: &str) -> Result<Vec<Scene>> {
    let path = split_file(dir, split);
    let file: SplitFile = parse_json(&path)?;
    if file.format != SCENES_FORMAT || file.version != VERSION {
        return Err(LabError::format(&path, "format", "not a scene file of a supported version"));
    }
    if file.split != split {
        return Err(LabError::format(&path, "split", format!("expected {split}, found {}", file.split)));
    }
    file.scenes
        .into_iter()
        .enumerate()
        .map(|(i, r)| scene(&path, i, r))
        .collect()
}

/// Reads a dataset written by [`save`] and checks the manifest's ledger
/// against the training split.
pub fn load(dir: &Path) -> Result<(Manifest, DatasetSplits)> {
    let manifest = load_manifest(dir)?;
    let train = load_split(dir, "train")?;
    let validation = load_split(dir, "validation")?;
    let test = load_split(dir, "test")?;
    let ledger = ZeroShotLedger::from_scenes(train.iter().map(|s| &s.graph));
    if ledger.0.iter().copied().collect::<Vec<_>>() != manifest.ledger {
        return Err(LabError::format(
            dir.join(MANIFEST),
            "ledger",
            "does not match the triplets of the training split",
        ));
    }
    Ok((
        manifest,
        DatasetSplits {
            train,
            validation,
            test,
            ledger,
        },
    ))
}
