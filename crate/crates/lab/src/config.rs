//! The TOML config file shared by every subcommand.
//!
//! ```toml
//! [data]        # synthetic generator, see `SynthConfig`
//! bias_mix = 0.8
//!
//! [train]       # trainer, see `TrainConfig`
//! learning_rate = 0.01
//!
//! [fusion]      # settings shared by every fusion kind
//! mfb_factor = 5
//! tied = true
//! reference_adds_prior = false
//! init_seed = 7
//!
//! [ablation]
//! fusions = ["sum", "gate", "dist-ref", "mfb-ref", "dist", "mfb-gate"]
//! ks = [20, 50, 100]
//! tde = ["off", "mean"]
//! tde_space = "logits"
//! denominator = "k"
//! seeds = [0]
//! ```
//!
//! Every section and key is optional; unknown keys are rejected. Command-line
//! flags override the file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sgg_fusion_core::debias::{BaselineMode, TdeSpace};
use sgg_fusion_core::fusion::{FusionConfig, FusionKind};
use sgg_fusion_core::metrics::Denominator;
use sgg_fusion_core::synthgen::SynthConfig;
use sgg_fusion_core::trainer::TrainConfig;

use crate::error::{self, LabError, Result};

/// Output directory used when neither `--out` nor this variable is given.
pub const OUT_ENV: &str = "SGG_LAB_OUT";
pub const DEFAULT_OUT: &str = "sgg-lab-out";

/// Scoring used at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TdeMode {
    Off,
    Mean,
    Zeros,
}

impl TdeMode {
    pub const ALL: [TdeMode; 3] = [TdeMode::Off, TdeMode::Mean, TdeMode::Zeros];

    pub fn id(self) -> &'static str {
        match self {
            TdeMode::Off => "off",
            TdeMode::Mean => "mean",
            TdeMode::Zeros => "zeros",
        }
    }

    pub fn baseline(self) -> Option<BaselineMode> {
        match self {
            TdeMode::Off => None,
            TdeMode::Mean => Some(BaselineMode::Mean),
            TdeMode::Zeros => Some(BaselineMode::Zeros),
        }
    }
}

impl fmt::Display for TdeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for TdeMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        TdeMode::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| format!("unknown tde mode `{s}` (valid: off, mean, zeros)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSettings {
    pub mfb_factor: usize,
    pub tied: bool,
    pub reference_adds_prior: bool,
    /// Seed of the parameter initialization, shared by all arms.
    pub init_seed: u64,
}

impl Default for FusionSettings {
    fn default() -> Self {
        let d = FusionConfig::default();
        Self {
            mfb_factor: d.mfb_factor,
            tied: d.tied,
            reference_adds_prior: d.reference_adds_prior,
            init_seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSettings {
    pub fusions: Vec<FusionKind>,
    pub ks: Vec<usize>,
    pub tde: Vec<TdeMode>,
    pub tde_space: TdeSpace,
    pub denominator: Denominator,
    /// Training seeds; each fusion kind is trained once per seed.
    pub seeds: Vec<u64>,
}

impl Default for AblationSettings {
    fn default() -> Self {
        Self {
            fusions: FusionKind::ALL.to_vec(),
            ks: vec![20, 50, 100],
            tde: vec![TdeMode::Off, TdeMode::Mean],
            tde_space: TdeSpace::Logits,
            denominator: Denominator::K,
            seeds: vec![0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabConfig {
    pub data: SynthConfig,
    pub train: TrainConfig,
    pub fusion: FusionSettings,
    pub ablation: AblationSettings,
}

fn unique<T: PartialEq + fmt::Debug>(key: &str, items: &[T]) -> Result<()> {
    for (i, a) in items.iter().enumerate() {
        if items[..i].contains(a) {
            return Err(LabError::invalid(key, format!("{a:?} listed twice")));
        }
    }
    Ok(())
}

impl LabConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = error::read(path)?;
        let text = String::from_utf8(bytes).map_err(|e| LabError::format(path, "", e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| LabError::format(path, "", e.message()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            LabError::invalid(format!("{}: {field}", path.display()), e.inner().message())
        })
    }

    /// Fusion config of one arm; dims follow the data section.
    pub fn fusion_config(&self, kind: FusionKind) -> FusionConfig {
        FusionConfig {
            kind,
            d_x: self.data.d_x,
            d_v: self.data.d_v,
            n_predicates: self.data.n_predicate_classes,
            mfb_factor: self.fusion.mfb_factor,
            tied: self.fusion.tied,
            reference_adds_prior: self.fusion.reference_adds_prior,
        }
    }

    /// Checks every section. Runs before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.train.validate()?;
        self.fusion_config(FusionKind::Sum).validate()?;
        let a = &self.ablation;
        if a.fusions.is_empty() {
            return Err(LabError::invalid("ablation.fusions", "needs at least one fusion kind"));
        }
        if a.ks.is_empty() {
            return Err(LabError::invalid("ablation.ks", "needs at least one K"));
        }
        if a.ks.contains(&0) {
            return Err(LabError::invalid("ablation.ks", "K must be at least 1"));
        }
        if a.tde.is_empty() {
            return Err(LabError::invalid("ablation.tde", "needs at least one mode"));
        }
        if a.seeds.is_empty() {
            return Err(LabError::invalid("ablation.seeds", "needs at least one seed"));
        }
        unique("ablation.fusions", &a.fusions)?;
        unique("ablation.ks", &a.ks)?;
        unique("ablation.tde", &a.tde)?;
        unique("ablation.seeds", &a.seeds)
    }
}

/// `--out`, else `$SGG_LAB_OUT`, else `./sgg-lab-out`.
pub fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<LabConfig> {
        LabConfig::parse(text, Path::new("lab.toml"))
    }

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse("").unwrap();
        assert_eq!(c, LabConfig::default());
        assert_eq!(c.ablation.ks, [20, 50, 100]);
        c.validate().unwrap();
    }

    #[test]
    fn sections_override_defaults() {
        let c = parse(
            "[data]\nbias_mix = 0.8\n[ablation]\nfusions = [\"sum\", \"mfb-gate\"]\ntde = [\"zeros\"]\ndenominator = \"gt\"\n",
        )
        .unwrap();
        assert_eq!(c.data.bias_mix, 0.8);
        assert_eq!(c.ablation.fusions, [FusionKind::Sum, FusionKind::MfbGate]);
        assert_eq!(c.ablation.tde, [TdeMode::Zeros]);
        assert_eq!(c.ablation.denominator, Denominator::Gt);
    }

    #[test]
    fn unknown_keys_name_their_path() {
        let e = parse("[train]\nlearning_rat = 0.1\n").unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(e.to_string().contains("train"), "{e}");
        let e = parse("[ablation]\nfusions = [\"sum\", \"nope\"]\n").unwrap_err();
        assert!(e.to_string().contains("ablation.fusions"), "{e}");
    }

    #[test]
    fn validation_names_the_key() {
        let mut c = LabConfig::default();
        c.ablation.ks = vec![50, 50];
        assert!(c.validate().unwrap_err().to_string().contains("ablation.ks"));
        c.ablation.ks = vec![];
        assert!(c.validate().is_err());
        let mut c = LabConfig::default();
        c.data.split = [0.5, 0.2, 0.2];
        let e = c.validate().unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(e.to_string().contains("split"), "{e}");
    }

    #[test]
    fn tde_mode_ids_round_trip() {
        for m in TdeMode::ALL {
            assert_eq!(m.id().parse::<TdeMode>(), Ok(m));
        }
        assert!("on".parse::<TdeMode>().is_err());
    }
}
