//! Run configuration: TOML file, command-line overrides and the canonical
//! form whose hash is stamped on every artifact.

use std::path::{Path, PathBuf};

use clap::Args;
use compound3d::ensemble::{FusionConfig, FusionMethod, LearnConfig, WdsScheme};
use compound3d::model::{ModelConfig, NormOrder, VariantSpec};
use compound3d::optim::AdamConfig;
use compound3d::search::SearchConfig;
use compound3d::training::{CorruptionMode, LossConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Every random choice of a run derives from this.
    pub seed: u64,
    pub threads: Option<usize>,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub search: SearchSection,
    pub ensemble: EnsembleSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            out_dir: PathBuf::from("runs"),
            seed: 0,
            threads: None,
            model: ModelSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
            search: SearchSection::default(),
            ensemble: EnsembleSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub variant: String,
    pub dim: usize,
    /// 1 or 2.
    pub norm: u8,
    pub init_margin: f64,
    pub unit_entities: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            variant: "R.S.T h - t".into(),
            dim: 48,
            norm: 2,
            init_margin: 6.0,
            unit_entities: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Corruption {
    Head,
    Tail,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub lr: f64,
    pub batch_size: usize,
    pub negatives: usize,
    /// ζ.
    pub margin: f64,
    /// α.
    pub temperature: f64,
    pub corruption: Corruption,
    pub max_steps: usize,
    pub eval_every: usize,
    pub valid_limit: Option<usize>,
    pub log_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            lr: adam.learning_rate,
            batch_size: 512,
            negatives: 128,
            margin: 6.0,
            temperature: 1.0,
            corruption: Corruption::Both,
            max_steps: 1000,
            eval_every: 0,
            valid_limit: None,
            log_every: 100,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    Valid,
    Test,
}

impl EvalSplit {
    pub fn name(self) -> &'static str {
        match self {
            EvalSplit::Valid => "valid",
            EvalSplit::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub split: EvalSplit,
    pub relation_type_threshold: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            split: EvalSplit::Test,
            relation_type_threshold: compound3d::data::DEFAULT_RELATION_TYPE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSection {
    pub beam_width: usize,
    pub iterations: usize,
    pub max_operators: usize,
    pub gamma: f64,
    pub max_stages: usize,
    pub warm_start: bool,
    pub valid_limit: Option<usize>,
}

impl Default for SearchSection {
    fn default() -> Self {
        let s = SearchConfig::default();
        Self {
            beam_width: s.beam_width,
            iterations: s.iterations,
            max_operators: s.max_operators,
            gamma: s.gamma,
            max_stages: s.max_stages,
            warm_start: s.warm_start,
            valid_limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    /// Any of `wds-uniform`, `wds-geometric`, `wds-learnable` and the
    /// fusion method names (`RRF`, `Borda`, `CombSUM`, ...).
    pub methods: Vec<String>,
    pub members: Vec<PathBuf>,
    /// Used when `members` is empty: the `top` best entries are taken.
    pub manifest: Option<PathBuf>,
    pub top: usize,
    pub rrf_k: f64,
    pub rbc_phi: f64,
    pub geometric_ratio: f64,
    pub learn_steps: usize,
    pub learn_batch_size: usize,
    pub learn_lr: f64,
    pub per_relation: bool,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        let fusion = FusionConfig::new(FusionMethod::Rrf);
        let learn = LearnConfig::default();
        Self {
            methods: vec!["RRF".into()],
            members: vec![],
            manifest: None,
            top: 2,
            rrf_k: fusion.rrf_k,
            rbc_phi: fusion.rbc_phi,
            geometric_ratio: 0.5,
            learn_steps: learn.steps,
            learn_batch_size: learn.batch_size,
            learn_lr: learn.learning_rate,
            per_relation: false,
        }
    }
}

/// One resolved ensemble method.
#[derive(Debug, Clone, PartialEq)]
pub enum EnsembleChoice {
    Wds(WdsScheme),
    Fusion(FusionConfig),
}

/// Flags that override config keys; each mirrors the key of the same name.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    #[arg(long, global = true, env = "COMPOUND3D_OUT")]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, env = "COMPOUND3D_THREADS")]
    pub threads: Option<usize>,

    #[arg(long, global = true, help_heading = "Model")]
    pub variant: Option<String>,
    #[arg(long, global = true, help_heading = "Model")]
    pub dim: Option<usize>,
    #[arg(long, global = true, help_heading = "Model")]
    pub norm: Option<u8>,
    #[arg(long, global = true, help_heading = "Model")]
    pub init_margin: Option<f64>,
    #[arg(long, global = true, help_heading = "Model")]
    pub unit_entities: Option<bool>,

    #[arg(long, global = true, help_heading = "Training")]
    pub lr: Option<f64>,
    #[arg(long, global = true, help_heading = "Training")]
    pub batch_size: Option<usize>,
    #[arg(long, global = true, help_heading = "Training")]
    pub negatives: Option<usize>,
    #[arg(long, global = true, help_heading = "Training")]
    pub margin: Option<f64>,
    #[arg(long, global = true, help_heading = "Training")]
    pub temperature: Option<f64>,
    #[arg(long, global = true, help_heading = "Training")]
    pub max_steps: Option<usize>,
    #[arg(long, global = true, help_heading = "Training")]
    pub eval_every: Option<usize>,
    #[arg(long, global = true, help_heading = "Training")]
    pub log_every: Option<usize>,

    #[arg(long, global = true, value_parser = ["valid", "test"], help_heading = "Evaluation")]
    pub split: Option<String>,

    #[arg(long, global = true, help_heading = "Search")]
    pub beam_width: Option<usize>,
    #[arg(long, global = true, help_heading = "Search")]
    pub iterations: Option<usize>,
    #[arg(long, global = true, help_heading = "Search")]
    pub max_operators: Option<usize>,
    #[arg(long, global = true, help_heading = "Search")]
    pub gamma: Option<f64>,
    #[arg(long, global = true, help_heading = "Search")]
    pub max_stages: Option<usize>,

    /// Comma-separated ensemble methods.
    #[arg(long, global = true, value_delimiter = ',', help_heading = "Ensemble")]
    pub methods: Option<Vec<String>>,
    #[arg(long, global = true, help_heading = "Ensemble")]
    pub top: Option<usize>,
}

macro_rules! set {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src.clone() {
            $dst = v;
        }
    };
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("reading {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Defaults, then the config file, then flags and environment.
    pub fn resolve(o: &Overrides) -> Result<Self, CliError> {
        let mut c = match &o.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if o.dataset.is_some() {
            c.dataset = o.dataset.clone();
        }
        set!(c.out_dir, o.out_dir);
        set!(c.seed, o.seed);
        if o.threads.is_some() {
            c.threads = o.threads;
        }
        set!(c.model.variant, o.variant);
        set!(c.model.dim, o.dim);
        set!(c.model.norm, o.norm);
        set!(c.model.init_margin, o.init_margin);
        set!(c.model.unit_entities, o.unit_entities);
        set!(c.train.lr, o.lr);
        set!(c.train.batch_size, o.batch_size);
        set!(c.train.negatives, o.negatives);
        set!(c.train.margin, o.margin);
        set!(c.train.temperature, o.temperature);
        set!(c.train.max_steps, o.max_steps);
        set!(c.train.eval_every, o.eval_every);
        set!(c.train.log_every, o.log_every);
        if let Some(s) = &o.split {
            c.eval.split = if s == "valid" {
                EvalSplit::Valid
            } else {
                EvalSplit::Test
            };
        }
        set!(c.search.beam_width, o.beam_width);
        set!(c.search.iterations, o.iterations);
        set!(c.search.max_operators, o.max_operators);
        set!(c.search.gamma, o.gamma);
        set!(c.search.max_stages, o.max_stages);
        set!(c.ensemble.methods, o.methods);
        set!(c.ensemble.top, o.top);
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model_config()?;
        self.loss_config().validate()?;
        self.train_config().validate()?;
        self.search_config().validate()?;
        self.ensemble_methods()?;
        if self.threads == Some(0) {
            return Err(CliError::Usage("threads must be >= 1".into()));
        }
        Ok(())
    }

    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    /// SHA-256 of the canonical form with the output directory and thread
    /// count cleared, since neither changes any result.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.threads = None;
        let digest = Sha256::digest(c.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn dataset_dir(&self) -> Result<&Path, CliError> {
        self.dataset
            .as_deref()
            .ok_or_else(|| CliError::Usage("no dataset given (--dataset or `dataset` in the config)".into()))
    }

    pub fn model_config(&self) -> Result<ModelConfig, CliError> {
        let variant: VariantSpec = self.model.variant.parse()?;
        let mut cfg = ModelConfig::new(self.model.dim, variant);
        cfg.norm = NormOrder::from_order(self.model.norm)?;
        cfg.init_margin = self.model.init_margin;
        cfg.unit_entities = self.model.unit_entities;
        if cfg.dim == 0 || !cfg.dim.is_multiple_of(3) {
            return Err(compound3d::Error::Dimension(cfg.dim).into());
        }
        Ok(cfg)
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            margin: self.train.margin,
            temperature: self.train.temperature,
            negatives: self.train.negatives,
            corruption: match self.train.corruption {
                Corruption::Head => CorruptionMode::Head,
                Corruption::Tail => CorruptionMode::Tail,
                Corruption::Both => CorruptionMode::Both,
            },
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            batch_size: t.batch_size,
            max_steps: t.max_steps,
            eval_every: t.eval_every,
            seed: self.seed,
            adam: AdamConfig {
                learning_rate: t.lr,
                beta1: t.beta1,
                beta2: t.beta2,
                epsilon: t.epsilon,
            },
            valid_limit: t.valid_limit,
            log_every: t.log_every,
        }
    }

    pub fn search_config(&self) -> SearchConfig {
        let s = &self.search;
        SearchConfig {
            beam_width: s.beam_width,
            iterations: s.iterations,
            max_operators: s.max_operators,
            gamma: s.gamma,
            max_stages: s.max_stages,
            warm_start: s.warm_start,
        }
    }

    pub fn ensemble_methods(&self) -> Result<Vec<(String, EnsembleChoice)>, CliError> {
        let e = &self.ensemble;
        let learn = LearnConfig {
            steps: e.learn_steps,
            batch_size: e.learn_batch_size,
            learning_rate: e.learn_lr,
            seed: self.seed,
            per_relation: e.per_relation,
        };
        e.methods
            .iter()
            .map(|name| {
                let choice = match name.to_ascii_lowercase().as_str() {
                    "wds-uniform" => EnsembleChoice::Wds(WdsScheme::Uniform),
                    "wds-geometric" => EnsembleChoice::Wds(WdsScheme::Geometric {
                        ratio: e.geometric_ratio,
                    }),
                    "wds-learnable" => EnsembleChoice::Wds(WdsScheme::Learnable(learn)),
                    other => {
                        let method = FusionMethod::from_name(other)
                            .ok_or_else(|| CliError::Usage(format!("unknown ensemble method {name:?}")))?;
                        let cfg = FusionConfig {
                            method,
                            rrf_k: e.rrf_k,
                            rbc_phi: e.rbc_phi,
                        };
                        cfg.validate()?;
                        EnsembleChoice::Fusion(cfg)
                    }
                };
                Ok((name.clone(), choice))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_round_trip_is_identity() {
        let mut c = RunConfig {
            dataset: Some("data/x".into()),
            ..Default::default()
        };
        c.train.valid_limit = Some(100);
        c.ensemble.members = vec!["a.ckpt".into()];
        c.train.corruption = Corruption::Tail;
        let text = c.canonical();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.canonical(), text);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = RunConfig::from_toml("seed = 3\n[model]\ndim = 12\n").unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.model.dim, 12);
        assert_eq!(c.model.variant, ModelSection::default().variant);
        assert_eq!(RunConfig::from_toml(&c.canonical()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("sede = 3\n").is_err());
        assert!(RunConfig::from_toml("[model]\ndimension = 12\n").is_err());
    }

    #[test]
    fn hash_ignores_output_location_only() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out_dir = "elsewhere".into();
        b.threads = Some(4);
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn overrides_take_precedence() {
        let o = Overrides {
            dim: Some(9),
            variant: Some("S h - T.R.S t".into()),
            methods: Some(vec!["RRF".into(), "wds-uniform".into()]),
            ..Default::default()
        };
        let c = RunConfig::resolve(&o).unwrap();
        assert_eq!(c.model.dim, 9);
        let m = c.model_config().unwrap();
        assert_eq!(m.variant.tail().len(), 3);
        assert_eq!(c.ensemble_methods().unwrap().len(), 2);
    }

    #[test]
    fn invalid_values_rejected() {
        for o in [
            Overrides {
                dim: Some(10),
                ..Default::default()
            },
            Overrides {
                variant: Some("h - t".into()),
                ..Default::default()
            },
            Overrides {
                norm: Some(3),
                ..Default::default()
            },
            Overrides {
                methods: Some(vec!["nope".into()]),
                ..Default::default()
            },
        ] {
            let err = RunConfig::resolve(&o).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{o:?}: {err}");
        }
    }
}
