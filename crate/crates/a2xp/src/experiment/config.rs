//! Experiment configuration: a single JSON file with a schema version,
//! validated with field-level messages. All randomness flows from the
//! seeds recorded here.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{hard_styles, standard_styles, StyleTransform};
use crate::error::{Error, Result};
use crate::generalize::ScheduleConfig;
use crate::mixer::MixerConfig;
use crate::objective::{LossConfig, TuningMode};

pub const SCHEMA_VERSION: u32 = 1;

/// Where the domains come from.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// PACS-style folder layout `root/<domain>/<class>/<images>`.
    Folder { path: PathBuf },
    /// Procedural shapes styled into domains.
    Synthetic {
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default = "default_per_class")]
        per_class: usize,
        #[serde(default = "default_image_size")]
        image_size: usize,
        #[serde(default)]
        style_strength: StyleStrength,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Default)]
#[serde(rename_all = "snake_case")]
pub enum StyleStrength {
    #[default]
    Standard,
    Hard,
}

impl StyleStrength {
    pub fn styles(&self) -> Vec<(String, StyleTransform)> {
        match self {
            StyleStrength::Standard => standard_styles(),
            StyleStrength::Hard => hard_styles(),
        }
    }
}

fn default_classes() -> usize {
    7
}
fn default_per_class() -> usize {
    25
}
fn default_image_size() -> usize {
    32
}

/// Expert initialization named in config; `meta` either points at a stored
/// prompt or asks the pipeline to pretrain one.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InitConfig {
    /// zero | uniform | normal | meta
    pub kind: String,
    #[serde(default = "default_init_scale")]
    pub scale: f64,
    /// Optional existing meta prompt; without it, `meta` pretrains one on
    /// the pooled sources using `budgets.meta`.
    #[serde(default)]
    pub meta_path: Option<PathBuf>,
}

fn default_init_scale() -> f64 {
    0.03
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            kind: "zero".into(),
            scale: default_init_scale(),
            meta_path: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Budgets {
    /// Meta-prompt pretraining updates (used when init.kind = "meta").
    #[serde(default = "default_budget")]
    pub meta: usize,
    /// Updates per expert adaptation.
    #[serde(default = "default_budget")]
    pub adapt: usize,
    /// Updates for the generalization phase.
    #[serde(default = "default_budget")]
    pub generalize: usize,
    /// Supervised pretext updates that build the desk-scale backbone.
    #[serde(default = "default_pretext")]
    pub pretext: usize,
}

fn default_budget() -> usize {
    1000
}
fn default_pretext() -> usize {
    400
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            meta: default_budget(),
            adapt: default_budget(),
            generalize: default_budget(),
            pretext: default_pretext(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct LearningRates {
    /// Adaptation step size (phase 1).
    #[serde(default = "default_lr")]
    pub adapt: f64,
    /// Generalization step size (phase 2).
    #[serde(default = "default_lr")]
    pub generalize: f64,
    /// Pretext training step size.
    #[serde(default = "default_pretext_lr")]
    pub pretext: f64,
}

fn default_lr() -> f64 {
    1e-4
}
fn default_pretext_lr() -> f64 {
    1e-3
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            adapt: default_lr(),
            generalize: default_lr(),
            pretext: default_pretext_lr(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BackboneConfig {
    /// "cnn_small" or "mlp_tiny".
    #[serde(default = "default_backbone")]
    pub id: String,
    #[serde(default = "default_feat_dim")]
    pub feat_dim: usize,
}

fn default_backbone() -> String {
    "cnn_small".into()
}
fn default_feat_dim() -> usize {
    64
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            id: default_backbone(),
            feat_dim: default_feat_dim(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EmbedderConfig {
    /// "pretext" clones the pretext-trained feature net; "random" starts
    /// fresh.
    #[serde(default = "default_embedder_init")]
    pub init: String,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    /// Train the shared embedder during generalization.
    #[serde(default)]
    pub trainable: bool,
}

fn default_embedder_init() -> String {
    "pretext".into()
}
fn default_embed_dim() -> usize {
    512
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            init: default_embedder_init(),
            embed_dim: default_embed_dim(),
            trainable: false,
        }
    }
}

/// Which ablation grids `a2xp ablate` runs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AblateConfig {
    #[serde(default = "default_grids")]
    pub grids: Vec<String>,
}

fn default_grids() -> Vec<String> {
    vec!["mixer_flags".into(), "init".into(), "tuning".into()]
}

impl Default for AblateConfig {
    fn default() -> Self {
        AblateConfig {
            grids: default_grids(),
        }
    }
}

fn default_mixer() -> MixerConfig {
    MixerConfig::default()
}
fn default_tuning() -> TuningMode {
    TuningMode::Frozen
}
fn default_momentum() -> f64 {
    0.9
}
fn default_weight_decay() -> f64 {
    0.01
}
fn default_batch() -> usize {
    32
}
fn default_border() -> usize {
    4
}
fn default_loss() -> LossConfig {
    LossConfig::default()
}
fn default_schedule() -> ScheduleConfig {
    ScheduleConfig::default()
}
fn default_output() -> PathBuf {
    PathBuf::from("runs/a2xp")
}

/// The full run description. Serialized form is the config file schema.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub backbone: BackboneConfig,
    #[serde(default)]
    pub embedder: EmbedderConfig,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default = "default_mixer")]
    pub mixer: MixerConfig,
    #[serde(default = "default_tuning")]
    pub tuning_mode: TuningMode,
    #[serde(default)]
    pub tune_experts: bool,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub lrs: LearningRates,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleConfig,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_border")]
    pub border_width: usize,
    #[serde(default = "default_loss")]
    pub loss: LossConfig,
    #[serde(default = "default_train_ratio")]
    pub train_ratio: f64,
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub ablate: AblateConfig,
}

fn default_train_ratio() -> f64 {
    0.9
}

impl ExperimentConfig {
    /// A ready-to-run synthetic-shapes configuration.
    pub fn synthetic_default(seed: u64, output_dir: PathBuf) -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            dataset: DatasetSpec::Synthetic {
                classes: default_classes(),
                per_class: default_per_class(),
                image_size: default_image_size(),
                style_strength: StyleStrength::Standard,
            },
            backbone: BackboneConfig::default(),
            embedder: EmbedderConfig::default(),
            init: InitConfig::default(),
            mixer: MixerConfig::default(),
            tuning_mode: TuningMode::Frozen,
            tune_experts: false,
            budgets: Budgets::default(),
            lrs: LearningRates::default(),
            momentum: default_momentum(),
            weight_decay: default_weight_decay(),
            schedule: ScheduleConfig::default(),
            batch_size: default_batch(),
            border_width: default_border(),
            loss: LossConfig::default(),
            train_ratio: default_train_ratio(),
            seed,
            output_dir,
            ablate: AblateConfig::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| Error::Config {
            field: "config".into(),
            message: format!("{} (in {})", e, path.display()),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Config {
            field: "config".into(),
            message: e.to_string(),
        })?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        if self.lrs.adapt <= 0.0 {
            return Err(Error::config("lrs.adapt", "must be > 0"));
        }
        if self.lrs.generalize <= 0.0 {
            return Err(Error::config("lrs.generalize", "must be > 0"));
        }
        if self.lrs.pretext <= 0.0 {
            return Err(Error::config("lrs.pretext", "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum", "must be in [0, 1)"));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::config("weight_decay", "must be >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if self.border_width == 0 {
            return Err(Error::config("border_width", "must be >= 1"));
        }
        if !(0.0 < self.train_ratio && self.train_ratio < 1.0) {
            return Err(Error::config("train_ratio", "must be in (0, 1)"));
        }
        match self.init.kind.as_str() {
            "zero" | "uniform" | "normal" | "meta" => {}
            other => {
                return Err(Error::config(
                    "init.kind",
                    format!("unknown strategy '{other}'"),
                ))
            }
        }
        if matches!(self.init.kind.as_str(), "uniform" | "normal") && self.init.scale <= 0.0 {
            return Err(Error::config("init.scale", "must be > 0"));
        }
        match self.backbone.id.as_str() {
            "cnn_small" | "mlp_tiny" => {}
            other => {
                return Err(Error::config(
                    "backbone.id",
                    format!("unknown backbone '{other}'"),
                ))
            }
        }
        match self.embedder.init.as_str() {
            "pretext" | "random" => {}
            other => {
                return Err(Error::config(
                    "embedder.init",
                    format!("unknown embedder init '{other}'"),
                ))
            }
        }
        if self.embedder.embed_dim == 0 {
            return Err(Error::config("embedder.embed_dim", "must be >= 1"));
        }
        for grid in &self.ablate.grids {
            match grid.as_str() {
                "mixer_flags" | "init" | "tuning" => {}
                other => {
                    return Err(Error::config(
                        "ablate.grids",
                        format!("unknown grid '{other}'"),
                    ))
                }
            }
        }
        self.loss.validate()?;
        if let DatasetSpec::Synthetic {
            classes,
            per_class,
            image_size,
            ..
        } = &self.dataset
        {
            if *classes < 2 || *classes > crate::data::SHAPE_CLASS_COUNT {
                return Err(Error::config("dataset.classes", "must be in [2, 7]"));
            }
            if *per_class == 0 {
                return Err(Error::config("dataset.per_class", "must be >= 1"));
            }
            if *image_size < 16 {
                return Err(Error::config("dataset.image_size", "must be >= 16"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_losslessly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let cfg = ExperimentConfig::synthetic_default(7, dir.path().join("out"));
        cfg.save(&path).unwrap();
        let loaded = ExperimentConfig::load(&path).unwrap();
        assert_eq!(loaded, cfg);
    }

    #[test]
    fn validation_names_the_field() {
        let mut cfg = ExperimentConfig::synthetic_default(7, "out".into());
        cfg.lrs.adapt = 0.0;
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("lrs.adapt"), "{err}");
        let mut cfg = ExperimentConfig::synthetic_default(7, "out".into());
        cfg.init.kind = "fancy".into();
        assert!(cfg.validate().unwrap_err().to_string().contains("init.kind"));
    }

    #[test]
    fn schema_version_is_enforced() {
        let mut cfg = ExperimentConfig::synthetic_default(7, "out".into());
        cfg.schema_version = 99;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn minimal_json_fills_defaults() {
        let text = r#"{
            "schema_version": 1,
            "dataset": {"kind": "synthetic"},
            "seed": 3
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.batch_size, 32);
        assert_eq!(cfg.budgets.adapt, 1000);
        assert_eq!(cfg.embedder.embed_dim, 512);
        assert!(cfg.mixer.use_expert_norm && cfg.mixer.use_tanh && !cfg.mixer.use_softmax);
    }
}
