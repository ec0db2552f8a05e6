//! Run configuration: one TOML (or JSON) document with a section per module.
//! Unknown keys are rejected and every field has a default.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::completion::{CompletionConfig, GloveConfig};
use crate::data::{Granularity, SplitRatios};
use crate::error::{Error, Result};
use crate::evaluator::EvalConfig;
use crate::model::{ModelConfig, Variant, VariantConfig};
use crate::synthetic::SyntheticConfig;
use crate::trainer::TrainConfig;

/// Where the interactions come from: files, or a planted synthetic dataset
/// when no events file is given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub events: Option<PathBuf>,
    pub social: Option<PathBuf>,
    pub granularity: Granularity,
    pub split: SplitRatios,
    pub synthetic: SyntheticConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            events: None,
            social: None,
            granularity: Granularity::Month,
            split: SplitRatios::default(),
            synthetic: SyntheticConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VariantSection {
    pub name: Variant,
    /// Sessions the full model looks back over.
    pub sessions: usize,
}

impl Default for VariantSection {
    fn default() -> Self {
        VariantSection { name: Variant::Dream, sessions: 2 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root of every random stream in the run.
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub variant: VariantSection,
    pub completion: CompletionConfig,
    pub glove: GloveConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.data.split.validate()?;
        if self.data.events.is_none() {
            self.data.synthetic.validate()?;
        }
        if self.data.social.is_some() && self.data.events.is_none() {
            return Err(Error::Config("a social file needs an events file".into()));
        }
        self.model.validate()?;
        self.variant_config().validate()?;
        self.glove.validate()?;
        self.train.validate()?;
        self.eval.validate()?;
        if self.variant.sessions == 0 {
            return Err(Error::Config("variant.sessions must be at least 1".into()));
        }
        Ok(())
    }

    pub fn variant_config(&self) -> VariantConfig {
        self.variant.name.config(self.variant.sessions)
    }

    /// Pretty JSON form written as `run.json`.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.train.learning_rate, 1e-4);
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.completion.k_real, 10);
        assert_eq!(cfg.variant.sessions, 2);
        assert_eq!(cfg.eval.negatives, 1000);
    }

    #[test]
    fn sections_override_and_unknown_keys_fail() {
        let cfg = RunConfig::parse(
            "seed = 9\n[model]\ndim = 8\n[variant]\nname = \"dream-r\"\nsessions = 3\n[data]\ngranularity = \"week\"\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.model.dim, 8);
        assert_eq!(cfg.variant.name, Variant::DreamR);
        assert_eq!(cfg.data.granularity, Granularity::Week);
        assert!(matches!(RunConfig::parse("[model]\nwidth = 3\n"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("bogus = 1\n"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("[train]\nbatch_size = 0\n"), Err(Error::Config(_))));
    }

    #[test]
    fn json_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.seed = 3;
        cfg.train.clip_norm = None;
        cfg.data.events = Some("e.tsv".into());
        let back = RunConfig::parse(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
