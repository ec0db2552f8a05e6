use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rgat::RgatConfig;

/// How the user state is carried from one session to the next.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Temporal {
    Tie,
    Gru,
    None,
}

/// Scoring function between a user representation and an item embedding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Dot,
    Mlp,
}

/// Architecture hyperparameters shared by every variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub dim: usize,
    /// Friend sessions are truncated to their most recent items.
    pub max_session_len: usize,
    pub attention_layers: usize,
    pub aggregate_projected: bool,
    pub literal_linear_gates: bool,
    pub per_session_params: bool,
    pub predict_from_tie_state: bool,
    pub batch_norm: bool,
    pub head: Head,
    /// Embedding rows are drawn uniformly from `[-init_scale, init_scale]`.
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 64,
            max_session_len: 20,
            attention_layers: 1,
            aggregate_projected: false,
            literal_linear_gates: false,
            per_session_params: false,
            predict_from_tie_state: false,
            batch_norm: false,
            head: Head::Dot,
            init_scale: 0.05,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.max_session_len == 0 || self.attention_layers == 0 {
            return Err(Error::Config("dim, max_session_len and attention_layers must be positive".into()));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config(format!("init_scale must be positive, got {}", self.init_scale)));
        }
        Ok(())
    }

    pub fn rgat(&self) -> RgatConfig {
        RgatConfig { attention_layers: self.attention_layers, aggregate_projected: self.aggregate_projected }
    }
}

/// Switches distinguishing the ablation variants.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantConfig {
    pub use_real: bool,
    pub use_virtual: bool,
    pub relation_aware: bool,
    pub temporal: Temporal,
    /// Number of past sessions fed to the model.
    pub sessions: usize,
    /// Permit a model that sees neither real nor virtual friends.
    #[serde(default)]
    pub allow_center_only: bool,
}

impl VariantConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sessions == 0 {
            return Err(Error::Config("sessions must be at least 1".into()));
        }
        if !self.use_real && !self.use_virtual && !self.allow_center_only {
            return Err(Error::Config(
                "variant uses neither real nor virtual friends; set allow_center_only to request it".into(),
            ));
        }
        Ok(())
    }
}

/// Named variants of the ablation study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "dream")]
    Dream,
    #[serde(rename = "dream-r")]
    DreamR,
    #[serde(rename = "dream-v")]
    DreamV,
    #[serde(rename = "dream-gat")]
    DreamGat,
    #[serde(rename = "dream-tgru")]
    DreamTgru,
    #[serde(rename = "dream-s1")]
    DreamS1,
    #[serde(rename = "dream-s3")]
    DreamS3,
}

impl Variant {
    /// Ablation table order; the full model comes last.
    pub const ALL: [Variant; 7] = [
        Variant::DreamR,
        Variant::DreamV,
        Variant::DreamGat,
        Variant::DreamTgru,
        Variant::DreamS1,
        Variant::DreamS3,
        Variant::Dream,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Dream => "dream",
            Variant::DreamR => "dream-r",
            Variant::DreamV => "dream-v",
            Variant::DreamGat => "dream-gat",
            Variant::DreamTgru => "dream-tgru",
            Variant::DreamS1 => "dream-s1",
            Variant::DreamS3 => "dream-s3",
        }
    }

    /// Short row label of the ablation table.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Dream => "full",
            Variant::DreamR => "R",
            Variant::DreamV => "V",
            Variant::DreamGat => "GAT",
            Variant::DreamTgru => "TGRU",
            Variant::DreamS1 => "S1",
            Variant::DreamS3 => "S3",
        }
    }

    /// Switches of this variant when the full model looks back `sessions`
    /// sessions. The session-count variants ignore it.
    pub fn config(self, sessions: usize) -> VariantConfig {
        let full = VariantConfig {
            use_real: true,
            use_virtual: true,
            relation_aware: true,
            temporal: Temporal::Tie,
            sessions,
            allow_center_only: false,
        };
        match self {
            Variant::Dream => full,
            Variant::DreamR => VariantConfig { use_virtual: false, ..full },
            Variant::DreamV => VariantConfig { use_real: false, ..full },
            Variant::DreamGat => VariantConfig { relation_aware: false, ..full },
            Variant::DreamTgru => VariantConfig { temporal: Temporal::Gru, ..full },
            Variant::DreamS1 => VariantConfig { temporal: Temporal::None, sessions: 1, ..full },
            Variant::DreamS3 => VariantConfig { sessions: 3, ..full },
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == key || v.label().to_ascii_lowercase() == key)
            .ok_or_else(|| {
                let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
                Error::Config(format!("unknown variant {s:?} (expected one of {})", names.join(", ")))
            })
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
