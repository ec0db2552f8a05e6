use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, VariantConfig};
use super::network::DreamModel;
use crate::error::{Error, Result};
use crate::numkernel::Tensor;

const FORMAT: &str = "dream-checkpoint";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    tensor: Tensor,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: String,
    version: u32,
    model: ModelConfig,
    variant: VariantConfig,
    num_users: usize,
    num_items: usize,
    tensors: Vec<NamedTensor>,
    running_mean: Option<Vec<f64>>,
    running_var: Option<Vec<f64>>,
    #[serde(default)]
    metadata: serde_json::Value,
}

/// A model plus free-form metadata (the pipeline stores its resolved run
/// configuration there).
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: DreamModel,
    pub metadata: serde_json::Value,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let m = &self.model;
        let file = CheckpointFile {
            format: FORMAT.into(),
            version: VERSION,
            model: m.config.clone(),
            variant: m.variant.clone(),
            num_users: m.num_users(),
            num_items: m.num_items(),
            tensors: m
                .store
                .ids()
                .map(|id| NamedTensor { name: m.store.name(id).to_owned(), tensor: m.store.value(id).clone() })
                .collect(),
            running_mean: m.norm.as_ref().map(|n| n.running_mean.clone()),
            running_var: m.norm.as_ref().map(|n| n.running_var.clone()),
            metadata: self.metadata.clone(),
        };
        serde_json::to_string(&file).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if file.format != FORMAT {
            return Err(Error::Checkpoint(format!("not a checkpoint (format {:?})", file.format)));
        }
        if file.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {}", file.version)));
        }
        let mut model = DreamModel::new(file.num_users, file.num_items, file.model, file.variant, 0)?;
        if file.tensors.len() != model.store.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} tensors, model has {}",
                file.tensors.len(),
                model.store.len()
            )));
        }
        for nt in file.tensors {
            let id = model
                .store
                .id(&nt.name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown tensor {:?}", nt.name)))?;
            if model.store.value(id).shape() != nt.tensor.shape() || nt.tensor.len() != model.store.value(id).len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {:?} has shape {:?}, expected {:?}",
                    nt.name,
                    nt.tensor.shape(),
                    model.store.value(id).shape()
                )));
            }
            *model.store.value_mut(id) = nt.tensor;
        }
        if let Some(norm) = &mut model.norm {
            match (file.running_mean, file.running_var) {
                (Some(m), Some(v)) if m.len() == norm.running_mean.len() && v.len() == norm.running_var.len() => {
                    norm.running_mean = m;
                    norm.running_var = v;
                }
                _ => return Err(Error::Checkpoint("missing or malformed batch-norm statistics".into())),
            }
        }
        if let Some(bad) = model.store.first_non_finite() {
            return Err(Error::Checkpoint(format!("tensor {bad:?} holds non-finite values")));
        }
        Ok(Checkpoint { model, metadata: file.metadata })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text)
    }
}
