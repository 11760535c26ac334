//! Versioned JSON checkpoints.
//!
//! Layout (version 1):
//!
//! ```text
//! {
//!   "format": "sfid-checkpoint",
//!   "version": 1,
//!   "config": { ...every TrainConfig key... },
//!   "vocabularies": { "tokens": [...], "slots": [...], "intents": [...] },
//!   "parameters": [ { "name": "encoder.embedding", "shape": [V, E], "data": [...] }, ... ],
//!   "history": [ ...per-epoch metrics... ],
//!   "best_epoch": 7
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so loading restores every
//! parameter bit for bit. Parameters are listed in [`Model::tensors`] order.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::config::TrainConfig;
use crate::corpus::Vocabularies;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::trainer::EpochMetrics;

pub const CHECKPOINT_FORMAT: &str = "sfid-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    config: TrainConfig,
    vocabularies: Vocabularies,
    parameters: Vec<NamedTensor>,
    history: Vec<EpochMetrics>,
    best_epoch: usize,
}

/// A trained model with everything needed to decode and to reproduce it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub vocabularies: Vocabularies,
    pub model: Model,
    pub history: Vec<EpochMetrics>,
    pub best_epoch: usize,
}

#[derive(Deserialize)]
struct Header {
    format: Option<String>,
    version: Option<u32>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let container = Container {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config,
            vocabularies: self.vocabularies.clone(),
            parameters: self
                .model
                .tensors()
                .into_iter()
                .map(|(name, t)| NamedTensor {
                    name,
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
            history: self.history.clone(),
            best_epoch: self.best_epoch,
        };
        serde_json::to_string(&container).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let header: Header = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if header.format.as_deref() != Some(CHECKPOINT_FORMAT) {
            return Err(Error::Checkpoint(format!("not a checkpoint (format {:?})", header.format)));
        }
        match header.version {
            Some(CHECKPOINT_VERSION) => {}
            found => {
                return Err(Error::CheckpointVersion {
                    found: found.unwrap_or(0),
                    expected: CHECKPOINT_VERSION,
                })
            }
        }
        let c: Container = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        c.config.validate()?;
        let v = &c.vocabularies;
        // Shapes come from the config and vocabularies; values are overwritten below.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = Model::init(c.config.model_config(), v.tokens.len(), v.intents.len(), v.slots.len(), &mut rng)?;
        let names: Vec<(String, Vec<usize>)> = model.tensors().into_iter().map(|(n, t)| (n, t.shape().to_vec())).collect();
        if names.len() != c.parameters.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter arrays, found {}",
                names.len(),
                c.parameters.len()
            )));
        }
        for ((slot, (name, shape)), stored) in model.tensors_mut().into_iter().zip(names).zip(c.parameters) {
            if stored.name != name || stored.shape != shape {
                return Err(Error::Checkpoint(format!(
                    "parameter {:?} {:?} does not match expected {name:?} {shape:?}",
                    stored.name, stored.shape
                )));
            }
            *slot = Tensor::new(stored.shape, stored.data).map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        Ok(Self {
            config: c.config,
            vocabularies: c.vocabularies,
            model,
            history: c.history,
            best_epoch: c.best_epoch,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}
