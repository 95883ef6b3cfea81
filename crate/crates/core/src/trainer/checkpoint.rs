//! JSON checkpoints: parameters as base64 little-endian f64 plus the grammar
//! spec, configs, optimizer moments and metric history.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Adam, MetricsRecord, TrainConfig};
use crate::error::{Error, Result};
use crate::grammar::GrammarSpec;
use crate::model::{Model, ModelConfig};
use crate::tensor::{ParamStore, Tensor};

pub const CHECKPOINT_FORMAT: &str = "groundgram-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub name: String,
    pub shape: Vec<usize>,
    /// Little-endian f64 bytes, base64.
    pub data: String,
}

pub fn encode_f64(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f64(text: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Format(format!("bad base64 tensor data: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format("tensor byte length is not a multiple of 8".into()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn store_tensor(name: &str, t: &Tensor) -> StoredTensor {
    StoredTensor {
        name: name.to_string(),
        shape: t.shape().to_vec(),
        data: encode_f64(t.data()),
    }
}

fn load_tensor(s: &StoredTensor) -> Result<Tensor> {
    Tensor::new(s.shape.clone(), decode_f64(&s.data)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<StoredTensor>,
    pub v: Vec<StoredTensor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// Completed epochs.
    pub epoch: usize,
    pub spec: GrammarSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub params: Vec<StoredTensor>,
    pub adam: Option<AdamState>,
    pub metrics: Vec<MetricsRecord>,
}

impl Checkpoint {
    pub fn new(model: &Model, train: &TrainConfig, epoch: usize, adam: Option<&Adam>, metrics: &[MetricsRecord]) -> Self {
        let names: Vec<&str> = model.store.iter().map(|(_, n, _)| n).collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            epoch,
            spec: model.spec.clone(),
            model: model.config.clone(),
            train: train.clone(),
            params: model.store.iter().map(|(_, n, t)| store_tensor(n, t)).collect(),
            adam: adam.map(|a| AdamState {
                t: a.t,
                m: a.m.iter().zip(&names).map(|(t, n)| store_tensor(n, t)).collect(),
                v: a.v.iter().zip(&names).map(|(t, n)| store_tensor(n, t)).collect(),
            }),
            metrics: metrics.to_vec(),
        }
    }

    pub fn store(&self) -> Result<ParamStore> {
        let mut store = ParamStore::new();
        for p in &self.params {
            store.add(p.name.clone(), load_tensor(p)?)?;
        }
        Ok(store)
    }

    pub fn model(&self) -> Result<Model> {
        Model::from_store(self.spec.clone(), self.model.clone(), &self.store()?)
    }

    /// Optimizer state aligned with `model`'s parameter order.
    pub fn adam(&self, model: &Model) -> Result<Option<Adam>> {
        let Some(state) = &self.adam else { return Ok(None) };
        let order = |list: &[StoredTensor]| -> Result<Vec<Tensor>> {
            model
                .store
                .iter()
                .map(|(_, name, _)| {
                    let s = list
                        .iter()
                        .find(|s| s.name == name)
                        .ok_or_else(|| Error::Format(format!("optimizer state lacks {name}")))?;
                    load_tensor(s)
                })
                .collect()
        };
        Ok(Some(Adam {
            config: self.train.adam,
            t: state.t,
            m: order(&state.m)?,
            v: order(&state.v)?,
        }))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "{}: not a version {CHECKPOINT_VERSION} checkpoint",
                path.display()
            )));
        }
        Ok(ck)
    }
}
