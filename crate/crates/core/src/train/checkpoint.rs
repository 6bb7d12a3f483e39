//! Single-file checkpoint container: a JSON envelope with a format-version
//! header, the model config (including the condition schema), named
//! parameter tensors as base64 blobs with explicit shapes and byte order,
//! optimizer state and the training curve.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::TrainConfig;
use crate::model::{Model, ModelConfig};
use crate::nn::{Adam, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("unsupported byte order `{0}`")]
    ByteOrder(String),
    #[error("tensor `{name}`: {msg}")]
    Tensor { name: String, msg: String },
    #[error("model rebuild failed: {0}")]
    Model(#[from] crate::model::ModelError),
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: Model,
    pub train_config: Option<TrainConfig>,
    pub curve: Vec<EpochStats>,
    pub optimizer: Option<Adam>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Serialize, Deserialize)]
struct TensorBlob {
    shape: [usize; 2],
    data: String,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format_version: u32,
    byte_order: String,
    model_config: ModelConfig,
    train_config: Option<TrainConfig>,
    curve: Vec<EpochStats>,
    tensors: BTreeMap<String, TensorBlob>,
    optimizer: Option<Adam>,
}

fn encode_tensor(t: &Tensor) -> TensorBlob {
    let mut bytes = Vec::with_capacity(t.data.len() * 8);
    for v in &t.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    TensorBlob {
        shape: [t.rows, t.cols],
        data: BASE64.encode(bytes),
    }
}

fn decode_tensor(name: &str, blob: &TensorBlob) -> Result<Tensor, CheckpointError> {
    let bytes = BASE64.decode(&blob.data).map_err(|e| CheckpointError::Tensor {
        name: name.into(),
        msg: e.to_string(),
    })?;
    let expected = blob.shape[0] * blob.shape[1] * 8;
    if bytes.len() != expected {
        return Err(CheckpointError::Tensor {
            name: name.into(),
            msg: format!("expected {expected} bytes, found {}", bytes.len()),
        });
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Tensor::from_vec(blob.shape[0], blob.shape[1], data))
}

impl Checkpoint {
    pub fn from_model(model: Model) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            model,
            train_config: None,
            curve: Vec::new(),
            optimizer: None,
        }
    }

    pub fn to_json(&self) -> Result<String, CheckpointError> {
        let tensors: BTreeMap<String, TensorBlob> = self
            .model
            .params
            .iter()
            .map(|(name, t)| (name.to_string(), encode_tensor(t)))
            .collect();
        let envelope = Envelope {
            format_version: self.format_version,
            byte_order: "little".into(),
            model_config: self.model.config.clone(),
            train_config: self.train_config.clone(),
            curve: self.curve.clone(),
            tensors,
            optimizer: self.optimizer.clone(),
        };
        Ok(serde_json::to_string(&envelope)?)
    }

    pub fn from_json(text: &str) -> Result<Checkpoint, CheckpointError> {
        let envelope: Envelope = serde_json::from_str(text)?;
        if envelope.format_version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version {
                found: envelope.format_version,
                expected: CHECKPOINT_VERSION,
            });
        }
        if envelope.byte_order != "little" {
            return Err(CheckpointError::ByteOrder(envelope.byte_order));
        }
        // Rebuild the parameter layout from the config, then load values.
        let mut model = Model::init(envelope.model_config, 0)?;
        for slot in 0..model.params.len() {
            let name = model.params.name(slot).to_string();
            let blob = envelope
                .tensors
                .get(&name)
                .ok_or_else(|| CheckpointError::Tensor {
                    name: name.clone(),
                    msg: "missing from checkpoint".into(),
                })?;
            let tensor = decode_tensor(&name, blob)?;
            let current = model.params.get(slot);
            if (tensor.rows, tensor.cols) != (current.rows, current.cols) {
                return Err(CheckpointError::Tensor {
                    name,
                    msg: format!(
                        "shape {:?} does not match config-derived {:?}",
                        (tensor.rows, tensor.cols),
                        (current.rows, current.cols)
                    ),
                });
            }
            *model.params.get_mut(slot) = tensor;
        }
        Ok(Checkpoint {
            format_version: envelope.format_version,
            model,
            train_config: envelope.train_config,
            curve: envelope.curve,
            optimizer: envelope.optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
        Checkpoint::from_json(&fs::read_to_string(path)?)
    }

    /// Training log as CSV: epoch, train_loss, val_loss, lr.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,lr\n");
        for row in &self.curve {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.epoch, row.train_loss, row.val_loss, row.lr
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::conditioning::ConditionSpec;
    use crate::model::heads::DistanceGrid;
    use crate::model::EncoderConfig;

    fn small_model() -> Model {
        let config = ModelConfig {
            elements: vec![1, 6, 8],
            encoder: EncoderConfig {
                features: 4,
                interaction_blocks: 1,
                cutoff: 10.0,
                rbf_centers: 3,
            },
            conditions: vec![ConditionSpec::scalar("gap", Some("eV"), 2.0, 11.0, 2.25)],
            aggregation_widths: vec![4],
            type_head_hidden: vec![6],
            dist_head_hidden: vec![6],
            grid: DistanceGrid {
                bins: 8,
                spacing: 0.5,
            },
        };
        Model::init(config, 77).unwrap()
    }

    #[test]
    fn roundtrip_preserves_everything() {
        let mut checkpoint = Checkpoint::from_model(small_model());
        checkpoint.curve.push(EpochStats {
            epoch: 0,
            train_loss: 1.25,
            val_loss: 1.5,
            lr: 1e-4,
        });
        let json = checkpoint.to_json().unwrap();
        let loaded = Checkpoint::from_json(&json).unwrap();
        assert_eq!(loaded.model.config, checkpoint.model.config);
        assert_eq!(loaded.curve, checkpoint.curve);
        for ((na, ta), (nb, tb)) in checkpoint.model.params.iter().zip(loaded.model.params.iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta.data, tb.data, "tensor {na} changed");
        }
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let checkpoint = Checkpoint::from_model(small_model());
        let json = checkpoint.to_json().unwrap().replace(
            "\"format_version\":1",
            "\"format_version\":99",
        );
        match Checkpoint::from_json(&json) {
            Err(CheckpointError::Version { found: 99, .. }) => {}
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn curve_csv_has_header_and_rows() {
        let mut checkpoint = Checkpoint::from_model(small_model());
        checkpoint.curve.push(EpochStats {
            epoch: 0,
            train_loss: 2.0,
            val_loss: 2.5,
            lr: 1e-4,
        });
        let csv = checkpoint.curve_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "epoch,train_loss,val_loss,lr");
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("0,2,2.5,"));
    }
}
