//! JSON checkpoint container.
//!
//! ```json
//! {
//!   "format": "dcl-checkpoint",
//!   "version": 1,
//!   "model": { "view_dims": [..], "embed_dim": 64, "hidden_dim": 128, "n_labels": 6 },
//!   "seed": 1,
//!   "epochs_trained": 100,
//!   "train_config": { .. },
//!   "tensors": [ { "name": "shared_encoder.0.w1", "rows": 32, "cols": 128, "data": [..] }, .. ]
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so save/load is exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelConfig, ModelParams};
use crate::error::{DclError, Result};
use crate::numerics::Matrix;

pub const FORMAT: &str = "dcl-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: ModelConfig,
    pub seed: u64,
    pub epochs_trained: usize,
    #[serde(default)]
    pub train_config: Option<serde_json::Value>,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(
        params: &ModelParams,
        seed: u64,
        epochs_trained: usize,
        train_config: Option<serde_json::Value>,
    ) -> Self {
        let names = ModelParams::names(&params.config);
        let tensors = params
            .tensors()
            .into_iter()
            .zip(names)
            .map(|(t, name)| NamedTensor {
                name,
                rows: t.rows(),
                cols: t.cols(),
                data: t.as_slice().to_vec(),
            })
            .collect();
        Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            model: params.config.clone(),
            seed,
            epochs_trained,
            train_config,
            tensors,
        }
    }

    /// Rebuilds parameters, rejecting tensors that do not fit the stored architecture.
    pub fn params(&self) -> Result<ModelParams> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(DclError::validation(
                "checkpoint",
                format!("unsupported format {:?} v{}", self.format, self.version),
            ));
        }
        let names = ModelParams::names(&self.model);
        if names.len() != self.tensors.len() {
            return Err(DclError::validation(
                "checkpoint",
                format!("{} tensors, architecture needs {}", self.tensors.len(), names.len()),
            ));
        }
        let mut mats = Vec::with_capacity(self.tensors.len());
        for (t, want) in self.tensors.iter().zip(&names) {
            if &t.name != want {
                return Err(DclError::validation(
                    "checkpoint",
                    format!("tensor {:?} found where {want:?} was expected", t.name),
                ));
            }
            let m = Matrix::new(t.rows, t.cols, t.data.clone())
                .map_err(|e| DclError::validation(t.name.clone(), e.to_string()))?;
            mats.push(m);
        }
        ModelParams::from_tensors(&self.model, mats)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).expect("checkpoint serializes");
        fs::write(path, json + "\n").map_err(|e| DclError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| DclError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| DclError::Parse {
            what: "checkpoint",
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}
