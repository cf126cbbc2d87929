use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use super::{ModelSpec, VitiModel};
use crate::tensor::device;
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: u32 = 1;
pub const WEIGHTS_FILE: &str = "model.safetensors";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub shape: Vec<usize>,
    pub dtype: String,
}

/// `manifest.json` of a checkpoint directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub spec: ModelSpec,
    /// Stage that produced the weights (`"1"`, `"2"`, `"3"`, `"viti"`).
    pub stage: String,
    pub step: usize,
    pub tensors: BTreeMap<String, TensorInfo>,
}

impl CheckpointManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| {
            Error::Config(format!("cannot read checkpoint manifest {}: {e}", path.display()))
        })?;
        let manifest: Self = serde_json::from_str(&text)?;
        if manifest.format_version != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!(
                "checkpoint format {} is not supported (expected {CHECKPOINT_FORMAT})",
                manifest.format_version
            )));
        }
        Ok(manifest)
    }
}

/// Outcome of loading a checkpoint into a (possibly larger) model.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    /// Present in both and copied.
    pub loaded: Vec<String>,
    /// Only in the model; left at their fresh initialisation.
    pub fresh: Vec<String>,
    /// Only in the checkpoint; ignored.
    pub unused: Vec<String>,
}

impl VitiModel {
    pub fn save(&self, dir: &Path, stage: &str, step: usize) -> Result<CheckpointManifest> {
        fs::create_dir_all(dir)?;
        let tensors: HashMap<String, Tensor> = self.store.tensors();
        let info = tensors
            .iter()
            .map(|(k, t)| {
                (
                    k.clone(),
                    TensorInfo {
                        shape: t.dims().to_vec(),
                        dtype: format!("{:?}", t.dtype()).to_lowercase(),
                    },
                )
            })
            .collect();
        candle_core::safetensors::save(&tensors, dir.join(WEIGHTS_FILE))?;
        let manifest = CheckpointManifest {
            format_version: CHECKPOINT_FORMAT,
            spec: self.spec.clone(),
            stage: stage.to_string(),
            step,
            tensors: info,
        };
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }

    /// Rebuilds the model described by the checkpoint and loads every tensor.
    pub fn load(dir: &Path) -> Result<(Self, CheckpointManifest)> {
        let manifest = CheckpointManifest::read(dir)?;
        let model = Self::new(&manifest.spec, 0)?;
        let report = model.load_weights(dir)?;
        if !report.fresh.is_empty() || !report.unused.is_empty() {
            return Err(Error::Format(format!(
                "checkpoint does not match its manifest: {} missing, {} extra tensors",
                report.fresh.len(),
                report.unused.len()
            )));
        }
        Ok((model, manifest))
    }

    /// Copies tensors with matching names into this model. Shape mismatches on
    /// shared names are errors.
    pub fn load_weights(&self, dir: &Path) -> Result<LoadReport> {
        let path = dir.join(WEIGHTS_FILE);
        if !path.exists() {
            return Err(Error::Config(format!("checkpoint weights {} not found", path.display())));
        }
        let saved = candle_core::safetensors::load(&path, &device())?;
        let mut report = LoadReport::default();
        for (name, var) in self.store.vars() {
            match saved.get(&name) {
                Some(t) => {
                    if t.dims() != var.dims() {
                        return Err(Error::Config(format!(
                            "tensor `{name}` has shape {:?} in the checkpoint but {:?} in the model",
                            t.dims(),
                            var.dims()
                        )));
                    }
                    var.set(&t.to_dtype(var.dtype())?)?;
                    report.loaded.push(name);
                }
                None => report.fresh.push(name),
            }
        }
        let mut unused: Vec<String> = saved.keys().filter(|k| self.store.get(k).is_none()).cloned().collect();
        unused.sort();
        report.unused = unused;
        Ok(report)
    }
}
