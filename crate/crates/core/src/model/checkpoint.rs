use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmitModel, ModelConfig};
use crate::error::{io_err, EmitError, Result};
use crate::numerics::{Real, Tensor};
use crate::series::{FeatureVocab, NormalizationStats};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// On-disk model: configuration, named parameters, and optionally the
/// feature vocabulary and normalization statistics the model was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model_config: ModelConfig,
    pub parameters: BTreeMap<String, ParamEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<FeatureVocab>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<serde_json::Value>,
}

impl Checkpoint {
    pub fn from_model(model: &EmitModel) -> Self {
        let parameters = model
            .store
            .iter()
            .map(|p| {
                let entry = ParamEntry {
                    shape: p.value.shape().to_vec(),
                    values: p.value.data().iter().map(|v| *v as f64).collect(),
                };
                (p.name.clone(), entry)
            })
            .collect();
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            model_config: *model.config(),
            parameters,
            vocab: None,
            normalization: None,
        }
    }

    pub fn with_vocab(mut self, vocab: &FeatureVocab) -> Self {
        self.vocab = Some(vocab.clone());
        self
    }

    pub fn with_normalization(mut self, stats: &NormalizationStats) -> Result<Self> {
        self.normalization = Some(stats.to_json()?);
        Ok(self)
    }

    /// Normalization statistics, if stored, resolved against the stored vocabulary.
    pub fn normalization_stats(&self) -> Result<Option<NormalizationStats>> {
        match (&self.normalization, &self.vocab) {
            (Some(n), Some(v)) => Ok(Some(NormalizationStats::from_json(n.clone(), v)?)),
            (Some(_), None) => Err(EmitError::CheckpointMismatch(
                "normalization stored without a vocabulary".into(),
            )),
            _ => Ok(None),
        }
    }

    /// Rebuild the model; every parameter must be present with the expected shape.
    pub fn to_model(&self) -> Result<EmitModel> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(EmitError::CheckpointMismatch(format!(
                "unsupported format version {}",
                self.format_version
            )));
        }
        let mut model = EmitModel::new(self.model_config, 0)?;
        if model.store.len() != self.parameters.len() {
            let extra: Vec<&String> = self
                .parameters
                .keys()
                .filter(|k| model.store.by_name(k).is_none())
                .collect();
            return Err(EmitError::CheckpointMismatch(format!(
                "expected {} parameters, found {} (unexpected: {extra:?})",
                model.store.len(),
                self.parameters.len()
            )));
        }
        for p in model.store.iter_mut() {
            let entry = self.parameters.get(&p.name).ok_or_else(|| {
                EmitError::CheckpointMismatch(format!("missing parameter '{}'", p.name))
            })?;
            if entry.shape != p.value.shape() {
                return Err(EmitError::CheckpointMismatch(format!(
                    "parameter '{}' has shape {:?}, expected {:?}",
                    p.name,
                    entry.shape,
                    p.value.shape()
                )));
            }
            let data = entry.values.iter().map(|v| *v as Real).collect();
            p.value = Tensor::new(entry.shape.clone(), data).map_err(|_| {
                EmitError::CheckpointMismatch(format!(
                    "parameter '{}' has {} values for shape {:?}",
                    p.name,
                    entry.values.len(),
                    entry.shape
                ))
            })?;
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(io_err(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }
}
