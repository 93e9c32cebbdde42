//! The EMIT network: triplet embeddings with mask tokens, a transformer
//! encoder, attention pooling, and prediction and forecasting heads.

mod checkpoint;
mod config;
mod net;

pub use checkpoint::{Checkpoint, ParamEntry, CHECKPOINT_FORMAT_VERSION};
pub use config::ModelConfig;
pub use net::{Batch, Components, EmitNet, Forward, TRANSFER_PREFIXES};

use crate::error::{EmitError, Result};
use crate::numerics::ParamStore;
use crate::series::TripletSequence;

/// A network together with its parameter values.
#[derive(Debug, Clone)]
pub struct EmitModel {
    pub net: EmitNet,
    pub store: ParamStore,
}

impl EmitModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let (net, store) = EmitNet::build(config, seed)?;
        Ok(Self { net, store })
    }

    pub fn config(&self) -> &ModelConfig {
        self.net.config()
    }

    /// Positive-class probabilities in evaluation mode, `batch_size` sequences at a time.
    pub fn predict(&self, seqs: &[&TripletSequence], batch_size: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(seqs.len());
        for chunk in seqs.chunks(batch_size.max(1)) {
            let batch = Batch::new(chunk, self.config())?;
            out.extend(self.net.predict_proba(&self.store, &batch)?);
        }
        Ok(out)
    }

    /// Copy embedding, mask-token, and encoder parameters from `source`.
    /// Returns the number of tensors copied.
    pub fn transfer_from(&mut self, source: &EmitModel) -> Result<usize> {
        let mut copied = 0;
        for p in source.store.iter() {
            if !TRANSFER_PREFIXES.iter().any(|pre| p.name.starts_with(pre)) {
                continue;
            }
            if self.store.by_name(&p.name).is_none() {
                return Err(EmitError::CheckpointMismatch(format!(
                    "parameter '{}' missing from target model",
                    p.name
                )));
            }
            self.store.set_value(&p.name, p.value.clone())?;
            copied += 1;
        }
        Ok(copied)
    }
}
