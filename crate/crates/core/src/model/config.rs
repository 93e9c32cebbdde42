use serde::{Deserialize, Serialize};

use crate::error::{EmitError, Result};

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Embedding width.
    pub d: usize,
    /// Encoder block count.
    pub blocks: usize,
    pub heads: usize,
    /// Aggregation hidden width.
    pub d_a: usize,
    pub num_features: usize,
    pub max_len: usize,
    pub dropout: f64,
    /// Encoder feed-forward width.
    pub ffn_hidden: usize,
}

impl ModelConfig {
    pub const DEFAULT_D: usize = 48;

    /// Default architecture for `num_features` features.
    pub fn new(num_features: usize) -> Self {
        let d = Self::DEFAULT_D;
        Self {
            d,
            blocks: 2,
            heads: 4,
            d_a: d,
            num_features,
            max_len: 880,
            dropout: 0.2,
            ffn_hidden: 2 * d,
        }
    }

    /// Zero blocks is accepted and makes the encoder the identity.
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("d", self.d),
            ("heads", self.heads),
            ("d_a", self.d_a),
            ("num_features", self.num_features),
            ("max_len", self.max_len),
            ("ffn_hidden", self.ffn_hidden),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(EmitError::InvalidConfig(format!("{name} must be at least 1")));
        }
        if !self.d.is_multiple_of(self.heads) {
            return Err(EmitError::InvalidConfig(format!(
                "d = {} is not divisible by heads = {}",
                self.d, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(EmitError::InvalidConfig(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.heads
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ModelConfig::new(3).validate().unwrap();
    }

    #[test]
    fn indivisible_heads_rejected() {
        let cfg = ModelConfig { d: 50, ..ModelConfig::new(3) };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("divisible"), "{err}");
    }
}
