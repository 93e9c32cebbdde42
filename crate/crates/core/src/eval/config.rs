use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, EmitError, Result};
use crate::masking::MaskVariant;
use crate::model::ModelConfig;
use crate::series::{SplitSpec, SynthConfig};
use crate::training::{FinetuneConfig, PretrainConfig};

/// Architecture settings; the feature count comes from the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub d: usize,
    pub blocks: usize,
    pub heads: usize,
    pub d_a: usize,
    pub max_len: usize,
    /// Dropout during pretraining; fine-tuning uses its own rate.
    pub dropout: f64,
    pub ffn_hidden: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let m = ModelConfig::new(1);
        Self {
            d: m.d,
            blocks: m.blocks,
            heads: m.heads,
            d_a: m.d_a,
            max_len: m.max_len,
            dropout: m.dropout,
            ffn_hidden: m.ffn_hidden,
        }
    }
}

impl ModelSettings {
    pub fn for_features(&self, num_features: usize) -> ModelConfig {
        ModelConfig {
            d: self.d,
            blocks: self.blocks,
            heads: self.heads,
            d_a: self.d_a,
            num_features,
            max_len: self.max_len,
            dropout: self.dropout,
            ffn_hidden: self.ffn_hidden,
        }
    }
}

/// Everything one experiment needs: data source, split, architecture and
/// both training stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// JSON-lines dataset; synthetic data is generated when absent.
    pub data: Option<PathBuf>,
    pub synth: SynthConfig,
    /// Seed for synthetic generation.
    pub data_seed: u64,
    pub split: SplitSpec,
    pub model: ModelSettings,
    /// Run pretraining before fine-tuning.
    pub pretrain_enabled: bool,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    /// Seed for model initialization, masks, batching and dropout.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            synth: SynthConfig::default(),
            data_seed: 0,
            split: SplitSpec::default(),
            model: ModelSettings::default(),
            pretrain_enabled: true,
            pretrain: PretrainConfig::default(),
            finetune: FinetuneConfig::default(),
            seed: 0,
        }
    }
}

/// Command-line style overrides applied on top of a loaded [`RunConfig`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub theta: Option<f64>,
    pub alpha_mask: Option<f64>,
    pub variant: Option<MaskVariant>,
    pub lambda: Option<f64>,
    pub label_fraction: Option<f64>,
    pub horizon: Option<f64>,
    pub data: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(io_err(path))
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.model.for_features(1).validate()?;
        self.pretrain.validate()?;
        self.finetune.validate()
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(seed) = o.seed {
            self.with_seed(seed);
        }
        if let Some(t) = o.theta {
            self.pretrain.mask.theta = t;
        }
        if let Some(a) = o.alpha_mask {
            self.pretrain.mask.alpha_mask = a;
        }
        if let Some(v) = o.variant {
            self.pretrain.mask.variant = v;
        }
        if let Some(l) = o.lambda {
            self.pretrain.lambda = l;
        }
        if let Some(f) = o.label_fraction {
            self.finetune.label_fraction = f;
        }
        if let Some(h) = o.horizon {
            self.pretrain.horizon = h;
        }
        if o.data.is_some() {
            self.data.clone_from(&o.data);
        }
        self.validate()
    }

    /// Set the training seed everywhere it is consumed.
    pub fn with_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.pretrain.seed = seed;
        self.pretrain.mask.seed = seed;
        self.finetune.seed = seed;
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

/// Hex SHA-256 of a value's JSON encoding.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("configuration serializes");
    hex::encode(Sha256::digest(bytes))
}

/// Parse `start:end:step` or a comma-separated list into grid values.
///
/// Range endpoints are inclusive; values are rounded to 12 decimals so that
/// `0:1:0.1` yields exactly `0.3` rather than `0.30000000000000004`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = |m: &str| EmitError::InvalidConfig(format!("grid '{spec}': {m}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("not a number"));
    let parts: Vec<&str> = spec.split(':').collect();
    let values = match parts.as_slice() {
        [start, end, step] => {
            let (start, end, step) = (num(start)?, num(end)?, num(step)?);
            if !(step > 0.0) || !(end >= start) || !start.is_finite() || !end.is_finite() {
                return Err(bad("need start <= end and a positive step"));
            }
            let n = ((end - start) / step + 1e-9).floor() as usize;
            (0..=n)
                .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
                .collect()
        }
        [list] => list.split(',').map(num).collect::<Result<Vec<_>>>()?,
        _ => return Err(bad("expected start:end:step or a comma list")),
    };
    if values.is_empty() {
        return Err(bad("no values"));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_arithmetic() {
        let g = parse_grid("0:1:0.1").unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g[3], 0.3);
        assert_eq!(g[10], 1.0);
        assert_eq!(parse_grid("0.1,0.01,0.001").unwrap(), vec![0.1, 0.01, 0.001]);
        assert_eq!(parse_grid("0.5").unwrap(), vec![0.5]);
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("a,b").is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 3}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"pretrain": {"lamda": 1}}"#).is_err());
        let cfg: RunConfig = serde_json::from_str(r#"{"pretrain": {"lambda": 0.5}}"#).unwrap();
        assert_eq!(cfg.pretrain.lambda, 0.5);
        assert_eq!(cfg.finetune, FinetuneConfig::default());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.with_seed(1);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn overrides_apply_and_validate() {
        let mut cfg = RunConfig::default();
        let o = Overrides {
            seed: Some(4),
            theta: Some(0.1),
            variant: Some(MaskVariant::Random),
            ..Overrides::default()
        };
        cfg.apply(&o).unwrap();
        assert_eq!((cfg.pretrain.mask.seed, cfg.finetune.seed), (4, 4));
        assert_eq!(cfg.pretrain.mask.variant, MaskVariant::Random);
        let bad = Overrides {
            alpha_mask: Some(2.0),
            ..Overrides::default()
        };
        assert!(cfg.apply(&bad).is_err());
    }
}
