use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{min_recall_precision, pr_auc, roc_auc, scored};
use crate::error::{io_err, Result};

/// Version string recorded in every report.
pub const VERSION: &str = concat!("emit-", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    pub roc_auc: f64,
    pub pr_auc: f64,
    pub min_re_pr: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    /// Configuration that produced the scores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl MetricReport {
    /// All three metrics over `probs` against `labels`. Both classes must occur.
    pub fn compute(probs: &[f64], labels: &[u8], config_hash: impl Into<String>, seed: u64) -> Result<Self> {
        let ex = scored(probs, labels)?;
        let n_pos = labels.iter().filter(|&&y| y == 1).count();
        Ok(Self {
            roc_auc: roc_auc(&ex)?,
            pr_auc: pr_auc(&ex)?,
            min_re_pr: min_recall_precision(&ex)?,
            n_pos,
            n_neg: labels.len() - n_pos,
            config_hash: config_hash.into(),
            seed,
            version: VERSION.to_string(),
            config: None,
        })
    }

    pub fn with_config<T: Serialize>(mut self, config: &T) -> Result<Self> {
        self.config = Some(serde_json::to_value(config)?);
        Ok(self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path)
    }
}

/// Write `value` as pretty JSON with a trailing newline.
///
/// Field order follows the type's declaration and floats use the shortest
/// representation that parses back to the same value, so equal inputs give
/// byte-identical files.
pub fn emit_report<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}
