use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub recon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub forecast: Option<f64>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub train: LossBreakdown,
    pub validation: LossBreakdown,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub validation_roc_auc: Option<f64>,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    EarlyStopping,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stop_reason: StopReason,
    pub train_size: usize,
    /// Training batches skipped because nothing in them was masked.
    pub skipped_batches: usize,
}

impl TrainReport {
    /// Copy with every wall-time field zeroed, for run-to-run comparison.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        for e in &mut r.epochs {
            e.wall_time_secs = 0.0;
        }
        r
    }

    pub fn best(&self) -> &EpochLog {
        &self.epochs[self.best_epoch - 1]
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(io_err(path))
    }
}

/// Tracks the best monitored value; stops after more than `patience`
/// consecutive epochs without strict improvement.
#[derive(Debug, Clone)]
pub(crate) struct EarlyStopper {
    patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            best_epoch: 0,
            stale: 0,
        }
    }

    /// Record a value where lower is better; returns true if it is a new best.
    pub fn observe(&mut self, epoch: usize, value: f64) -> bool {
        if self.best.is_none_or(|b| value < b) {
            self.best = Some(value);
            self.best_epoch = epoch;
            self.stale = 0;
            true
        } else {
            self.stale += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.stale > self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_patience_stops_on_first_regression() {
        let mut s = EarlyStopper::new(0);
        assert!(s.observe(1, 1.0));
        assert!(!s.should_stop());
        assert!(!s.observe(2, 1.0));
        assert!(s.should_stop());
        assert_eq!(s.best_epoch(), 1);
    }

    #[test]
    fn patience_counts_consecutive_failures() {
        let mut s = EarlyStopper::new(2);
        for (e, v) in [(1, 3.0), (2, 4.0), (3, 2.0), (4, 5.0), (5, 5.0)] {
            s.observe(e, v);
            assert!(!s.should_stop());
        }
        s.observe(6, 2.5);
        assert!(s.should_stop());
        assert_eq!(s.best_epoch(), 3);
    }
}
