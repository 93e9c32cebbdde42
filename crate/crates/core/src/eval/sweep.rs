use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_experiment, PreparedData, RunConfig};
use crate::error::{EmitError, Result};

/// One grid point of a sensitivity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub theta: f64,
    pub alpha_mask: f64,
    pub seed: u64,
    pub roc_auc: f64,
    pub pr_auc: f64,
    pub min_re_pr: f64,
}

/// Run the full pipeline at every `(theta, alpha_mask, seed)` combination.
/// Rows come back in grid order: theta, then alpha, then seed.
pub fn run_sweep(
    base: &RunConfig,
    data: &PreparedData,
    thetas: &[f64],
    alphas: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepRow>> {
    if thetas.is_empty() || alphas.is_empty() || seeds.is_empty() {
        return Err(EmitError::InvalidConfig("sweep grid is empty".into()));
    }
    let mut jobs = Vec::with_capacity(thetas.len() * alphas.len() * seeds.len());
    for &theta in thetas {
        for &alpha_mask in alphas {
            for &seed in seeds {
                let mut cfg = base.clone();
                cfg.pretrain_enabled = true;
                cfg.with_seed(seed);
                cfg.pretrain.mask.theta = theta;
                cfg.pretrain.mask.alpha_mask = alpha_mask;
                cfg.validate()?;
                jobs.push(cfg);
            }
        }
    }
    jobs.par_iter()
        .map(|cfg| {
            let m = run_experiment(cfg, data)?.reports.metrics;
            let mask = cfg.pretrain.mask;
            log::info!(
                "sweep theta {} alpha {} seed {}: ROC-AUC {:.4}",
                mask.theta,
                mask.alpha_mask,
                cfg.seed,
                m.roc_auc
            );
            Ok(SweepRow {
                theta: mask.theta,
                alpha_mask: mask.alpha_mask,
                seed: cfg.seed,
                roc_auc: m.roc_auc,
                pr_auc: m.pr_auc,
                min_re_pr: m.min_re_pr,
            })
        })
        .collect()
}
