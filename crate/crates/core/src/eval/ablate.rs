use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_experiment, PreparedData, RunConfig};
use crate::error::{EmitError, Result};
use crate::masking::{mask_statistics, resolve_random_rate, MaskVariant};

/// Mean and sample standard deviation over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    /// `None` with a single seed.
    pub std: Option<f64>,
    pub n: usize,
}

impl Spread {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(EmitError::Empty("value list"));
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = (n > 1).then(|| {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        });
        Ok(Self { mean, std, n })
    }
}

impl std::fmt::Display for Spread {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.std {
            Some(s) => write!(f, "{:.4} ± {:.4}", self.mean, s),
            None => write!(f, "{:.4}", self.mean),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub variant: MaskVariant,
    pub seed: u64,
    pub roc_auc: f64,
    pub pr_auc: f64,
    pub min_re_pr: f64,
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: MaskVariant,
    pub roc_auc: Spread,
    pub pr_auc: Spread,
    pub min_re_pr: Spread,
    /// Masked share of training positions in one draw.
    pub mask_rate: f64,
}

/// Event-composite masking against uniform random masking at the same budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetComparison {
    /// Per-position probability given to the random variant.
    pub matched_rate: f64,
    pub composite_mask_rate: f64,
    pub random_mask_rate: f64,
    /// Composite mean minus random mean.
    pub roc_auc_delta: f64,
    pub pr_auc_delta: f64,
    pub min_re_pr_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seeds: Vec<u64>,
    pub summary: Vec<VariantSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<BudgetComparison>,
    pub runs: Vec<AblationRun>,
    pub config_hash: String,
    pub version: String,
    pub config: RunConfig,
}

impl AblationReport {
    pub fn variant(&self, v: MaskVariant) -> Option<&VariantSummary> {
        self.summary.iter().find(|s| s.variant == v)
    }

    /// Plain-text comparison table, one row per variant.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<14} {:>19} {:>19} {:>19} {:>9}\n",
            "variant", "ROC-AUC", "PR-AUC", "min(Re,Pr)", "mask rate"
        );
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{:<14} {:>19} {:>19} {:>19} {:>9.4}",
                s.variant.as_str(),
                s.roc_auc.to_string(),
                s.pr_auc.to_string(),
                s.min_re_pr.to_string(),
                s.mask_rate
            );
        }
        if let Some(c) = &self.comparison {
            let _ = writeln!(
                out,
                "composite - random at mask rate {:.4}: ROC-AUC {:+.4}, PR-AUC {:+.4}, min(Re,Pr) {:+.4}",
                c.matched_rate, c.roc_auc_delta, c.pr_auc_delta, c.min_re_pr_delta
            );
        }
        out
    }
}

/// Pretrain, fine-tune and test every variant under every seed.
///
/// The random variant's rate is pinned to the composite event mask's expected
/// rate on the training split. Runs execute in parallel; results do not
/// depend on scheduling.
pub fn run_ablation(
    base: &RunConfig,
    data: &PreparedData,
    variants: &[MaskVariant],
    seeds: &[u64],
) -> Result<AblationReport> {
    if variants.is_empty() || seeds.is_empty() {
        return Err(EmitError::InvalidConfig("ablation needs at least one variant and one seed".into()));
    }
    base.validate()?;
    let mut event_mask = base.pretrain.mask;
    event_mask.variant = MaskVariant::Composite;
    let matched_rate = resolve_random_rate(&data.train, &event_mask)?;

    let config_for = |variant: MaskVariant, seed: u64| {
        let mut cfg = base.clone();
        cfg.pretrain_enabled = true;
        cfg.with_seed(seed);
        cfg.pretrain.mask.variant = variant;
        cfg.pretrain.mask.random_rate = (variant == MaskVariant::Random).then_some(matched_rate);
        cfg
    };
    let jobs: Vec<(MaskVariant, u64)> = variants
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(variant, seed)| {
            let out = run_experiment(&config_for(variant, seed), data)?;
            let m = &out.reports.metrics;
            log::info!("ablation {variant} seed {seed}: ROC-AUC {:.4}", m.roc_auc);
            Ok(AblationRun {
                variant,
                seed,
                roc_auc: m.roc_auc,
                pr_auc: m.pr_auc,
                min_re_pr: m.min_re_pr,
                pretrain_epochs: out.reports.pretrain.as_ref().map_or(0, |r| r.epochs_run),
                finetune_epochs: out.reports.finetune.epochs_run,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut summary = Vec::with_capacity(variants.len());
    for &variant in variants {
        let mine: Vec<&AblationRun> = runs.iter().filter(|r| r.variant == variant).collect();
        let pick = |f: fn(&AblationRun) -> f64| Spread::of(&mine.iter().map(|r| f(r)).collect::<Vec<_>>());
        let stats = mask_statistics(&data.train, &config_for(variant, seeds[0]).pretrain.mask, &data.vocab)?;
        summary.push(VariantSummary {
            variant,
            roc_auc: pick(|r| r.roc_auc)?,
            pr_auc: pick(|r| r.pr_auc)?,
            min_re_pr: pick(|r| r.min_re_pr)?,
            mask_rate: stats.mask_rate,
        });
    }
    let find = |v| summary.iter().find(|s: &&VariantSummary| s.variant == v);
    let comparison = match (find(MaskVariant::Composite), find(MaskVariant::Random)) {
        (Some(c), Some(r)) => Some(BudgetComparison {
            matched_rate,
            composite_mask_rate: c.mask_rate,
            random_mask_rate: r.mask_rate,
            roc_auc_delta: c.roc_auc.mean - r.roc_auc.mean,
            pr_auc_delta: c.pr_auc.mean - r.pr_auc.mean,
            min_re_pr_delta: c.min_re_pr.mean - r.min_re_pr.mean,
        }),
        _ => None,
    };
    Ok(AblationReport {
        seeds: seeds.to_vec(),
        summary,
        comparison,
        runs,
        config_hash: base.hash(),
        version: super::VERSION.to_string(),
        config: base.clone(),
    })
}
