use serde::Serialize;

use super::{classify_positions, plan_sequence, MaskConfig, MaskVariant, Significance};
use crate::error::{EmitError, Result};
use crate::series::{FeatureVocab, LabeledSequence};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FeatureMaskStats {
    pub feature: String,
    pub observations: usize,
    pub significant: usize,
    pub insignificant: usize,
    pub singleton: usize,
    pub masked: usize,
}

/// Summary of one mask draw over a dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaskStats {
    pub sequences: usize,
    pub positions: usize,
    pub significant: usize,
    pub insignificant: usize,
    pub singleton: usize,
    pub masked: usize,
    pub masked_significant: usize,
    pub masked_insignificant: usize,
    /// Masked share of significant positions; `None` when there are none.
    pub significant_mask_fraction: Option<f64>,
    pub insignificant_mask_fraction: Option<f64>,
    pub mask_rate: f64,
    /// Expected masked count under the selection probabilities.
    pub expected_masked: f64,
    pub theta: f64,
    pub alpha_mask: f64,
    pub variant: MaskVariant,
    pub per_feature: Vec<FeatureMaskStats>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Classify and draw masks (epoch 0) for every sequence, then tally.
///
/// Sequences are expected to be normalized already.
pub fn mask_statistics(
    data: &[LabeledSequence],
    config: &MaskConfig,
    vocab: &FeatureVocab,
) -> Result<MaskStats> {
    if data.is_empty() {
        return Err(EmitError::Empty("dataset"));
    }
    config.validate()?;
    let mut config = *config;
    if config.variant == MaskVariant::Random && config.random_rate.is_none() {
        config.random_rate = Some(resolve_random_rate(data, &config)?);
    }

    let mut per_feature: Vec<FeatureMaskStats> = vocab
        .names()
        .iter()
        .map(|n| FeatureMaskStats {
            feature: n.clone(),
            ..FeatureMaskStats::default()
        })
        .collect();
    let (mut sig, mut insig, mut single) = (0, 0, 0);
    let (mut m_sig, mut m_insig, mut masked, mut positions) = (0, 0, 0, 0);
    let mut expected = 0.0;

    for item in data {
        let seq = &item.sequence;
        seq.check_vocab(vocab)?;
        let classes = classify_positions(seq, config.theta);
        let plan = plan_sequence(seq, &config, 0)?;
        positions += seq.len();
        for ((o, class), &m) in seq.observations().iter().zip(&classes).zip(plan.masked()) {
            let fs = &mut per_feature[o.feature];
            fs.observations += 1;
            fs.masked += usize::from(m);
            masked += usize::from(m);
            match class {
                Significance::Significant => {
                    sig += 1;
                    fs.significant += 1;
                    m_sig += usize::from(m);
                }
                Significance::Insignificant => {
                    insig += 1;
                    fs.insignificant += 1;
                    m_insig += usize::from(m);
                }
                Significance::Singleton => {
                    single += 1;
                    fs.singleton += 1;
                }
            }
            expected += match (config.variant, class) {
                (MaskVariant::Random, _) => config.random_rate.unwrap_or(0.0),
                (_, Significance::Significant) => 1.0 - config.alpha_mask,
                (_, Significance::Insignificant) => config.alpha_mask,
                (_, Significance::Singleton) => 0.0,
            };
        }
    }

    Ok(MaskStats {
        sequences: data.len(),
        positions,
        significant: sig,
        insignificant: insig,
        singleton: single,
        masked,
        masked_significant: m_sig,
        masked_insignificant: m_insig,
        significant_mask_fraction: ratio(m_sig, sig),
        insignificant_mask_fraction: ratio(m_insig, insig),
        mask_rate: ratio(masked, positions).unwrap_or(0.0),
        expected_masked: expected,
        theta: config.theta,
        alpha_mask: config.alpha_mask,
        variant: config.variant,
        per_feature,
    })
}

/// Expected per-position masking probability of the event rule over `data`.
/// Used as the random baseline's rate so both variants have the same budget.
pub fn resolve_random_rate(data: &[LabeledSequence], config: &MaskConfig) -> Result<f64> {
    let (mut expected, mut n) = (0.0, 0usize);
    for item in data {
        for class in classify_positions(&item.sequence, config.theta) {
            n += 1;
            expected += match class {
                Significance::Significant => 1.0 - config.alpha_mask,
                Significance::Insignificant => config.alpha_mask,
                Significance::Singleton => 0.0,
            };
        }
    }
    ratio(1, n)
        .map(|inv| expected * inv)
        .ok_or(EmitError::Empty("dataset"))
}
