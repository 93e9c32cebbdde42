use serde::{Deserialize, Serialize};

use crate::error::{EmitError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredExample {
    pub score: f64,
    pub label: u8,
}

fn check(examples: &[ScoredExample]) -> Result<(usize, usize)> {
    let mut pos = 0;
    for e in examples {
        if !e.score.is_finite() {
            return Err(EmitError::InvalidInput(format!("non-finite score {}", e.score)));
        }
        if e.label > 1 {
            return Err(EmitError::InvalidInput(format!("label {} is not 0 or 1", e.label)));
        }
        pos += usize::from(e.label);
    }
    Ok((pos, examples.len() - pos))
}

/// Score-descending groups of tied examples as `(positives, negatives)`.
fn tie_groups(examples: &[ScoredExample]) -> Vec<(usize, usize)> {
    let mut sorted: Vec<&ScoredExample> = examples.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut last: Option<f64> = None;
    for e in sorted {
        if last != Some(e.score) {
            groups.push((0, 0));
            last = Some(e.score);
        }
        let g = groups.last_mut().expect("group pushed");
        if e.label == 1 {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    groups
}

/// Probability that a random positive outscores a random negative, ties counting ½.
pub fn roc_auc(examples: &[ScoredExample]) -> Result<f64> {
    let (pos, neg) = check(examples)?;
    if pos == 0 || neg == 0 {
        return Err(EmitError::UndefinedMetric("ROC-AUC needs both classes"));
    }
    let mut neg_below = neg as f64;
    let mut wins = 0.0;
    for (p, n) in tie_groups(examples) {
        neg_below -= n as f64;
        wins += p as f64 * (neg_below + 0.5 * n as f64);
    }
    Ok(wins / (pos as f64 * neg as f64))
}

/// Average precision: recall increments times precision, stepping over
/// distinct score thresholds from high to low.
pub fn pr_auc(examples: &[ScoredExample]) -> Result<f64> {
    let (pos, _) = check(examples)?;
    if pos == 0 {
        return Err(EmitError::UndefinedMetric("PR-AUC needs a positive example"));
    }
    let (mut tp, mut seen, mut ap) = (0usize, 0usize, 0.0);
    for (p, n) in tie_groups(examples) {
        tp += p;
        seen += p + n;
        if p > 0 {
            ap += (p as f64 / pos as f64) * (tp as f64 / seen as f64);
        }
    }
    Ok(ap)
}

/// Best value over thresholds of `min(recall, precision)`.
pub fn min_recall_precision(examples: &[ScoredExample]) -> Result<f64> {
    let (pos, _) = check(examples)?;
    if pos == 0 {
        return Err(EmitError::UndefinedMetric("min(Re, Pr) needs a positive example"));
    }
    // The reject-all threshold scores 0.
    let (mut tp, mut seen, mut best) = (0usize, 0usize, 0.0f64);
    for (p, n) in tie_groups(examples) {
        tp += p;
        seen += p + n;
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / seen as f64;
        best = best.max(recall.min(precision));
    }
    Ok(best)
}

/// Pair scores with labels.
pub fn scored(scores: &[f64], labels: &[u8]) -> Result<Vec<ScoredExample>> {
    if scores.len() != labels.len() {
        return Err(EmitError::ShapeMismatch {
            op: "scored",
            left: vec![scores.len()],
            right: vec![labels.len()],
        });
    }
    Ok(scores
        .iter()
        .zip(labels)
        .map(|(&score, &label)| ScoredExample { score, label })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(scores: &[f64], labels: &[u8]) -> Vec<ScoredExample> {
        scored(scores, labels).unwrap()
    }

    #[test]
    fn worked_example() {
        let e = ex(&[0.9, 0.8, 0.3, 0.1], &[1, 0, 1, 0]);
        assert_eq!(roc_auc(&e).unwrap(), 0.75);
        assert!((pr_auc(&e).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert!((min_recall_precision(&e).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn trivial_cases() {
        let sep = ex(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]);
        assert_eq!(roc_auc(&sep).unwrap(), 1.0);
        assert_eq!(pr_auc(&sep).unwrap(), 1.0);
        assert_eq!(min_recall_precision(&sep).unwrap(), 1.0);
        assert_eq!(roc_auc(&ex(&[0.5; 4], &[1, 0, 1, 0])).unwrap(), 0.5);
        let last = ex(&[0.9, 0.8, 0.1], &[0, 0, 1]);
        assert!((pr_auc(&last).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(min_recall_precision(&ex(&[0.9, 0.5, 0.2], &[1, 0, 0])).unwrap(), 1.0);
    }

    #[test]
    fn undefined_inputs() {
        assert!(roc_auc(&ex(&[0.1, 0.2], &[1, 1])).is_err());
        assert!(pr_auc(&ex(&[0.1], &[0])).is_err());
        assert!(min_recall_precision(&[]).is_err());
        assert!(roc_auc(&ex(&[f64::NAN, 0.2], &[1, 0])).is_err());
    }
}
