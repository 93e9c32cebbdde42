use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabeledSequence;
use crate::error::{EmitError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
    /// Stratified fraction of the training split to keep, for label-scarce runs.
    pub label_fraction: Option<f64>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
            seed: 0,
            label_fraction: None,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fr = [self.train, self.validation, self.test];
        if fr.iter().any(|f| !(*f > 0.0)) {
            return Err(EmitError::InvalidConfig("split fractions must be positive".into()));
        }
        let total: f64 = fr.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(EmitError::InvalidConfig(format!(
                "split fractions sum to {total}, expected 1"
            )));
        }
        check_label_fraction(self.label_fraction)
    }
}

pub(crate) fn check_label_fraction(f: Option<f64>) -> Result<()> {
    match f {
        Some(f) if !(f > 0.0 && f <= 1.0) => Err(EmitError::InvalidConfig(format!(
            "label fraction {f} outside (0, 1]"
        ))),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<LabeledSequence>,
    pub validation: Vec<LabeledSequence>,
    pub test: Vec<LabeledSequence>,
}

/// Shuffle deterministically by seed and cut into train/validation/test.
/// The label fraction, if any, thins the training split only.
pub fn split(data: &[LabeledSequence], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let n_train = ((spec.train * n as f64).round() as usize).min(n);
    let n_val = ((spec.validation * n as f64).round() as usize).min(n - n_train);
    let pick = |idx: &[usize]| idx.iter().map(|&i| data[i].clone()).collect::<Vec<_>>();
    let mut train = pick(&order[..n_train]);
    let validation = pick(&order[n_train..n_train + n_val]);
    let test = pick(&order[n_train + n_val..]);
    if let Some(f) = spec.label_fraction {
        train = stratified_subsample(&train, f, spec.seed)?;
    }
    Ok(Split {
        train,
        validation,
        test,
    })
}

/// Keep `round(fraction · count)` sequences of each label class (at least one
/// per non-empty class), preserving the input order.
pub fn stratified_subsample(
    data: &[LabeledSequence],
    fraction: f64,
    seed: u64,
) -> Result<Vec<LabeledSequence>> {
    check_label_fraction(Some(fraction))?;
    let mut strata: BTreeMap<Option<u8>, Vec<usize>> = BTreeMap::new();
    for (i, item) in data.iter().enumerate() {
        strata.entry(item.label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1abe);
    let mut keep = Vec::new();
    for (_, mut idx) in strata {
        let k = ((fraction * idx.len() as f64).round() as usize).clamp(1, idx.len());
        idx.shuffle(&mut rng);
        keep.extend_from_slice(&idx[..k]);
    }
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| data[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{Observation, TripletSequence};

    fn data(labels: &[u8]) -> Vec<LabeledSequence> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let s = TripletSequence::new(format!("s{i}"), vec![Observation::new(0.0, 0.0, 0)])
                    .unwrap();
                LabeledSequence::new(s, Some(l)).unwrap()
            })
            .collect()
    }

    #[test]
    fn sizes_follow_fractions() {
        let d = data(&[0; 10]);
        let s = split(&d, &SplitSpec::default()).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (8, 1, 1));
    }

    #[test]
    fn fractions_must_sum_to_one() {
        let spec = SplitSpec {
            train: 0.8,
            validation: 0.3,
            ..SplitSpec::default()
        };
        assert!(split(&data(&[0; 4]), &spec).is_err());
    }

    #[test]
    fn same_seed_same_split() {
        let d = data(&[0, 1, 0, 1, 0, 1, 0, 1, 1, 0]);
        let spec = SplitSpec {
            seed: 9,
            ..SplitSpec::default()
        };
        assert_eq!(split(&d, &spec).unwrap(), split(&d, &spec).unwrap());
    }

    #[test]
    fn label_fraction_is_stratified() {
        let d = data(&[1, 0, 1, 0, 1, 0, 1, 0]);
        let kept = stratified_subsample(&d, 0.5, 3).unwrap();
        let pos = kept.iter().filter(|s| s.label == Some(1)).count();
        assert_eq!((kept.len(), pos), (4, 2));
        assert!(stratified_subsample(&d, 0.0, 3).is_err());
    }
}
