use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeatureVocab, LabeledSequence, Observation, TripletSequence};
use crate::error::{io_err, EmitError, Result};

const TIME_KEY: &str = "time";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub const IDENTITY: MeanStd = MeanStd { mean: 0.0, std: 1.0 };

    /// Population mean and std; std falls back to 1 with fewer than two
    /// samples or zero spread.
    fn fit(values: impl Iterator<Item = f64>) -> Option<Self> {
        let mut n = 0usize;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for v in values {
            n += 1;
            let delta = v - mean;
            mean += delta / n as f64;
            m2 += delta * (v - mean);
        }
        if n == 0 {
            return None;
        }
        let var = m2 / n as f64;
        let std = if n < 2 || var <= 0.0 { 1.0 } else { var.sqrt() };
        Some(Self { mean, std })
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Per-feature value statistics and global time statistics from a training split.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    vocab: FeatureVocab,
    features: Vec<Option<MeanStd>>,
    time: MeanStd,
}

/// Fit z-score statistics on the training split.
pub fn fit_normalization(train: &[LabeledSequence], vocab: &FeatureVocab) -> Result<NormalizationStats> {
    if train.is_empty() {
        return Err(EmitError::Empty("training set"));
    }
    let mut per_feature: Vec<Vec<f64>> = vec![Vec::new(); vocab.len()];
    for item in train {
        item.sequence.check_vocab(vocab)?;
        for o in item.sequence.observations() {
            per_feature[o.feature].push(o.value);
        }
    }
    let features = per_feature
        .into_iter()
        .map(|vals| MeanStd::fit(vals.into_iter()))
        .collect();
    let time = MeanStd::fit(train.iter().flat_map(|s| s.sequence.raw_times().iter().copied()))
        .unwrap_or(MeanStd::IDENTITY);
    Ok(NormalizationStats {
        vocab: vocab.clone(),
        features,
        time,
    })
}

impl NormalizationStats {
    /// Statistics that leave values and times unchanged.
    pub fn identity(vocab: &FeatureVocab) -> Self {
        Self {
            vocab: vocab.clone(),
            features: vec![Some(MeanStd::IDENTITY); vocab.len()],
            time: MeanStd::IDENTITY,
        }
    }

    pub fn vocab(&self) -> &FeatureVocab {
        &self.vocab
    }

    pub fn time(&self) -> MeanStd {
        self.time
    }

    pub fn feature(&self, index: usize) -> Option<MeanStd> {
        self.features.get(index).copied().flatten()
    }

    fn require(&self, index: usize) -> Result<MeanStd> {
        self.feature(index).ok_or_else(|| {
            EmitError::UnknownFeature(
                self.vocab
                    .name(index)
                    .map_or_else(|| format!("#{index}"), str::to_string),
            )
        })
    }

    /// Z-score values per feature and times globally. Raw hour timestamps are kept.
    pub fn normalize(&self, seq: &TripletSequence) -> Result<TripletSequence> {
        let observations = seq
            .observations()
            .iter()
            .map(|o| {
                let s = self.require(o.feature)?;
                Ok(Observation::new(self.time.apply(o.time), s.apply(o.value), o.feature))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TripletSequence::from_parts(
            seq.id().to_string(),
            observations,
            seq.raw_times().to_vec(),
        ))
    }

    pub fn normalize_all(&self, data: &[LabeledSequence]) -> Result<Vec<LabeledSequence>> {
        data.iter()
            .map(|item| {
                Ok(LabeledSequence {
                    sequence: self.normalize(&item.sequence)?,
                    label: item.label,
                })
            })
            .collect()
    }

    pub fn denormalize_value(&self, feature: usize, z: f64) -> Result<f64> {
        Ok(self.require(feature)?.invert(z))
    }

    pub fn to_json(&self) -> Result<serde_json::Value> {
        let mut map = BTreeMap::new();
        for (i, s) in self.features.iter().enumerate() {
            if let Some(s) = s {
                let name = self.vocab.name(i).unwrap_or_default();
                if name == TIME_KEY {
                    return Err(EmitError::InvalidInput(format!(
                        "feature name '{TIME_KEY}' collides with the time entry of the stats file"
                    )));
                }
                map.insert(name.to_string(), *s);
            }
        }
        map.insert(TIME_KEY.to_string(), self.time);
        Ok(serde_json::to_value(map)?)
    }

    pub fn from_json(value: serde_json::Value, vocab: &FeatureVocab) -> Result<Self> {
        let mut map: BTreeMap<String, MeanStd> = serde_json::from_value(value)?;
        let time = map
            .remove(TIME_KEY)
            .ok_or_else(|| EmitError::InvalidInput("stats missing 'time' entry".into()))?;
        let mut features = vec![None; vocab.len()];
        for (name, s) in map {
            let i = vocab.get(&name).ok_or(EmitError::UnknownFeature(name))?;
            if s.std <= 0.0 {
                return Err(EmitError::InvalidInput(format!(
                    "non-positive std for feature #{i}"
                )));
            }
            features[i] = Some(s);
        }
        Ok(Self {
            vocab: vocab.clone(),
            features,
            time,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.to_json()?)?;
        std::fs::write(path, text + "\n").map_err(io_err(path))
    }

    pub fn load(path: impl AsRef<Path>, vocab: &FeatureVocab) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(serde_json::from_str(&text)?, vocab)
    }
}
