//! Irregular time series as ordered `(time, value, feature)` triplets.

mod io;
mod normalize;
mod split;
mod synth;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{EmitError, Result};

pub use io::{load_dataset, read_dataset, write_dataset};
pub use normalize::{fit_normalization, MeanStd, NormalizationStats};
pub use split::{split, stratified_subsample, Split, SplitSpec};
pub(crate) use split::check_label_fraction;
pub use synth::{generate_synthetic, SynthConfig, SyntheticDataset};

/// Ordered list of unique feature names; indices are dense in `[0, F)`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct FeatureVocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl FeatureVocab {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(EmitError::InvalidInput(format!("duplicate feature name '{n}'")));
            }
        }
        Ok(Self { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

impl TryFrom<Vec<String>> for FeatureVocab {
    type Error = EmitError;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<FeatureVocab> for Vec<String> {
    fn from(v: FeatureVocab) -> Self {
        v.names
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Hours since the start of the series, or its normalized counterpart.
    pub time: f64,
    pub value: f64,
    /// Index into the dataset's [`FeatureVocab`].
    pub feature: usize,
}

impl Observation {
    pub fn new(time: f64, value: f64, feature: usize) -> Self {
        Self {
            time,
            value,
            feature,
        }
    }
}

/// One irregular series, sorted by time.
///
/// `raw_times` keeps the original hour timestamps after normalization; rate of
/// change and forecast windows are measured against them.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletSequence {
    id: String,
    observations: Vec<Observation>,
    raw_times: Vec<f64>,
}

impl TripletSequence {
    /// Build a sequence, stably sorting observations by time.
    pub fn new(id: impl Into<String>, mut observations: Vec<Observation>) -> Result<Self> {
        let id = id.into();
        if observations.is_empty() {
            return Err(EmitError::InvalidInput(format!("sequence '{id}' has no observations")));
        }
        for o in &observations {
            if o.time < 0.0 || o.time.is_nan() {
                return Err(EmitError::NegativeTime { id, time: o.time });
            }
            if !o.value.is_finite() || !o.time.is_finite() {
                return Err(EmitError::InvalidInput(format!(
                    "non-finite observation in sequence '{id}'"
                )));
            }
        }
        observations.sort_by(|a, b| a.time.total_cmp(&b.time));
        let raw_times = observations.iter().map(|o| o.time).collect();
        Ok(Self {
            id,
            observations,
            raw_times,
        })
    }

    pub(crate) fn from_parts(id: String, observations: Vec<Observation>, raw_times: Vec<f64>) -> Self {
        debug_assert_eq!(observations.len(), raw_times.len());
        Self {
            id,
            observations,
            raw_times,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn raw_times(&self) -> &[f64] {
        &self.raw_times
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.observations.iter().map(|o| o.value)
    }

    /// Keep the earliest `max_len` observations.
    pub fn truncate(&mut self, max_len: usize) {
        let keep = max_len.max(1);
        self.observations.truncate(keep);
        self.raw_times.truncate(keep);
    }

    /// Indices of each feature's observations, in time order.
    pub fn feature_indices(&self, num_features: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); num_features];
        for (i, o) in self.observations.iter().enumerate() {
            if o.feature < num_features {
                out[o.feature].push(i);
            }
        }
        out
    }

    pub fn check_vocab(&self, vocab: &FeatureVocab) -> Result<()> {
        match self.observations.iter().find(|o| o.feature >= vocab.len()) {
            Some(o) => Err(EmitError::FeatureOutOfRange {
                index: o.feature,
                size: vocab.len(),
            }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub sequence: TripletSequence,
    /// Binary outcome; absent for unlabeled pretraining data.
    pub label: Option<u8>,
}

impl LabeledSequence {
    pub fn new(sequence: TripletSequence, label: Option<u8>) -> Result<Self> {
        if let Some(l) = label {
            if l > 1 {
                return Err(EmitError::InvalidInput(format!(
                    "label {l} for sequence '{}' is not 0 or 1",
                    sequence.id()
                )));
            }
        }
        Ok(Self { sequence, label })
    }
}
