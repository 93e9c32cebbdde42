//! Event-based mask selection driven by per-feature rate of change.

mod rate;
mod rng;
mod stats;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{EmitError, Result};
use crate::series::TripletSequence;

pub use rate::{rate_of_change, RateSeries};
pub use rng::{MaskRng, Stream};
pub use stats::{mask_statistics, resolve_random_rate, FeatureMaskStats, MaskStats};

/// Which embedding component a mask token replaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskKind {
    Time,
    Value,
    Feature,
    /// All three components replaced.
    Sum,
}

/// Masking strategy: the event composite, its fixed-kind ablations, or a
/// uniform random baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskVariant {
    Composite,
    TimeOnly,
    ValueOnly,
    FeatureOnly,
    Sum,
    Random,
}

impl MaskVariant {
    pub const ALL: [MaskVariant; 6] = [
        MaskVariant::Random,
        MaskVariant::TimeOnly,
        MaskVariant::ValueOnly,
        MaskVariant::FeatureOnly,
        MaskVariant::Sum,
        MaskVariant::Composite,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MaskVariant::Composite => "composite",
            MaskVariant::TimeOnly => "time-only",
            MaskVariant::ValueOnly => "value-only",
            MaskVariant::FeatureOnly => "feature-only",
            MaskVariant::Sum => "sum",
            MaskVariant::Random => "random",
        }
    }

    /// The kind every masked position receives, if fixed by the variant.
    pub fn fixed_kind(self) -> Option<MaskKind> {
        match self {
            MaskVariant::TimeOnly => Some(MaskKind::Time),
            MaskVariant::ValueOnly => Some(MaskKind::Value),
            MaskVariant::FeatureOnly => Some(MaskKind::Feature),
            MaskVariant::Sum => Some(MaskKind::Sum),
            MaskVariant::Composite | MaskVariant::Random => None,
        }
    }
}

impl fmt::Display for MaskVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for MaskVariant {
    type Err = EmitError;

    fn from_str(s: &str) -> Result<Self> {
        MaskVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| EmitError::InvalidConfig(format!("unknown mask variant '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskConfig {
    /// Significance threshold on |rate of change|.
    pub theta: f64,
    /// Masking probability for insignificant positions; significant ones use `1 − alpha_mask`.
    pub alpha_mask: f64,
    pub variant: MaskVariant,
    /// Per-position probability for the random variant. `None` means "match the
    /// event mask's empirical rate", see [`resolve_random_rate`].
    pub random_rate: Option<f64>,
    pub seed: u64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            theta: 0.01,
            alpha_mask: 0.2,
            variant: MaskVariant::Composite,
            random_rate: None,
            seed: 0,
        }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta >= 0.0) {
            return Err(EmitError::InvalidConfig(format!("theta {} < 0", self.theta)));
        }
        if !(0.0..=1.0).contains(&self.alpha_mask) {
            return Err(EmitError::InvalidConfig(format!(
                "alpha_mask {} outside [0, 1]",
                self.alpha_mask
            )));
        }
        if let Some(r) = self.random_rate {
            if !(0.0..=1.0).contains(&r) {
                return Err(EmitError::InvalidConfig(format!("random_rate {r} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Per-position mask plus the component replaced at each masked position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPlan {
    masked: Vec<bool>,
    kinds: BTreeMap<usize, MaskKind>,
}

impl MaskPlan {
    /// Checks that kinds are present exactly at masked positions.
    pub fn new(masked: Vec<bool>, kinds: BTreeMap<usize, MaskKind>) -> Result<Self> {
        let plan = Self { masked, kinds };
        plan.validate()?;
        Ok(plan)
    }

    /// A plan that masks nothing.
    pub fn empty(len: usize) -> Self {
        Self {
            masked: vec![false; len],
            kinds: BTreeMap::new(),
        }
    }

    /// Same kind at every listed position.
    pub fn uniform(len: usize, positions: &[usize], kind: MaskKind) -> Result<Self> {
        let mut masked = vec![false; len];
        let mut kinds = BTreeMap::new();
        for &p in positions {
            if p >= len {
                return Err(EmitError::InvalidInput(format!("position {p} beyond length {len}")));
            }
            masked[p] = true;
            kinds.insert(p, kind);
        }
        Self::new(masked, kinds)
    }

    /// Construct without checking; [`MaskPlan::validate`] reports violations.
    pub fn from_parts_unchecked(masked: Vec<bool>, kinds: BTreeMap<usize, MaskKind>) -> Self {
        Self { masked, kinds }
    }

    pub fn validate(&self) -> Result<()> {
        for &p in self.kinds.keys() {
            if !self.masked.get(p).copied().unwrap_or(false) {
                return Err(EmitError::InvalidInput(format!(
                    "mask kind present at unmasked position {p}"
                )));
            }
        }
        if let Some(p) = self
            .masked
            .iter()
            .enumerate()
            .find(|(i, m)| **m && !self.kinds.contains_key(i))
            .map(|(i, _)| i)
        {
            return Err(EmitError::InvalidInput(format!(
                "masked position {p} has no kind"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.masked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masked.is_empty()
    }

    pub fn masked(&self) -> &[bool] {
        &self.masked
    }

    pub fn kinds(&self) -> &BTreeMap<usize, MaskKind> {
        &self.kinds
    }

    pub fn kind(&self, position: usize) -> Option<MaskKind> {
        self.kinds.get(&position).copied()
    }

    /// Masked positions in ascending order.
    pub fn positions(&self) -> Vec<usize> {
        self.kinds.keys().copied().collect()
    }

    pub fn count(&self) -> usize {
        self.masked.iter().filter(|m| **m).count()
    }
}

/// Classification of a position under a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Significance {
    Significant,
    Insignificant,
    /// The only observation of its feature; never masked by the event rule.
    Singleton,
}

/// Per-position rate of change, computed within each feature over normalized
/// values and raw hour timestamps. Singleton features get `None`.
pub fn position_rates(seq: &TripletSequence) -> Vec<Option<f64>> {
    let obs = seq.observations();
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, o) in obs.iter().enumerate() {
        groups.entry(o.feature).or_default().push(i);
    }
    let mut out = vec![None; obs.len()];
    for idx in groups.values() {
        if idx.len() < 2 {
            continue;
        }
        let x: Vec<f64> = idx.iter().map(|&i| obs[i].value).collect();
        let t: Vec<f64> = idx.iter().map(|&i| seq.raw_times()[i]).collect();
        let r = rate_of_change(&x, &t).expect("equal non-empty lengths");
        for (&i, &ri) in idx.iter().zip(r.values()) {
            out[i] = Some(ri);
        }
    }
    out
}

/// Significant iff `|r| > theta`.
pub fn classify_positions(seq: &TripletSequence, theta: f64) -> Vec<Significance> {
    position_rates(seq)
        .into_iter()
        .map(|r| match r {
            None => Significance::Singleton,
            Some(r) if r.abs() > theta => Significance::Significant,
            Some(_) => Significance::Insignificant,
        })
        .collect()
}

/// Event-based selection: significant positions are masked with probability
/// `1 − alpha_mask`, insignificant ones with `alpha_mask`, singletons never.
pub fn select_event_mask(seq: &TripletSequence, config: &MaskConfig, rng: &MaskRng) -> Vec<bool> {
    classify_positions(seq, config.theta)
        .into_iter()
        .enumerate()
        .map(|(i, class)| {
            let p = match class {
                Significance::Significant => 1.0 - config.alpha_mask,
                Significance::Insignificant => config.alpha_mask,
                Significance::Singleton => return false,
            };
            rng.uniform(i, Stream::Select) < p
        })
        .collect()
}

/// Each position masked independently with probability `rate`.
pub fn random_mask(seq: &TripletSequence, rate: f64, rng: &MaskRng) -> Vec<bool> {
    (0..seq.len())
        .map(|i| rng.uniform(i, Stream::Select) < rate)
        .collect()
}

/// Attach a mask kind to every masked position.
pub fn assign_mask_kinds(masked: &[bool], variant: MaskVariant, rng: &MaskRng) -> MaskPlan {
    const CHOICES: [MaskKind; 3] = [MaskKind::Time, MaskKind::Value, MaskKind::Feature];
    let kinds = masked
        .iter()
        .enumerate()
        .filter(|(_, m)| **m)
        .map(|(i, _)| {
            let kind = variant.fixed_kind().unwrap_or_else(|| {
                let u = rng.uniform(i, Stream::Kind);
                CHOICES[((u * 3.0) as usize).min(2)]
            });
            (i, kind)
        })
        .collect();
    MaskPlan {
        masked: masked.to_vec(),
        kinds,
    }
}

/// Full mask plan for one sequence at one epoch.
///
/// The random variant needs a resolved `random_rate`.
pub fn plan_sequence(seq: &TripletSequence, config: &MaskConfig, epoch: u64) -> Result<MaskPlan> {
    let rng = MaskRng::new(config.seed, epoch, seq.id());
    let masked = match config.variant {
        MaskVariant::Random => {
            let rate = config.random_rate.ok_or_else(|| {
                EmitError::InvalidConfig("random variant requires a resolved random_rate".into())
            })?;
            random_mask(seq, rate, &rng)
        }
        _ => select_event_mask(seq, config, &rng),
    };
    Ok(assign_mask_kinds(&masked, config.variant, &rng))
}
