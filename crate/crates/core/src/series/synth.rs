use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{FeatureVocab, LabeledSequence, Observation, TripletSequence};
use crate::error::{EmitError, Result};

/// Settings for the synthetic event-labeled generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_sequences: usize,
    pub n_features: usize,
    pub min_obs: usize,
    pub max_obs: usize,
    pub horizon_hours: f64,
    /// Expected number of spikes beyond the first in a positive sequence.
    pub event_rate: f64,
    /// Minimum jump of a spike, in units of the feature's scale.
    pub spike_magnitude: f64,
    /// Largest gap (hours) between the two observations forming a spike.
    pub spike_gap_max: f64,
    /// Observation noise, in units of the feature's scale.
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_sequences: 2000,
            n_features: 8,
            min_obs: 40,
            max_obs: 80,
            horizon_hours: 48.0,
            event_rate: 0.5,
            spike_magnitude: 4.0,
            spike_gap_max: 0.25,
            noise: 0.1,
        }
    }
}

impl SynthConfig {
    /// Lower bound on |rate of change| (raw units per hour) at every injected spike.
    pub fn spike_floor(&self) -> f64 {
        self.spike_magnitude / self.spike_gap_max
    }

    fn validate(&self) -> Result<()> {
        if self.n_sequences == 0 {
            return Err(EmitError::InvalidConfig("zero sequences".into()));
        }
        if self.n_features == 0 {
            return Err(EmitError::InvalidConfig("zero features".into()));
        }
        if self.min_obs == 0 || self.min_obs > self.max_obs {
            return Err(EmitError::InvalidConfig(format!(
                "observation range {}..={} is empty",
                self.min_obs, self.max_obs
            )));
        }
        let positive = [self.horizon_hours, self.spike_magnitude, self.spike_gap_max];
        if positive.iter().any(|v| !(*v > 0.0)) || self.spike_gap_max >= self.horizon_hours {
            return Err(EmitError::InvalidConfig(
                "horizon, spike magnitude and spike gap must be positive with gap < horizon".into(),
            ));
        }
        if !(self.event_rate >= 0.0) || !(self.noise >= 0.0) {
            return Err(EmitError::InvalidConfig("event rate and noise must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub sequences: Vec<LabeledSequence>,
    pub vocab: FeatureVocab,
    /// Per sequence, positions whose forward rate of change is an injected spike.
    pub events: Vec<Vec<usize>>,
    pub spike_floor: f64,
}

struct FeatureShape {
    level: f64,
    scale: f64,
    period: f64,
}

/// Generate irregular series with smooth per-feature baselines. Each sequence
/// is positive with probability ½ and then carries at least one spike: a jump
/// of at least `spike_magnitude · scale` over a gap of at most `spike_gap_max`.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<SyntheticDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let extra_spikes = (config.event_rate > 0.0)
        .then(|| Poisson::new(config.event_rate).expect("positive rate"));

    let shapes: Vec<FeatureShape> = (0..config.n_features)
        .map(|f| FeatureShape {
            level: 10.0 * (f as f64 + 1.0),
            scale: 1.0 + (f % 3) as f64,
            period: rng.random_range(12.0..36.0),
        })
        .collect();
    let vocab = FeatureVocab::new((0..config.n_features).map(|f| format!("f{f}")))?;

    let mut sequences = Vec::with_capacity(config.n_sequences);
    let mut events = Vec::with_capacity(config.n_sequences);
    for s in 0..config.n_sequences {
        let positive = rng.random_bool(0.5);
        let offsets: Vec<(f64, f64)> = shapes
            .iter()
            .map(|sh| (0.5 * sh.scale * std_normal.sample(&mut rng), rng.random_range(0.0..TAU)))
            .collect();
        let baseline = |f: usize, t: f64| {
            let sh = &shapes[f];
            sh.level + offsets[f].0 + 0.8 * sh.scale * (TAU * t / sh.period + offsets[f].1).sin()
        };

        let n = rng.random_range(config.min_obs..=config.max_obs);
        // (time, value, feature, is spike start)
        let mut obs: Vec<(f64, f64, usize, bool)> = (0..n)
            .map(|_| {
                let t = rng.random_range(0.0..config.horizon_hours);
                let f = rng.random_range(0..config.n_features);
                let x = baseline(f, t) + config.noise * shapes[f].scale * std_normal.sample(&mut rng);
                (t, x, f, false)
            })
            .collect();

        if positive {
            let extra = extra_spikes
                .as_ref()
                .map_or(0, |p| p.sample(&mut rng) as usize);
            let k = (1 + extra).min(config.n_features);
            let mut features: Vec<usize> = (0..config.n_features).collect();
            for i in 0..k {
                let j = rng.random_range(i..features.len());
                features.swap(i, j);
            }
            for &f in &features[..k] {
                let gap = rng.random_range(0.5 * config.spike_gap_max..=config.spike_gap_max);
                let start = rng.random_range(0.0..config.horizon_hours - gap);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let jump = sign
                    * shapes[f].scale
                    * config.spike_magnitude
                    * rng.random_range(1.0..2.0);
                // Clear the window so the two spike points are consecutive for this feature.
                obs.retain(|o| !(o.2 == f && o.0 >= start && o.0 <= start + gap));
                let x0 = baseline(f, start) + config.noise * shapes[f].scale * std_normal.sample(&mut rng);
                obs.push((start, x0, f, true));
                obs.push((start + gap, x0 + jump, f, false));
            }
        }

        obs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let spike_positions = obs
            .iter()
            .enumerate()
            .filter_map(|(i, o)| o.3.then_some(i))
            .collect();
        let observations = obs
            .iter()
            .map(|&(t, x, f, _)| Observation::new(t, x, f))
            .collect();
        let seq = TripletSequence::new(format!("synth-{s:06}"), observations)?;
        sequences.push(LabeledSequence::new(seq, Some(u8::from(positive)))?);
        events.push(spike_positions);
    }

    Ok(SyntheticDataset {
        sequences,
        vocab,
        events,
        spike_floor: config.spike_floor(),
    })
}
