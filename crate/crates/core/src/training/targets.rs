use crate::series::TripletSequence;

/// Forecast targets for a list of positions, row-major `[rows, num_features]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForecastTargets {
    pub num_features: usize,
    pub values: Vec<f64>,
    pub indicators: Vec<bool>,
}

impl ForecastTargets {
    pub fn new(num_features: usize) -> Self {
        Self {
            num_features,
            ..Self::default()
        }
    }

    pub fn rows(&self) -> usize {
        self.values.len() / self.num_features.max(1)
    }

    pub fn extend(&mut self, other: ForecastTargets) {
        self.values.extend(other.values);
        self.indicators.extend(other.indicators);
    }
}

/// For each position `i` and feature `f`, the value of the earliest
/// observation of `f` with raw time in `(t_i, t_i + horizon]`.
pub fn build_forecast_targets(
    seq: &TripletSequence,
    positions: &[usize],
    horizon: f64,
    num_features: usize,
) -> ForecastTargets {
    let times = seq.raw_times();
    let obs = seq.observations();
    let mut out = ForecastTargets::new(num_features);
    for &i in positions {
        let t = times[i];
        let mut values = vec![0.0; num_features];
        let mut found = vec![false; num_features];
        // Times are sorted, so the first hit per feature is the earliest.
        let start = times.partition_point(|&u| u <= t);
        for j in start..obs.len() {
            if times[j] - t > horizon {
                break;
            }
            let f = obs[j].feature;
            if f < num_features && !found[f] {
                found[f] = true;
                values[f] = obs[j].value;
            }
        }
        out.values.extend(values);
        out.indicators.extend(found);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Observation;

    fn seq() -> TripletSequence {
        TripletSequence::new(
            "s",
            vec![
                Observation::new(0.0, 1.0, 0),
                Observation::new(1.0, 2.0, 1),
                Observation::new(1.5, 3.0, 1),
                Observation::new(2.0, 4.0, 0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn last_position_has_no_targets() {
        let t = build_forecast_targets(&seq(), &[3], 10.0, 2);
        assert_eq!(t.indicators, [false, false]);
    }

    #[test]
    fn earliest_observation_wins() {
        let t = build_forecast_targets(&seq(), &[0], 10.0, 2);
        assert_eq!(t.values, [4.0, 2.0]);
        assert_eq!(t.indicators, [true, true]);
    }

    #[test]
    fn window_is_half_open() {
        let t = build_forecast_targets(&seq(), &[0], 1.0, 2);
        assert_eq!(t.indicators, [false, true]);
        let t = build_forecast_targets(&seq(), &[0], f64::INFINITY, 2);
        assert_eq!(t.indicators, [true, true]);
    }
}
