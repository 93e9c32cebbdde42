use crate::error::{EmitError, Result};

/// Forward rate of change for one feature's observations.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSeries(Vec<f64>);

impl RateSeries {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// `r_i = (x_{i+1} − x_i) / (t_{i+1} − t_i)`, with 0 where the gap is zero
/// and at the final element.
pub fn rate_of_change(values: &[f64], times: &[f64]) -> Result<RateSeries> {
    if values.len() != times.len() {
        return Err(EmitError::ShapeMismatch {
            op: "rate_of_change",
            left: vec![values.len()],
            right: vec![times.len()],
        });
    }
    if values.is_empty() {
        return Err(EmitError::Empty("rate of change input"));
    }
    let mut rates = vec![0.0; values.len()];
    for (i, r) in rates.iter_mut().enumerate().take(values.len() - 1) {
        let dt = times[i + 1] - times[i];
        if dt != 0.0 {
            *r = (values[i + 1] - values[i]) / dt;
        }
    }
    Ok(RateSeries(rates))
}
