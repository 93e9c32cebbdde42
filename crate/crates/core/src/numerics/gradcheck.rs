use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::params::ParamStore;
use super::tape::{Tape, Var};
use super::Real;
use crate::error::{EmitError, Result};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    pub tolerance: f64,
    /// Coordinates checked per parameter tensor; larger tensors are subsampled.
    pub max_coords_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            tolerance: 1e-4,
            max_coords_per_param: usize::MAX,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub coordinates: usize,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

fn evaluate<F>(store: &ParamStore, loss_fn: &mut F) -> Result<f64>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = loss_fn(store, &mut tape)?;
    Ok(tape.value(loss).item()? as f64)
}

/// Compare tape gradients with central differences `(f(p+ε) − f(p−ε)) / 2ε`.
///
/// Relative error per coordinate is `|g_ad − g_fd| / max(|g_ad|, |g_fd|, 1e-8)`.
/// The closure must be deterministic; two baseline evaluations that differ are
/// reported as [`EmitError::NonDeterministic`]. `store` is restored on return.
pub fn grad_check<F>(
    store: &mut ParamStore,
    mut loss_fn: F,
    config: GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<Var>,
{
    let first = evaluate(store, &mut loss_fn)?;
    let second = evaluate(store, &mut loss_fn)?;
    if first.to_bits() != second.to_bits() {
        return Err(EmitError::NonDeterministic { first, second });
    }

    let mut analytic = store.clone();
    analytic.zero_grads();
    {
        let mut tape = Tape::new();
        let loss = loss_fn(store, &mut tape)?;
        let grads = tape.backward(loss)?;
        tape.accumulate_param_grads(&grads, &mut analytic);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let eps = config.epsilon;
    let mut params = Vec::with_capacity(store.len());
    let mut coordinates = 0;
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let len = store.get(id).value.len();
        let coords: Vec<usize> = if len <= config.max_coords_per_param {
            (0..len).collect()
        } else {
            let mut c = sample(&mut rng, len, config.max_coords_per_param).into_vec();
            c.sort_unstable();
            c
        };
        let mut check = ParamCheck {
            name: store.get(id).name.clone(),
            checked: coords.len(),
            max_rel_error: 0.0,
            worst_index: 0,
        };
        for &i in &coords {
            let original = store.get(id).value.data()[i];
            store.get_mut(id).value.data_mut()[i] = original + eps as Real;
            let plus = evaluate(store, &mut loss_fn);
            store.get_mut(id).value.data_mut()[i] = original - eps as Real;
            let minus = evaluate(store, &mut loss_fn);
            store.get_mut(id).value.data_mut()[i] = original;
            let numeric = (plus? - minus?) / (2.0 * eps);
            let exact = analytic.get(id).grad.data()[i] as f64;
            let denom = exact.abs().max(numeric.abs()).max(1e-8);
            let rel = (exact - numeric).abs() / denom;
            if rel > check.max_rel_error {
                check.max_rel_error = rel;
                check.worst_index = i;
            }
        }
        coordinates += coords.len();
        params.push(check);
    }
    let max_rel_error = params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_rel_error,
        tolerance: config.tolerance,
        coordinates,
        params,
    })
}

#[cfg(all(test, not(feature = "f32")))]
mod tests {
    use std::cell::Cell;

    use super::*;
    use crate::numerics::Tensor;

    fn store_with(values: Vec<Real>) -> ParamStore {
        let mut store = ParamStore::new();
        store.add("p", Tensor::from_vec(values)).unwrap();
        store
    }

    #[test]
    fn quadratic_matches() {
        let mut store = store_with(vec![0.3, -1.2, 2.5, 0.0]);
        let id = store.id("p").unwrap();
        let report = grad_check(
            &mut store,
            |s, t| {
                let p = t.param(s, id);
                let sq = t.mul(p, p)?;
                let total = t.sum(sq);
                Ok(t.scale(total, 0.5))
            },
            GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-9, "{report:?}");
    }

    #[test]
    fn corrupted_backward_is_detected() {
        let mut store = store_with(vec![0.3, -1.2, 0.8]);
        let id = store.id("p").unwrap();
        let report = grad_check(
            &mut store,
            |s, t| {
                let p = t.param(s, id);
                let y = t.broken_tanh(p);
                Ok(t.sum(y))
            },
            GradCheckConfig::default(),
        )
        .unwrap();
        assert!(!report.passed());
        assert!(report.max_rel_error > 1e-2);
    }

    #[test]
    fn nondeterministic_closure_is_rejected() {
        let mut store = store_with(vec![1.0]);
        let id = store.id("p").unwrap();
        let calls = Cell::new(0.0);
        let err = grad_check(
            &mut store,
            |s, t| {
                calls.set(calls.get() + 1.0);
                let p = t.param(s, id);
                let y = t.scale(p, calls.get());
                Ok(t.sum(y))
            },
            GradCheckConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, EmitError::NonDeterministic { .. }));
    }

    #[test]
    fn subsampling_limits_coordinates() {
        let mut store = store_with((0..50).map(|i| i as Real * 0.01).collect());
        let id = store.id("p").unwrap();
        let report = grad_check(
            &mut store,
            |s, t| {
                let p = t.param(s, id);
                let y = t.tanh(p);
                Ok(t.sum(y))
            },
            GradCheckConfig {
                max_coords_per_param: 7,
                ..GradCheckConfig::default()
            },
        )
        .unwrap();
        assert_eq!(report.coordinates, 7);
        assert!(report.passed());
    }
}
