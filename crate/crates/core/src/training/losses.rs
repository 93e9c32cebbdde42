use crate::error::{EmitError, Result};
use crate::numerics::{Real, Tape, Tensor, Var};

use super::ForecastTargets;

fn zero(tape: &mut Tape) -> Var {
    tape.constant(Tensor::scalar(0.0))
}

/// Mean over masked positions of the per-dimension squared error between
/// encoder outputs and reconstruction targets, both `[.., d]`. Positions
/// index rows of the flattened tensors. No positions gives 0.
pub fn recon_loss(tape: &mut Tape, outputs: Var, targets: Var, positions: &[usize]) -> Result<Var> {
    if tape.shape(outputs) != tape.shape(targets) {
        return Err(EmitError::ShapeMismatch {
            op: "recon_loss",
            left: tape.shape(outputs).to_vec(),
            right: tape.shape(targets).to_vec(),
        });
    }
    if positions.is_empty() {
        return Ok(zero(tape));
    }
    let out = tape.gather_rows(outputs, positions)?;
    let tgt = tape.gather_rows(targets, positions)?;
    let diff = tape.sub(out, tgt)?;
    let sq = tape.mul(diff, diff)?;
    Ok(tape.mean(sq))
}

/// Squared error averaged over indicated (position, feature) pairs; 0 if none.
pub fn forecast_loss(tape: &mut Tape, predictions: Var, targets: &ForecastTargets) -> Result<Var> {
    let shape = tape.shape(predictions).to_vec();
    if shape != [targets.rows(), targets.num_features] {
        return Err(EmitError::ShapeMismatch {
            op: "forecast_loss",
            left: shape,
            right: vec![targets.rows(), targets.num_features],
        });
    }
    let count = targets.indicators.iter().filter(|i| **i).count();
    if count == 0 {
        return Ok(zero(tape));
    }
    let y = tape.constant(Tensor::new(
        shape,
        targets.values.iter().map(|v| *v as Real).collect(),
    )?);
    let diff = tape.sub(predictions, y)?;
    let gate = targets.indicators.iter().map(|i| if *i { 1.0 } else { 0.0 }).collect();
    let diff = tape.mul_const(diff, gate)?;
    let sq = tape.mul(diff, diff)?;
    let total = tape.sum(sq);
    Ok(tape.scale(total, 1.0 / count as Real))
}

/// `forecast + lambda · recon`.
pub fn total_loss(tape: &mut Tape, recon: Var, forecast: Var, lambda: f64) -> Result<Var> {
    let weighted = tape.scale(recon, lambda as Real);
    tape.add(forecast, weighted)
}
