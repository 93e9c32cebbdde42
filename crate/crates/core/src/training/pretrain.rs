use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::report::EarlyStopper;
use super::{
    build_forecast_targets, forecast_loss, recon_loss, total_loss, EpochLog, ForecastTargets,
    LossBreakdown, StopReason, TrainReport,
};
use crate::error::{EmitError, Result};
use crate::masking::{plan_sequence, resolve_random_rate, MaskConfig, MaskPlan, MaskVariant};
use crate::model::{Batch, EmitModel, EmitNet};
use crate::numerics::{AdamConfig, AdamState, ParamStore, Tape, Tensor, Var};
use crate::series::{LabeledSequence, TripletSequence};

/// Mask-draw epoch reserved for validation, so validation masks never change.
pub const VALIDATION_MASK_EPOCH: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    /// Reconstruction weight.
    pub lambda: f64,
    pub mask: MaskConfig,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Forecast window in hours.
    pub horizon: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            mask: MaskConfig::default(),
            batch_size: 32,
            lr: 5e-4,
            weight_decay: 0.0,
            max_epochs: 100,
            patience: 5,
            horizon: 2.0,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.mask.validate()?;
        if !(self.lambda >= 0.0) {
            return Err(EmitError::InvalidConfig(format!("lambda {} < 0", self.lambda)));
        }
        if !(self.horizon > 0.0) {
            return Err(EmitError::InvalidConfig(format!("horizon {} must be positive", self.horizon)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(EmitError::InvalidConfig("batch size and max epochs must be at least 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(EmitError::InvalidConfig(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }
}

/// Loss nodes of one pretraining batch.
#[derive(Debug, Clone, Copy)]
pub struct PretrainLoss {
    pub recon: Var,
    pub forecast: Var,
    pub total: Var,
    /// Number of masked positions in the batch.
    pub masked: usize,
}

/// Build the pretraining objective for one batch on `tape`.
///
/// The reconstruction target is the unmasked combined embedding, cut from
/// the graph. `rng = None` disables dropout.
#[allow(clippy::too_many_arguments)]
pub fn pretrain_objective(
    net: &EmitNet,
    store: &ParamStore,
    tape: &mut Tape,
    seqs: &[&TripletSequence],
    plans: &[&MaskPlan],
    horizon: f64,
    lambda: f64,
    rng: Option<&mut (dyn RngCore + '_)>,
) -> Result<PretrainLoss> {
    objective(net, store, tape, seqs, plans, horizon, lambda, None, rng)
}

/// Unmasked combined embeddings `[B, L, d]` used as reconstruction targets.
pub fn reconstruction_target(net: &EmitNet, store: &ParamStore, seqs: &[&TripletSequence]) -> Result<Tensor> {
    let batch = Batch::new(seqs, net.config())?;
    let mut tape = Tape::new();
    let c = net.embed(&mut tape, store, &batch)?;
    let e = net.combine(&mut tape, store, &c, None)?;
    Ok(tape.value(e).clone())
}

/// [`pretrain_objective`] against an explicit constant reconstruction target.
/// Gradients equal those of [`pretrain_objective`] when `target` comes from
/// [`reconstruction_target`] on the same parameters.
#[allow(clippy::too_many_arguments)]
pub fn pretrain_objective_with_target(
    net: &EmitNet,
    store: &ParamStore,
    tape: &mut Tape,
    seqs: &[&TripletSequence],
    plans: &[&MaskPlan],
    target: &Tensor,
    horizon: f64,
    lambda: f64,
) -> Result<PretrainLoss> {
    objective(net, store, tape, seqs, plans, horizon, lambda, Some(target), None)
}

#[allow(clippy::too_many_arguments)]
fn objective(
    net: &EmitNet,
    store: &ParamStore,
    tape: &mut Tape,
    seqs: &[&TripletSequence],
    plans: &[&MaskPlan],
    horizon: f64,
    lambda: f64,
    fixed_target: Option<&Tensor>,
    rng: Option<&mut (dyn RngCore + '_)>,
) -> Result<PretrainLoss> {
    let batch = Batch::new(seqs, net.config())?;
    let kinds = batch.mask_kinds(plans)?;
    let fwd = net.forward(tape, store, &batch, Some(&kinds), rng)?;
    let target = match fixed_target {
        Some(t) => {
            if t.shape() != tape.value(fwd.hidden).shape() {
                return Err(EmitError::ShapeMismatch {
                    op: "reconstruction target",
                    left: t.shape().to_vec(),
                    right: tape.value(fwd.hidden).shape().to_vec(),
                });
            }
            tape.constant(t.clone())
        }
        None => {
            let unmasked = net.combine(tape, store, &fwd.components, None)?;
            tape.detach(unmasked)
        }
    };

    let d = net.config().d;
    let n = batch.positions();
    let hidden_rows = tape.reshape(fwd.hidden, &[n, d])?;
    let target_rows = tape.reshape(target, &[n, d])?;
    let mut positions = Vec::new();
    let mut targets = ForecastTargets::new(net.config().num_features);
    for (b, (seq, plan)) in seqs.iter().zip(plans).enumerate() {
        let local = plan.positions();
        targets.extend(build_forecast_targets(seq, &local, horizon, net.config().num_features));
        positions.extend(local.iter().map(|i| b * batch.len + i));
    }
    let recon = recon_loss(tape, hidden_rows, target_rows, &positions)?;
    let forecast = if positions.is_empty() {
        tape.constant(Tensor::scalar(0.0))
    } else {
        let preds = net.forecast(tape, store, fwd.hidden, &positions)?;
        forecast_loss(tape, preds, &targets)?
    };
    let total = total_loss(tape, recon, forecast, lambda)?;
    Ok(PretrainLoss {
        recon,
        forecast,
        total,
        masked: positions.len(),
    })
}

pub(crate) fn epoch_rng(seed: u64, epoch: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.wrapping_mul(1 << 32) ^ epoch as u64);
    rng
}

/// Shuffled batches of similar-length sequences: shuffle, sort by length
/// within pools of several batches, cut into batches, shuffle the batches.
pub(crate) fn bucketed_batches(lengths: &[usize], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    const POOL_BATCHES: usize = 8;
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.shuffle(rng);
    let mut batches = Vec::with_capacity(lengths.len().div_ceil(batch_size));
    for pool in order.chunks_mut(batch_size * POOL_BATCHES) {
        pool.sort_by_key(|&i| lengths[i]);
        batches.extend(pool.chunks(batch_size).map(<[usize]>::to_vec));
    }
    batches.shuffle(rng);
    batches
}

/// Truncate to the model's maximum length.
pub(crate) fn fit_length(data: &[LabeledSequence], max_len: usize) -> Vec<TripletSequence> {
    data.iter()
        .map(|item| {
            let mut s = item.sequence.clone();
            s.truncate(max_len);
            s
        })
        .collect()
}

#[derive(Default)]
struct Accum {
    recon: f64,
    forecast: f64,
    total: f64,
    batches: usize,
}

impl Accum {
    fn add(&mut self, tape: &Tape, loss: &PretrainLoss) -> Result<()> {
        self.recon += tape.value(loss.recon).item()? as f64;
        self.forecast += tape.value(loss.forecast).item()? as f64;
        self.total += tape.value(loss.total).item()? as f64;
        self.batches += 1;
        Ok(())
    }

    fn finish(&self) -> LossBreakdown {
        let n = self.batches.max(1) as f64;
        LossBreakdown {
            recon: Some(self.recon / n),
            forecast: Some(self.forecast / n),
            total: self.total / n,
        }
    }
}

/// Mean batch losses over `seqs` with fixed validation masks and no dropout.
pub fn pretrain_eval(model: &EmitModel, seqs: &[TripletSequence], cfg: &PretrainConfig) -> Result<LossBreakdown> {
    let mask = resolved_mask(cfg, seqs)?;
    let plans = seqs
        .iter()
        .map(|s| plan_sequence(s, &mask, VALIDATION_MASK_EPOCH))
        .collect::<Result<Vec<_>>>()?;
    let mut acc = Accum::default();
    for (chunk, plan_chunk) in seqs.chunks(cfg.batch_size).zip(plans.chunks(cfg.batch_size)) {
        let s: Vec<&TripletSequence> = chunk.iter().collect();
        let p: Vec<&MaskPlan> = plan_chunk.iter().collect();
        let mut tape = Tape::new();
        let loss = pretrain_objective(&model.net, &model.store, &mut tape, &s, &p, cfg.horizon, cfg.lambda, None)?;
        if loss.masked > 0 {
            acc.add(&tape, &loss)?;
        }
    }
    Ok(acc.finish())
}

fn resolved_mask(cfg: &PretrainConfig, seqs: &[TripletSequence]) -> Result<MaskConfig> {
    let mut mask = cfg.mask;
    if mask.variant == MaskVariant::Random && mask.random_rate.is_none() {
        let items: Vec<LabeledSequence> = seqs
            .iter()
            .map(|s| LabeledSequence { sequence: s.clone(), label: None })
            .collect();
        mask.random_rate = Some(resolve_random_rate(&items, &mask)?);
    }
    Ok(mask)
}

/// Masked-embedding pretraining with early stopping on validation `L_total`.
/// Sequences must already be normalized. `model` ends holding the best weights.
pub fn pretrain(
    model: &mut EmitModel,
    train: &[LabeledSequence],
    validation: &[LabeledSequence],
    cfg: &PretrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(EmitError::Empty("training split"));
    }
    if validation.is_empty() {
        return Err(EmitError::Empty("validation split"));
    }
    let max_len = model.config().max_len;
    let train_seqs = fit_length(train, max_len);
    let val_seqs = fit_length(validation, max_len);
    // The random baseline's budget comes from the training data.
    let mut cfg = *cfg;
    cfg.mask = resolved_mask(&cfg, &train_seqs)?;

    let mut adam = AdamState::new(
        &model.store,
        AdamConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..AdamConfig::default()
        },
    );
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut best_store = model.store.clone();
    let mut epochs = Vec::new();
    let mut skipped = 0;
    let mut stop_reason = StopReason::MaxEpochs;
    let lengths: Vec<usize> = train_seqs.iter().map(TripletSequence::len).collect();

    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let batches = bucketed_batches(&lengths, cfg.batch_size, &mut epoch_rng(cfg.seed, epoch, 1));
        let mut dropout_rng = epoch_rng(cfg.seed, epoch, 2);
        let mut acc = Accum::default();
        for chunk in &batches {
            let seqs: Vec<&TripletSequence> = chunk.iter().map(|&i| &train_seqs[i]).collect();
            let plans = seqs
                .iter()
                .map(|s| plan_sequence(s, &cfg.mask, epoch as u64))
                .collect::<Result<Vec<_>>>()?;
            let plan_refs: Vec<&MaskPlan> = plans.iter().collect();
            let mut tape = Tape::new();
            let loss = pretrain_objective(
                &model.net,
                &model.store,
                &mut tape,
                &seqs,
                &plan_refs,
                cfg.horizon,
                cfg.lambda,
                Some(&mut dropout_rng),
            )?;
            if loss.masked == 0 {
                skipped += 1;
                log::debug!("epoch {epoch}: skipped a batch with no masked positions");
                continue;
            }
            acc.add(&tape, &loss)?;
            let grads = tape.backward(loss.total)?;
            model.store.zero_grads();
            tape.accumulate_param_grads(&grads, &mut model.store);
            adam.step(&mut model.store)?;
        }
        let train_loss = acc.finish();
        let val_loss = pretrain_eval(model, &val_seqs, &cfg)?;
        if stopper.observe(epoch, val_loss.total) {
            best_store = model.store.clone();
        }
        log::info!(
            "pretrain epoch {epoch}: train {:.5} validation {:.5}",
            train_loss.total,
            val_loss.total
        );
        epochs.push(EpochLog {
            epoch,
            train: train_loss,
            validation: val_loss,
            validation_roc_auc: None,
            wall_time_secs: start.elapsed().as_secs_f64(),
        });
        if stopper.should_stop() {
            stop_reason = StopReason::EarlyStopping;
            break;
        }
    }

    model.store = best_store;
    Ok(TrainReport {
        epochs_run: epochs.len(),
        epochs,
        best_epoch: stopper.best_epoch().max(1),
        stop_reason,
        train_size: train.len(),
        skipped_batches: skipped,
    })
}
