use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::pretrain::{bucketed_batches, epoch_rng, fit_length};
use super::report::EarlyStopper;
use super::{EpochLog, LossBreakdown, StopReason, TrainReport};
use crate::error::{EmitError, Result};
use crate::eval::{roc_auc, scored};
use crate::model::{Batch, EmitModel, ModelConfig};
use crate::numerics::{AdamConfig, AdamState, Real, Tape};
use crate::series::{check_label_fraction, stratified_subsample, LabeledSequence, TripletSequence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub dropout: f64,
    pub weight_decay: f64,
    /// Stratified fraction of the labeled training set to use.
    pub label_fraction: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            lr: 5e-5,
            dropout: 0.2,
            weight_decay: 0.0,
            label_fraction: 1.0,
            max_epochs: 100,
            patience: 5,
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        check_label_fraction(Some(self.label_fraction))?;
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(EmitError::InvalidConfig("batch size and max epochs must be at least 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(EmitError::InvalidConfig(format!("learning rate {} must be positive", self.lr)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(EmitError::InvalidConfig(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

fn labels_of(data: &[LabeledSequence]) -> Result<Vec<u8>> {
    data.iter()
        .map(|item| {
            item.label.ok_or_else(|| {
                EmitError::InvalidInput(format!("sequence '{}' has no label", item.sequence.id()))
            })
        })
        .collect()
}

/// Mean BCE and ROC-AUC (if both classes occur) in evaluation mode.
pub fn classification_eval(
    model: &EmitModel,
    seqs: &[TripletSequence],
    labels: &[u8],
    batch_size: usize,
) -> Result<(f64, Option<f64>, Vec<f64>)> {
    let refs: Vec<&TripletSequence> = seqs.iter().collect();
    let probs = model.predict(&refs, batch_size)?;
    let eps = 1e-12;
    let bce = probs
        .iter()
        .zip(labels)
        .map(|(p, y)| {
            let p = p.clamp(eps, 1.0 - eps);
            if *y == 1 { -p.ln() } else { -(1.0 - p).ln() }
        })
        .sum::<f64>()
        / probs.len().max(1) as f64;
    let auc = roc_auc(&scored(&probs, labels)?).ok();
    Ok((bce, auc, probs))
}

fn compatible(pre: &ModelConfig, fine: &ModelConfig) -> Result<()> {
    let same = pre.d == fine.d
        && pre.blocks == fine.blocks
        && pre.heads == fine.heads
        && pre.ffn_hidden == fine.ffn_hidden
        && pre.num_features == fine.num_features;
    if !same {
        return Err(EmitError::CheckpointMismatch(format!(
            "pretrained architecture {pre:?} does not match {fine:?}"
        )));
    }
    Ok(())
}

/// Binary classification fine-tuning with early stopping on validation ROC-AUC.
///
/// With `pretrained`, embedding, mask-token, and encoder weights are copied
/// and the pooling and prediction heads start fresh; without it the model
/// trains from scratch. Sequences must already be normalized.
pub fn finetune(
    model_config: &ModelConfig,
    pretrained: Option<&EmitModel>,
    train: &[LabeledSequence],
    validation: &[LabeledSequence],
    cfg: &FinetuneConfig,
) -> Result<(EmitModel, TrainReport)> {
    cfg.validate()?;
    let config = ModelConfig {
        dropout: cfg.dropout,
        ..*model_config
    };
    let mut model = EmitModel::new(config, cfg.seed)?;
    if let Some(pre) = pretrained {
        compatible(pre.config(), &config)?;
        model.transfer_from(pre)?;
    }
    let train = if cfg.label_fraction < 1.0 {
        stratified_subsample(train, cfg.label_fraction, cfg.seed)?
    } else {
        train.to_vec()
    };
    if train.is_empty() {
        return Err(EmitError::Empty("training split"));
    }
    if validation.is_empty() {
        return Err(EmitError::Empty("validation split"));
    }
    let train_labels = labels_of(&train)?;
    let val_labels = labels_of(validation)?;
    let train_seqs = fit_length(&train, config.max_len);
    let val_seqs = fit_length(validation, config.max_len);

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
    let mut stop_reason = StopReason::MaxEpochs;
    let lengths: Vec<usize> = train_seqs.iter().map(TripletSequence::len).collect();

    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let order = bucketed_batches(&lengths, cfg.batch_size, &mut epoch_rng(cfg.seed, epoch, 3));
        let mut dropout_rng = epoch_rng(cfg.seed, epoch, 4);
        let (mut total, mut batches) = (0.0, 0usize);
        for chunk in &order {
            let seqs: Vec<&TripletSequence> = chunk.iter().map(|&i| &train_seqs[i]).collect();
            let targets: Vec<Real> = chunk.iter().map(|&i| Real::from(train_labels[i])).collect();
            let batch = Batch::new(&seqs, &config)?;
            let mut tape = Tape::new();
            let fwd = model.net.forward(&mut tape, &model.store, &batch, None, Some(&mut dropout_rng))?;
            let (pooled, _) = model.net.aggregate(&mut tape, &model.store, fwd.hidden, &batch.valid)?;
            let logits = model.net.predict_logits(&mut tape, &model.store, pooled)?;
            let loss = tape.bce_with_logits(logits, targets)?;
            total += tape.value(loss).item()? as f64;
            batches += 1;
            let grads = tape.backward(loss)?;
            model.store.zero_grads();
            tape.accumulate_param_grads(&grads, &mut model.store);
            adam.step(&mut model.store)?;
        }
        let (val_bce, val_auc, _) = classification_eval(&model, &val_seqs, &val_labels, cfg.batch_size)?;
        // Higher AUC is better; fall back to loss when AUC is undefined.
        let monitored = val_auc.map_or(val_bce, |a| -a);
        if stopper.observe(epoch, monitored) {
            best_store = model.store.clone();
        }
        log::info!("finetune epoch {epoch}: validation bce {val_bce:.5} auc {val_auc:?}");
        epochs.push(EpochLog {
            epoch,
            train: LossBreakdown {
                recon: None,
                forecast: None,
                total: total / batches.max(1) as f64,
            },
            validation: LossBreakdown {
                recon: None,
                forecast: None,
                total: val_bce,
            },
            validation_roc_auc: val_auc,
            wall_time_secs: start.elapsed().as_secs_f64(),
        });
        if stopper.should_stop() {
            stop_reason = StopReason::EarlyStopping;
            break;
        }
    }

    model.store = best_store;
    let report = TrainReport {
        epochs_run: epochs.len(),
        epochs,
        best_epoch: stopper.best_epoch().max(1),
        stop_reason,
        train_size: train.len(),
        skipped_batches: 0,
    };
    Ok((model, report))
}
