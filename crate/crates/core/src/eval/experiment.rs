use serde::Serialize;

use super::{MetricReport, RunConfig};
use crate::error::{EmitError, Result};
use crate::model::{Checkpoint, EmitModel};
use crate::series::{
    fit_normalization, generate_synthetic, load_dataset, split, FeatureVocab, LabeledSequence,
    NormalizationStats,
};
use crate::training::{finetune, pretrain, TrainReport};

/// Normalized train/validation/test splits plus the statistics used.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Vec<LabeledSequence>,
    pub validation: Vec<LabeledSequence>,
    pub test: Vec<LabeledSequence>,
    pub vocab: FeatureVocab,
    pub normalization: NormalizationStats,
}

impl PreparedData {
    /// Split raw sequences and z-score them with statistics from the training split.
    pub fn from_raw(raw: &[LabeledSequence], vocab: FeatureVocab, cfg: &RunConfig) -> Result<Self> {
        Self::build(raw, vocab, cfg, None)
    }

    fn build(
        raw: &[LabeledSequence],
        vocab: FeatureVocab,
        cfg: &RunConfig,
        stats: Option<NormalizationStats>,
    ) -> Result<Self> {
        let parts = split(raw, &cfg.split)?;
        if parts.train.is_empty() || parts.validation.is_empty() || parts.test.is_empty() {
            return Err(EmitError::InvalidInput(format!(
                "{} sequences are too few for a train/validation/test split",
                raw.len()
            )));
        }
        let normalization = match stats {
            Some(s) => s,
            None => fit_normalization(&parts.train, &vocab)?,
        };
        Ok(Self {
            train: normalization.normalize_all(&parts.train)?,
            validation: normalization.normalize_all(&parts.validation)?,
            test: normalization.normalize_all(&parts.test)?,
            vocab,
            normalization,
        })
    }
}

/// Load `cfg.data` or generate the synthetic corpus, then split and normalize.
pub fn prepare_data(cfg: &RunConfig) -> Result<PreparedData> {
    let (raw, vocab) = match &cfg.data {
        Some(path) => load_dataset(path, None)?,
        None => {
            let synth = generate_synthetic(&cfg.synth, cfg.data_seed)?;
            (synth.sequences, synth.vocab)
        }
    };
    PreparedData::from_raw(&raw, vocab, cfg)
}

/// Like [`prepare_data`] but bound to a checkpoint's vocabulary and, when
/// stored, its normalization statistics.
pub fn prepare_data_for(cfg: &RunConfig, checkpoint: &Checkpoint) -> Result<PreparedData> {
    let vocab = checkpoint
        .vocab
        .clone()
        .ok_or_else(|| EmitError::CheckpointMismatch("checkpoint has no feature vocabulary".into()))?;
    let raw = match &cfg.data {
        Some(path) => load_dataset(path, Some(&vocab))?.0,
        None => {
            let synth = generate_synthetic(&cfg.synth, cfg.data_seed)?;
            if synth.vocab != vocab {
                return Err(EmitError::CheckpointMismatch(
                    "synthetic vocabulary differs from the checkpoint's".into(),
                ));
            }
            synth.sequences
        }
    };
    PreparedData::build(&raw, vocab, cfg, checkpoint.normalization_stats()?)
}

/// Labels of a split; every sequence must carry one.
pub fn labels_of(data: &[LabeledSequence]) -> Result<Vec<u8>> {
    data.iter()
        .map(|s| {
            s.label
                .ok_or_else(|| EmitError::InvalidInput(format!("sequence '{}' has no label", s.sequence.id())))
        })
        .collect()
}

/// Test-set metrics of `model` with run metadata.
pub fn evaluate_model(
    model: &EmitModel,
    test: &[LabeledSequence],
    config_hash: &str,
    seed: u64,
) -> Result<MetricReport> {
    let labels = labels_of(test)?;
    let seqs: Vec<_> = test
        .iter()
        .map(|s| {
            let mut seq = s.sequence.clone();
            seq.truncate(model.config().max_len);
            seq
        })
        .collect();
    let refs: Vec<_> = seqs.iter().collect();
    let probs = model.predict(&refs, 64)?;
    MetricReport::compute(&probs, &labels, config_hash, seed)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReports {
    pub metrics: MetricReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pretrain: Option<TrainReport>,
    pub finetune: TrainReport,
}

/// Models and reports from one pretrain → fine-tune → test run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub pretrained: Option<EmitModel>,
    pub model: EmitModel,
    pub reports: RunReports,
}

impl RunOutcome {
    pub fn checkpoint(&self, data: &PreparedData) -> Result<Checkpoint> {
        Checkpoint::from_model(&self.model)
            .with_vocab(&data.vocab)
            .with_normalization(&data.normalization)
    }
}

/// Pretrain (if enabled), fine-tune, and evaluate on the test split.
pub fn run_experiment(cfg: &RunConfig, data: &PreparedData) -> Result<RunOutcome> {
    cfg.validate()?;
    let model_cfg = cfg.model.for_features(data.vocab.len());
    let (pretrained, pre_report) = if cfg.pretrain_enabled {
        let mut model = EmitModel::new(model_cfg, cfg.seed)?;
        let report = pretrain(&mut model, &data.train, &data.validation, &cfg.pretrain)?;
        (Some(model), Some(report))
    } else {
        (None, None)
    };
    let (model, ft_report) = finetune(&model_cfg, pretrained.as_ref(), &data.train, &data.validation, &cfg.finetune)?;
    let metrics = evaluate_model(&model, &data.test, &cfg.hash(), cfg.seed)?.with_config(cfg)?;
    Ok(RunOutcome {
        pretrained,
        model,
        reports: RunReports {
            metrics,
            pretrain: pre_report,
            finetune: ft_report,
        },
    })
}
