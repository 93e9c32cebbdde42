//! Pretraining, fine-tuning, losses, and training reports.

mod finetune;
mod losses;
mod pretrain;
mod report;
mod targets;

pub use finetune::{classification_eval, finetune, FinetuneConfig};
pub use losses::{forecast_loss, recon_loss, total_loss};
pub use pretrain::{
    pretrain, pretrain_eval, pretrain_objective, pretrain_objective_with_target, reconstruction_target, PretrainConfig, PretrainLoss, VALIDATION_MASK_EPOCH,
};
pub use report::{EpochLog, LossBreakdown, StopReason, TrainReport};
pub use targets::{build_forecast_targets, ForecastTargets};
