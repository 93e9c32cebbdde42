use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use emit::eval::{
    emit_report, evaluate_model, parse_grid, prepare_data, prepare_data_for, run_ablation,
    run_sweep, Overrides, RunConfig,
};
use emit::masking::{mask_statistics, MaskVariant};
use emit::model::{Checkpoint, EmitModel};
use emit::series::{generate_synthetic, load_dataset, write_dataset, NormalizationStats};
use emit::training::{finetune, pretrain};
use emit::{EmitError, Result};

#[derive(Parser)]
#[command(name = "emit", version, about = "Event-based masked pretraining for irregular time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// JSON-lines dataset; the synthetic corpus is used when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    alpha_mask: Option<f64>,
    #[arg(long)]
    variant: Option<MaskVariant>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    label_fraction: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(&Overrides {
            seed: self.seed,
            theta: self.theta,
            alpha_mask: self.alpha_mask,
            variant: self.variant,
            lambda: self.lambda,
            label_fraction: self.label_fraction,
            horizon: self.horizon,
            data: self.data.clone(),
        })?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic event-labeled corpus as JSON lines.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_sequences: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Masked pretraining; writes a checkpoint and a training report.
    Pretrain {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune for classification, optionally from a pretrained checkpoint.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a labeled dataset with a checkpoint and write a metric report.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Significance and masking summary of the training split.
    MaskStats {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare all masking variants over several seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Number of seeds, starting at the configured seed.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// Comma-separated subset of variants.
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<MaskVariant>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid over theta and alpha_mask.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Theta grid (`start:end:step` or comma list).
        #[arg(long = "theta-grid", default_value = "0.1,0.01,0.001")]
        thetas: String,
        /// Insignificant-position mask probability grid.
        #[arg(long, default_value = "0:1:0.1")]
        alpha_grid: String,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn output<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => emit_report(value, p),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| EmitError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn seed_list(cfg: &RunConfig, n: u64) -> Vec<u64> {
    (0..n).map(|i| cfg.seed + i).collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, n_sequences, out } => {
            let cfg = common.load()?;
            let mut synth = cfg.synth.clone();
            if let Some(n) = n_sequences {
                synth.n_sequences = n;
            }
            let data = generate_synthetic(&synth, common.seed.unwrap_or(cfg.data_seed))?;
            write_dataset(&out, &data.sequences, &data.vocab)?;
            eprintln!("wrote {} sequences to {}", data.sequences.len(), out.display());
        }
        Command::Pretrain { common, out } => {
            let cfg = common.load()?;
            let data = prepare_data(&cfg)?;
            let mut model = EmitModel::new(cfg.model.for_features(data.vocab.len()), cfg.seed)?;
            let report = pretrain(&mut model, &data.train, &data.validation, &cfg.pretrain)?;
            create_dir(&out)?;
            Checkpoint::from_model(&model)
                .with_vocab(&data.vocab)
                .with_normalization(&data.normalization)?
                .save(out.join("checkpoint.json"))?;
            emit_report(&report, out.join("pretrain_report.json"))?;
            cfg.save(out.join("config.json"))?;
            eprintln!(
                "best epoch {} of {} ({:?}); outputs in {}",
                report.best_epoch,
                report.epochs_run,
                report.stop_reason,
                out.display()
            );
        }
        Command::Finetune { common, checkpoint, out } => {
            let cfg = common.load()?;
            let (data, pretrained) = match &checkpoint {
                Some(p) => {
                    let ck = Checkpoint::load(p)?;
                    (prepare_data_for(&cfg, &ck)?, Some(ck.to_model()?))
                }
                None => (prepare_data(&cfg)?, None),
            };
            let model_cfg = match &pretrained {
                Some(m) => *m.config(),
                None => cfg.model.for_features(data.vocab.len()),
            };
            let (model, report) = finetune(&model_cfg, pretrained.as_ref(), &data.train, &data.validation, &cfg.finetune)?;
            let metrics = evaluate_model(&model, &data.test, &cfg.hash(), cfg.seed)?.with_config(&cfg)?;
            create_dir(&out)?;
            Checkpoint::from_model(&model)
                .with_vocab(&data.vocab)
                .with_normalization(&data.normalization)?
                .save(out.join("checkpoint.json"))?;
            emit_report(&report, out.join("finetune_report.json"))?;
            emit_report(&metrics, out.join("metrics.json"))?;
            cfg.save(out.join("config.json"))?;
            eprintln!("test ROC-AUC {:.4}; outputs in {}", metrics.roc_auc, out.display());
        }
        Command::Evaluate { checkpoint, data, out, seed } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let model = ck.to_model()?;
            let (raw, vocab) = load_dataset(&data, ck.vocab.as_ref())?;
            if vocab.len() != model.config().num_features {
                return Err(EmitError::CheckpointMismatch(format!(
                    "dataset has {} features, model expects {}",
                    vocab.len(),
                    model.config().num_features
                )));
            }
            let stats = match ck.normalization_stats()? {
                Some(s) => s,
                None => {
                    log::warn!("checkpoint has no normalization statistics; using raw values");
                    NormalizationStats::identity(&vocab)
                }
            };
            let test = stats.normalize_all(&raw)?;
            let hash = emit::eval::config_hash(&ck.model_config);
            let report = evaluate_model(&model, &test, &hash, seed)?;
            output(&report, out.as_deref())?;
        }
        Command::MaskStats { common, out } => {
            let cfg = common.load()?;
            let data = prepare_data(&cfg)?;
            let stats = mask_statistics(&data.train, &cfg.pretrain.mask, &data.vocab)?;
            output(&stats, out.as_deref())?;
        }
        Command::Ablate { common, seeds, variants, out } => {
            let cfg = common.load()?;
            let data = prepare_data(&cfg)?;
            let variants = variants.unwrap_or_else(|| MaskVariant::ALL.to_vec());
            let report = run_ablation(&cfg, &data, &variants, &seed_list(&cfg, seeds))?;
            eprint!("{}", report.table());
            output(&report, out.as_deref())?;
        }
        Command::Sweep { common, thetas, alpha_grid, seeds, out } => {
            let cfg = common.load()?;
            let data = prepare_data(&cfg)?;
            let thetas = match common.theta {
                Some(t) => vec![t],
                None => parse_grid(&thetas)?,
            };
            let alphas = parse_grid(&alpha_grid)?;
            let rows = run_sweep(&cfg, &data, &thetas, &alphas, &seed_list(&cfg, seeds))?;
            output(&rows, out.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
