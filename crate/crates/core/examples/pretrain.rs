//! Masked-embedding pretraining on a reduced synthetic corpus, with the
//! best checkpoint written to disk.
//!
//! RUST_LOG=info cargo run --release --example pretrain -- /tmp/pretrained.json

use emit::eval::{prepare_data, RunConfig};
use emit::model::{Checkpoint, EmitModel};
use emit::training::pretrain;

fn main() -> emit::Result<()> {
    env_logger::init();
    let out = std::env::args().nth(1).unwrap_or_else(|| "pretrained.json".into());
    let mut cfg = RunConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/synthetic.json"))?;
    cfg.synth.n_sequences = 400;
    cfg.pretrain.max_epochs = 15;
    let data = prepare_data(&cfg)?;

    let mut model = EmitModel::new(cfg.model.for_features(data.vocab.len()), cfg.seed)?;
    let report = pretrain(&mut model, &data.train, &data.validation, &cfg.pretrain)?;
    for e in &report.epochs {
        println!(
            "epoch {:>3}  train {:.4} (recon {:.4}, forecast {:.4})  validation {:.4}",
            e.epoch,
            e.train.total,
            e.train.recon.unwrap_or(0.0),
            e.train.forecast.unwrap_or(0.0),
            e.validation.total
        );
    }
    println!("kept epoch {} ({:?})", report.best_epoch, report.stop_reason);
    Checkpoint::from_model(&model)
        .with_vocab(&data.vocab)
        .with_normalization(&data.normalization)?
        .save(&out)?;
    println!("wrote {out}");
    Ok(())
}
