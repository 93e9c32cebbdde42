//! Fine-tune with and without pretraining at several label fractions and
//! compare test metrics.
//!
//! RUST_LOG=info cargo run --release --example finetune

use emit::eval::{evaluate_model, prepare_data, RunConfig};
use emit::model::EmitModel;
use emit::training::{finetune, pretrain, FinetuneConfig};

fn main() -> emit::Result<()> {
    env_logger::init();
    let mut cfg = RunConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/synthetic.json"))?;
    cfg.synth.n_sequences = 600;
    cfg.pretrain.max_epochs = 15;
    let data = prepare_data(&cfg)?;
    let model_cfg = cfg.model.for_features(data.vocab.len());

    let mut pre = EmitModel::new(model_cfg, cfg.seed)?;
    pretrain(&mut pre, &data.train, &data.validation, &cfg.pretrain)?;

    println!("{:>8} {:>12} {:>9} {:>9}", "labels", "init", "ROC-AUC", "PR-AUC");
    for fraction in [0.1, 0.3, 1.0] {
        let ft = FinetuneConfig {
            label_fraction: fraction,
            ..cfg.finetune
        };
        for (name, source) in [("scratch", None), ("pretrained", Some(&pre))] {
            let (model, _) = finetune(&model_cfg, source, &data.train, &data.validation, &ft)?;
            let m = evaluate_model(&model, &data.test, &cfg.hash(), cfg.seed)?;
            println!("{fraction:>8} {name:>12} {:>9.4} {:>9.4}", m.roc_auc, m.pr_auc);
        }
    }
    Ok(())
}
