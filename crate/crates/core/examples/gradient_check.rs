//! Reverse-mode gradients checked against central finite differences, first
//! on a two-layer tanh network and then on the full pretraining loss.
//!
//! cargo run --release --example gradient_check

use emit::masking::{MaskConfig, MaskPlan, plan_sequence};
use emit::model::{EmitNet, ModelConfig};
use emit::numerics::{grad_check, GradCheckConfig, ParamStore, Tape, Tensor};
use emit::series::{fit_normalization, generate_synthetic, SynthConfig, TripletSequence};
use emit::training::{pretrain_objective_with_target, reconstruction_target};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape")
}

fn main() -> emit::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let w1 = store.add("w1", random(&mut rng, &[4, 6]))?;
    let w2 = store.add("w2", random(&mut rng, &[6, 1]))?;
    let x = random(&mut rng, &[5, 4]);
    let report = grad_check(
        &mut store,
        |store: &ParamStore, tape: &mut Tape| {
            let input = tape.constant(x.clone());
            let (a, b) = (tape.param(store, w1), tape.param(store, w2));
            let h = tape.matmul(input, a)?;
            let h = tape.tanh(h);
            let y = tape.matmul(h, b)?;
            Ok(tape.mean(y))
        },
        GradCheckConfig::default(),
    )?;
    println!("tanh network: max relative error {:.2e}", report.max_rel_error);

    let synth = SynthConfig {
        n_sequences: 4,
        min_obs: 6,
        max_obs: 6,
        n_features: 3,
        ..SynthConfig::default()
    };
    let data = generate_synthetic(&synth, 1)?;
    let normalized = fit_normalization(&data.sequences, &data.vocab)?.normalize_all(&data.sequences)?;
    let seqs: Vec<&TripletSequence> = normalized.iter().map(|s| &s.sequence).collect();
    let mask = MaskConfig {
        theta: 0.5,
        alpha_mask: 0.5,
        ..MaskConfig::default()
    };
    let plans = seqs.iter().map(|s| plan_sequence(s, &mask, 1)).collect::<emit::Result<Vec<MaskPlan>>>()?;
    let plans: Vec<&MaskPlan> = plans.iter().collect();
    let config = ModelConfig {
        d: 8,
        blocks: 1,
        heads: 2,
        d_a: 8,
        ffn_hidden: 16,
        dropout: 0.0,
        ..ModelConfig::new(3)
    };
    let (net, mut store) = EmitNet::build(config, 0)?;
    let target = reconstruction_target(&net, &store, &seqs)?;
    let report = grad_check(
        &mut store,
        |store: &ParamStore, tape: &mut Tape| {
            Ok(pretrain_objective_with_target(&net, store, tape, &seqs, &plans, &target, 2.0, 1.0)?.total)
        },
        GradCheckConfig::default(),
    )?;
    for p in &report.params {
        println!("  {:<22} {:>4} coords  max rel err {:.2e}", p.name, p.checked, p.max_rel_error);
    }
    println!("pretraining loss: passed = {}", report.passed());
    Ok(())
}
