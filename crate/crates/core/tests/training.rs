#![cfg(not(feature = "f32"))]

use emit::masking::{plan_sequence, MaskConfig, MaskKind, MaskPlan};
use emit::model::{Batch, Checkpoint, EmitModel, EmitNet, ModelConfig};
use emit::numerics::{grad_check, GradCheckConfig, ParamStore, Tape, Tensor};
use emit::series::{LabeledSequence, Observation, TripletSequence};
use emit::training::{
    finetune, forecast_loss, pretrain, pretrain_eval, pretrain_objective, pretrain_objective_with_target, recon_loss,
    reconstruction_target, total_loss,
    FinetuneConfig, ForecastTargets, PretrainConfig, StopReason,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny() -> ModelConfig {
    ModelConfig {
        d: 8,
        blocks: 1,
        heads: 2,
        d_a: 8,
        ffn_hidden: 16,
        dropout: 0.0,
        ..ModelConfig::new(3)
    }
}

fn random_seq(rng: &mut ChaCha8Rng, id: &str, n: usize, features: usize) -> TripletSequence {
    let obs = (0..n)
        .map(|_| {
            Observation::new(
                rng.random_range(0.0..4.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(0..features),
            )
        })
        .collect();
    TripletSequence::new(id, obs).unwrap()
}

fn scalar(tape: &Tape, v: emit::numerics::Var) -> f64 {
    tape.value(v).item().unwrap()
}

#[test]
fn recon_loss_examples() {
    let mut tape = Tape::new();
    let out = tape.input(Tensor::new(vec![2, 2], vec![1.0, 1.0, 5.0, -3.0]).unwrap());
    let tgt = tape.constant(Tensor::new(vec![2, 2], vec![0.0, 0.0, 7.0, 7.0]).unwrap());
    let l = recon_loss(&mut tape, out, tgt, &[0]).unwrap();
    assert_eq!(scalar(&tape, l), 1.0);
    let same = recon_loss(&mut tape, out, out, &[0, 1]).unwrap();
    assert_eq!(scalar(&tape, same), 0.0);
    let none = recon_loss(&mut tape, out, tgt, &[]).unwrap();
    assert_eq!(scalar(&tape, none), 0.0);
    let bad = tape.constant(Tensor::zeros(&[2, 3]));
    assert!(recon_loss(&mut tape, out, bad, &[0]).is_err());
}

#[test]
fn recon_loss_ignores_unmasked_positions() {
    let mut tape = Tape::new();
    let out = tape.input(Tensor::new(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
    let t1 = tape.constant(Tensor::new(vec![3, 2], vec![0.0, 0.0, 9.0, 9.0, 1.0, 1.0]).unwrap());
    let t2 = tape.constant(Tensor::new(vec![3, 2], vec![0.0, 0.0, -4.0, 2.0, 1.0, 1.0]).unwrap());
    let a = recon_loss(&mut tape, out, t1, &[0, 2]).unwrap();
    let b = recon_loss(&mut tape, out, t2, &[0, 2]).unwrap();
    assert_eq!(scalar(&tape, a), scalar(&tape, b));
}

#[test]
fn forecast_and_total_examples() {
    let mut tape = Tape::new();
    let pred = tape.input(Tensor::new(vec![1, 2], vec![2.0, 9.0]).unwrap());
    let targets = ForecastTargets {
        num_features: 2,
        values: vec![1.0, 0.0],
        indicators: vec![true, false],
    };
    let f = forecast_loss(&mut tape, pred, &targets).unwrap();
    assert_eq!(scalar(&tape, f), 1.0);
    let empty = ForecastTargets {
        indicators: vec![false, false],
        ..targets.clone()
    };
    let z = forecast_loss(&mut tape, pred, &empty).unwrap();
    assert_eq!(scalar(&tape, z), 0.0);

    let r = tape.constant(Tensor::scalar(0.5));
    let fc = tape.constant(Tensor::scalar(0.25));
    let t = total_loss(&mut tape, r, fc, 2.0).unwrap();
    assert_eq!(scalar(&tape, t), 1.25);
    let t0 = total_loss(&mut tape, r, fc, 0.0).unwrap();
    assert_eq!(scalar(&tape, t0), 0.25);
}

/// Batch of four length-6 sequences with a fixed mixed-kind mask plan.
fn grad_fixture() -> (Vec<TripletSequence>, Vec<MaskPlan>) {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let seqs: Vec<TripletSequence> = (0..4).map(|i| random_seq(&mut rng, &format!("g{i}"), 6, 3)).collect();
    let kinds = [MaskKind::Time, MaskKind::Value, MaskKind::Feature, MaskKind::Sum];
    let plans = (0..4)
        .map(|b| {
            let mut masked = vec![false; 6];
            let mut map = std::collections::BTreeMap::new();
            for (j, &p) in [b % 6, (b + 2) % 6].iter().enumerate() {
                masked[p] = true;
                map.insert(p, kinds[(b + j) % 4]);
            }
            MaskPlan::new(masked, map).unwrap()
        })
        .collect();
    (seqs, plans)
}

#[test]
fn full_objective_matches_finite_differences() {
    // The reconstruction target is a constant per step, so the oracle holds it
    // at its value under the unperturbed parameters.
    let (seqs, plans) = grad_fixture();
    let (net, mut store) = EmitNet::build(tiny(), 3).unwrap();
    let s: Vec<&TripletSequence> = seqs.iter().collect();
    let p: Vec<&MaskPlan> = plans.iter().collect();
    let target = reconstruction_target(&net, &store, &s).unwrap();

    let mut live = Tape::new();
    let a = pretrain_objective(&net, &store, &mut live, &s, &p, 3.0, 0.7, None).unwrap();
    let mut fixed = Tape::new();
    let b = pretrain_objective_with_target(&net, &store, &mut fixed, &s, &p, &target, 3.0, 0.7).unwrap();
    assert_eq!(scalar(&live, a.total), scalar(&fixed, b.total));
    let (ga, gb) = (live.backward(a.total).unwrap(), fixed.backward(b.total).unwrap());
    let (mut sa, mut sb) = (store.clone(), store.clone());
    sa.zero_grads();
    sb.zero_grads();
    live.accumulate_param_grads(&ga, &mut sa);
    fixed.accumulate_param_grads(&gb, &mut sb);
    for (x, y) in sa.iter().zip(sb.iter()) {
        assert_eq!(x.grad, y.grad, "{}", x.name);
    }

    let report = grad_check(
        &mut store,
        |store: &ParamStore, tape: &mut Tape| {
            Ok(pretrain_objective_with_target(&net, store, tape, &s, &p, &target, 3.0, 0.7)?.total)
        },
        GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.passed(), "{:?}", report.worst());
    assert!(report.params.iter().all(|c| c.checked > 0));
}

#[test]
fn recon_target_is_detached() {
    // Oracle: compute the unmasked embedding on a separate tape and feed it as a constant.
    let (seqs, plans) = grad_fixture();
    let (net, store) = EmitNet::build(tiny(), 4).unwrap();
    let s: Vec<&TripletSequence> = seqs.iter().collect();
    let p: Vec<&MaskPlan> = plans.iter().collect();

    let mut tape = Tape::new();
    let loss = pretrain_objective(&net, &store, &mut tape, &s, &p, 3.0, 1.0, None).unwrap();
    let grads = tape.backward(loss.recon).unwrap();
    let mut ours = store.clone();
    ours.zero_grads();
    tape.accumulate_param_grads(&grads, &mut ours);

    let batch = Batch::new(&s, net.config()).unwrap();
    let mut t0 = Tape::new();
    let c0 = net.embed(&mut t0, &store, &batch).unwrap();
    let e0 = net.combine(&mut t0, &store, &c0, None).unwrap();
    let target_value = t0.value(e0).clone();

    let mut t1 = Tape::new();
    let kinds = batch.mask_kinds(&p).unwrap();
    let f = net.forward(&mut t1, &store, &batch, Some(&kinds), None).unwrap();
    let n = batch.positions();
    let hidden = t1.reshape(f.hidden, &[n, 8]).unwrap();
    let target = t1.constant(target_value.reshape(&[n, 8]).unwrap());
    let positions: Vec<usize> = p
        .iter()
        .enumerate()
        .flat_map(|(b, plan)| plan.positions().into_iter().map(move |i| b * batch.len + i))
        .collect();
    let oracle = recon_loss(&mut t1, hidden, target, &positions).unwrap();
    assert_eq!(scalar(&tape, loss.recon), scalar(&t1, oracle));
    let og = t1.backward(oracle).unwrap();
    let mut theirs = store.clone();
    theirs.zero_grads();
    t1.accumulate_param_grads(&og, &mut theirs);
    for (a, b) in ours.iter().zip(theirs.iter()) {
        assert!(a.grad.max_abs_diff(&b.grad) < 1e-12, "{}", a.name);
    }
}

fn toy_dataset(n: usize, seed: u64) -> Vec<LabeledSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let n = rng.random_range(4..10);
            let mut seq = random_seq(&mut rng, &format!("t{i}"), n, 3);
            let label = u8::from(seq.observations()[0].value > 0.0);
            // Make the label visible through feature 0's first value.
            let mut obs = seq.observations().to_vec();
            obs[0].feature = 0;
            seq = TripletSequence::new(seq.id(), obs).unwrap();
            LabeledSequence::new(seq, Some(label)).unwrap()
        })
        .collect()
}

fn small_pretrain(seed: u64) -> PretrainConfig {
    PretrainConfig {
        mask: MaskConfig {
            theta: 0.5,
            alpha_mask: 0.3,
            seed,
            ..MaskConfig::default()
        },
        batch_size: 8,
        lr: 3e-3,
        max_epochs: 6,
        patience: 2,
        horizon: 2.0,
        seed,
        ..PretrainConfig::default()
    }
}

#[test]
fn pretrain_is_deterministic() {
    let data = toy_dataset(40, 1);
    let run = || {
        let mut model = EmitModel::new(ModelConfig { dropout: 0.1, ..tiny() }, 5).unwrap();
        let report = pretrain(&mut model, &data[..32], &data[32..], &small_pretrain(7)).unwrap();
        (report.without_timing(), emit::model::Checkpoint::from_model(&model))
    };
    let (r1, c1) = run();
    let (r2, c2) = run();
    assert_eq!(r1, r2);
    assert_eq!(c1, c2);
    assert!(r1.best_epoch <= r1.epochs_run);
    let best = r1.best().validation.total;
    assert!(r1.epochs.iter().all(|e| e.validation.total >= best));
}

#[test]
fn zero_patience_stops_after_first_regression() {
    let data = toy_dataset(40, 2);
    let mut model = EmitModel::new(tiny(), 6).unwrap();
    let cfg = PretrainConfig {
        patience: 0,
        max_epochs: 40,
        lr: 5e-2,
        ..small_pretrain(3)
    };
    let report = pretrain(&mut model, &data[..32], &data[32..], &cfg).unwrap();
    assert_eq!(report.stop_reason, StopReason::EarlyStopping);
    let last = report.epochs.last().unwrap().validation.total;
    let prior_best = report.epochs[..report.epochs_run - 1]
        .iter()
        .map(|e| e.validation.total)
        .fold(f64::INFINITY, f64::min);
    assert!(last >= prior_best);
    assert_eq!(report.best_epoch, report.epochs_run - 1);
}

#[test]
fn checkpoint_round_trip_preserves_validation_loss() {
    let data = toy_dataset(40, 3);
    let mut model = EmitModel::new(tiny(), 7).unwrap();
    let cfg = small_pretrain(4);
    pretrain(&mut model, &data[..32], &data[32..], &cfg).unwrap();
    let val: Vec<TripletSequence> = data[32..].iter().map(|s| s.sequence.clone()).collect();
    let before = pretrain_eval(&model, &val, &cfg).unwrap().total;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    Checkpoint::from_model(&model).save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap().to_model().unwrap();
    let after = pretrain_eval(&loaded, &val, &cfg).unwrap().total;
    assert!((before - after).abs() < 1e-9, "{before} vs {after}");
}

#[test]
fn pretrain_rejects_empty_training_set() {
    let data = toy_dataset(4, 4);
    let mut model = EmitModel::new(tiny(), 8).unwrap();
    assert!(pretrain(&mut model, &[], &data, &small_pretrain(0)).is_err());
}

#[test]
fn validation_masks_are_fixed() {
    let data = toy_dataset(6, 5);
    let cfg = small_pretrain(9);
    let a = plan_sequence(&data[0].sequence, &cfg.mask, emit::training::VALIDATION_MASK_EPOCH).unwrap();
    let b = plan_sequence(&data[0].sequence, &cfg.mask, emit::training::VALIDATION_MASK_EPOCH).unwrap();
    assert_eq!(a, b);
}

fn ft_config() -> FinetuneConfig {
    FinetuneConfig {
        batch_size: 16,
        lr: 1e-2,
        dropout: 0.0,
        max_epochs: 20,
        patience: 20,
        seed: 1,
        ..FinetuneConfig::default()
    }
}

#[test]
fn separable_labels_are_learned_from_scratch() {
    let data = toy_dataset(120, 6);
    let (model, report) = finetune(&tiny(), None, &data[..100], &data[100..], &ft_config()).unwrap();
    let seqs: Vec<&TripletSequence> = data[..100].iter().map(|s| &s.sequence).collect();
    let labels: Vec<u8> = data[..100].iter().map(|s| s.label.unwrap()).collect();
    let probs = model.predict(&seqs, 32).unwrap();
    let auc = emit::eval::roc_auc(&emit::eval::scored(&probs, &labels).unwrap()).unwrap();
    assert!(auc > 0.98, "train auc {auc}");
    assert!(report.epochs_run <= 20);
}

#[test]
fn label_fraction_scales_training_set() {
    let data = toy_dataset(100, 7);
    let run = |f: f64| {
        let cfg = FinetuneConfig {
            label_fraction: f,
            max_epochs: 1,
            ..ft_config()
        };
        finetune(&tiny(), None, &data[..80], &data[80..], &cfg).unwrap().1.train_size
    };
    let (small, large) = (run(0.1), run(0.5));
    assert!((7..=9).contains(&small), "{small}");
    assert!((39..=41).contains(&large), "{large}");
}

#[test]
fn finetune_transfers_pretrained_encoder() {
    let data = toy_dataset(40, 8);
    let mut pre = EmitModel::new(tiny(), 9).unwrap();
    pretrain(&mut pre, &data[..32], &data[32..], &small_pretrain(1)).unwrap();
    let cfg = FinetuneConfig {
        max_epochs: 1,
        ..ft_config()
    };
    finetune(&tiny(), Some(&pre), &data[..32], &data[32..], &cfg).unwrap();
    let other = ModelConfig { d: 12, d_a: 12, ..tiny() };
    assert!(finetune(&other, Some(&pre), &data[..32], &data[32..], &cfg).is_err());
}
