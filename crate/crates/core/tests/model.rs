#![cfg(not(feature = "f32"))]

use std::collections::BTreeMap;

use emit::masking::{MaskKind, MaskPlan};
use emit::model::{Batch, Checkpoint, EmitModel, ModelConfig};
use emit::numerics::{Tape, Tensor};
use emit::series::{Observation, TripletSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny(blocks: usize) -> ModelConfig {
    ModelConfig {
        d: 8,
        blocks,
        heads: 2,
        d_a: 6,
        ffn_hidden: 16,
        dropout: 0.0,
        ..ModelConfig::new(3)
    }
}

fn random_seq(rng: &mut ChaCha8Rng, id: &str, n: usize) -> TripletSequence {
    let obs = (0..n)
        .map(|_| {
            Observation::new(
                rng.random_range(0.0..5.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(0..3),
            )
        })
        .collect();
    TripletSequence::new(id, obs).unwrap()
}

fn rows(t: &Tensor, d: usize) -> Vec<&[f64]> {
    t.data().chunks(d).collect()
}

#[test]
fn shape_chain() {
    let model = EmitModel::new(tiny(2), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let seqs = [random_seq(&mut rng, "a", 5), random_seq(&mut rng, "b", 3)];
    let refs: Vec<&TripletSequence> = seqs.iter().collect();
    let batch = Batch::new(&refs, model.config()).unwrap();
    let (net, store) = (&model.net, &model.store);
    let mut tape = Tape::new();
    let f = net.forward(&mut tape, store, &batch, None, None).unwrap();
    assert_eq!(tape.shape(f.input), [2, 5, 8]);
    assert_eq!(tape.shape(f.hidden), [2, 5, 8]);
    let (pooled, alpha) = net.aggregate(&mut tape, store, f.hidden, &batch.valid).unwrap();
    assert_eq!(tape.shape(pooled), [2, 8]);
    assert_eq!(tape.shape(alpha), [2, 5]);
    let z = net.predict_logits(&mut tape, store, pooled).unwrap();
    assert_eq!(tape.shape(z), [2]);
    let fc = net.forecast(&mut tape, store, f.hidden, &[0, 2, 7]).unwrap();
    assert_eq!(tape.shape(fc), [3, 3]);
}

#[test]
fn embedding_is_sum_and_components_independent() {
    let model = EmitModel::new(tiny(1), 2).unwrap();
    let s = TripletSequence::new(
        "a",
        vec![
            Observation::new(1.0, 0.5, 1),
            Observation::new(1.0, 0.5, 1),
            Observation::new(2.0, -1.0, 0),
        ],
    )
    .unwrap();
    let batch = Batch::new(&[&s], model.config()).unwrap();
    let mut tape = Tape::new();
    let c = model.net.embed(&mut tape, &model.store, &batch).unwrap();
    let e = model.net.combine(&mut tape, &model.store, &c, None).unwrap();
    let e_rows = rows(tape.value(e), 8);
    assert_eq!(e_rows[0], e_rows[1]);
    for i in 0..3 * 8 {
        let sum = tape.value(c.time).data()[i] + tape.value(c.value).data()[i] + tape.value(c.feature).data()[i];
        assert_eq!(tape.value(e).data()[i], sum);
    }

    let mut s2_obs = s.observations().to_vec();
    s2_obs[2].value = 3.0;
    let s2 = TripletSequence::new("a", s2_obs).unwrap();
    let batch2 = Batch::new(&[&s2], model.config()).unwrap();
    let mut tape2 = Tape::new();
    let c2 = model.net.embed(&mut tape2, &model.store, &batch2).unwrap();
    assert_eq!(tape.value(c.time), tape2.value(c2.time));
    assert_eq!(tape.value(c.feature), tape2.value(c2.feature));
    assert_ne!(tape.value(c.value), tape2.value(c2.value));
}

#[test]
fn feature_out_of_range_rejected() {
    let model = EmitModel::new(tiny(1), 2).unwrap();
    let s = TripletSequence::new("a", vec![Observation::new(0.0, 0.0, 7)]).unwrap();
    assert!(Batch::new(&[&s], model.config()).is_err());
}

#[test]
fn mask_token_substitution() {
    let mut model = EmitModel::new(tiny(1), 3).unwrap();
    for name in ["mask_token.time", "mask_token.value", "mask_token.feature"] {
        model.store.set_value(name, Tensor::zeros(&[8])).unwrap();
    }
    let s = TripletSequence::new("a", vec![Observation::new(0.0, 1.0, 0), Observation::new(1.0, 2.0, 1)]).unwrap();
    let batch = Batch::new(&[&s], model.config()).unwrap();
    let plan = MaskPlan::uniform(2, &[1], MaskKind::Value).unwrap();
    let kinds = batch.mask_kinds(&[&plan]).unwrap();
    let mut tape = Tape::new();
    let c = model.net.embed(&mut tape, &model.store, &batch).unwrap();
    let plain = model.net.combine(&mut tape, &model.store, &c, None).unwrap();
    let empty = MaskPlan::empty(2);
    let none = batch.mask_kinds(&[&empty]).unwrap();
    let same = model.net.combine(&mut tape, &model.store, &c, Some(&none)).unwrap();
    assert_eq!(tape.value(plain), tape.value(same));

    let masked = model.net.combine(&mut tape, &model.store, &c, Some(&kinds)).unwrap();
    let m = tape.value(masked).data();
    for k in 0..8 {
        assert_eq!(m[k], tape.value(plain).data()[k]);
        let expect = tape.value(c.time).data()[8 + k] + tape.value(c.feature).data()[8 + k];
        assert_eq!(m[8 + k], expect);
    }

    let sum_plan = MaskPlan::uniform(2, &[0], MaskKind::Sum).unwrap();
    let sum_kinds = batch.mask_kinds(&[&sum_plan]).unwrap();
    let all = model.net.combine(&mut tape, &model.store, &c, Some(&sum_kinds)).unwrap();
    assert!(tape.value(all).data()[..8].iter().all(|v| *v == 0.0));
}

#[test]
fn value_masked_input_gets_exact_zero_gradient() {
    let model = EmitModel::new(tiny(2), 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let s = random_seq(&mut rng, "a", 6);
    let batch = Batch::new(&[&s], model.config()).unwrap();
    let plan = MaskPlan::uniform(6, &[2], MaskKind::Value).unwrap();
    let kinds = batch.mask_kinds(&[&plan]).unwrap();
    let mut tape = Tape::new();
    let f = model.net.forward(&mut tape, &model.store, &batch, Some(&kinds), None).unwrap();
    let (pooled, _) = model.net.aggregate(&mut tape, &model.store, f.hidden, &batch.valid).unwrap();
    let z = model.net.predict_logits(&mut tape, &model.store, pooled).unwrap();
    let loss = tape.bce_with_logits(z, vec![1.0]).unwrap();
    let grads = tape.backward(loss).unwrap();
    let gx = grads.get(f.components.value_input).unwrap().data();
    assert_eq!(gx[2], 0.0);
    assert!(gx.iter().enumerate().any(|(i, g)| i != 2 && *g != 0.0));
}

#[test]
fn padding_invariance() {
    let model = EmitModel::new(tiny(2), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = random_seq(&mut rng, "a", 5);
    let run = |len: usize| {
        let batch = Batch::with_len(&[&s], model.config(), len).unwrap();
        let mut tape = Tape::new();
        let f = model.net.forward(&mut tape, &model.store, &batch, None, None).unwrap();
        tape.value(f.hidden).data()[..5 * 8].to_vec()
    };
    let base = run(5);
    for len in [6, 9, 20] {
        let padded = run(len);
        let diff = base.iter().zip(&padded).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-6, "len {len}: {diff}");
    }
}

#[test]
fn permutation_equivariance() {
    let model = EmitModel::new(tiny(2), 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = random_seq(&mut rng, "a", 6);
    let batch = Batch::new(&[&s], model.config()).unwrap();
    let mut swapped = batch.clone();
    for v in [&mut swapped.times, &mut swapped.values] {
        v.swap(1, 4);
    }
    swapped.features.swap(1, 4);
    let hidden = |b: &Batch| {
        let mut tape = Tape::new();
        let f = model.net.forward(&mut tape, &model.store, b, None, None).unwrap();
        tape.value(f.hidden).clone()
    };
    let (h, hs) = (hidden(&batch), hidden(&swapped));
    let (r, rs) = (rows(&h, 8), rows(&hs, 8));
    for (i, j) in [(0, 0), (1, 4), (4, 1), (5, 5)] {
        for (a, b) in r[i].iter().zip(rs[j]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_blocks_is_identity() {
    let model = EmitModel::new(tiny(0), 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = random_seq(&mut rng, "a", 4);
    let batch = Batch::new(&[&s], model.config()).unwrap();
    let mut tape = Tape::new();
    let f = model.net.forward(&mut tape, &model.store, &batch, None, None).unwrap();
    assert_eq!(tape.value(f.input), tape.value(f.hidden));
}

#[test]
fn aggregation_weights() {
    let model = EmitModel::new(tiny(1), 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let seqs = [random_seq(&mut rng, "a", 6), random_seq(&mut rng, "b", 2), random_seq(&mut rng, "c", 1)];
    let refs: Vec<&TripletSequence> = seqs.iter().collect();
    let batch = Batch::new(&refs, model.config()).unwrap();
    let mut tape = Tape::new();
    let f = model.net.forward(&mut tape, &model.store, &batch, None, None).unwrap();
    let (pooled, alpha) = model.net.aggregate(&mut tape, &model.store, f.hidden, &batch.valid).unwrap();
    for (b, row) in tape.value(alpha).data().chunks(6).enumerate() {
        let valid = &batch.valid[b * 6..(b + 1) * 6];
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, v) in row.iter().zip(valid) {
            assert!(*a >= 0.0);
            if !v {
                assert_eq!(*a, 0.0);
            }
        }
    }
    // A single valid position pools to its own embedding.
    let single = &tape.value(alpha).data()[12..18];
    assert_eq!(single[0], 1.0);
    let h = tape.value(f.hidden).data()[12 * 8..13 * 8].to_vec();
    assert_eq!(&tape.value(pooled).data()[16..24], &h[..]);
}

#[test]
fn identical_hidden_states_pool_uniformly() {
    let model = EmitModel::new(tiny(1), 8).unwrap();
    let mut tape = Tape::new();
    let row: Vec<f64> = (0..8).map(|i| i as f64 * 0.1).collect();
    let data: Vec<f64> = row.iter().cycle().take(4 * 8).copied().collect();
    let h = tape.constant(Tensor::new(vec![1, 4, 8], data).unwrap());
    let (pooled, alpha) = model.net.aggregate(&mut tape, &model.store, h, &[true; 4]).unwrap();
    for a in tape.value(alpha).data() {
        assert!((a - 0.25).abs() < 1e-15);
    }
    for (p, r) in tape.value(pooled).data().iter().zip(&row) {
        assert!((p - r).abs() < 1e-15);
    }
    assert!(model.net.aggregate(&mut tape, &model.store, h, &[false; 4]).is_err());
}

#[test]
fn prediction_head_contract() {
    let mut model = EmitModel::new(tiny(1), 10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = random_seq(&mut rng, "a", 3);
    let batch = Batch::new(&[&s], model.config()).unwrap();
    model.store.set_value("pred.w", Tensor::zeros(&[8, 1])).unwrap();
    assert_eq!(model.net.predict_proba(&model.store, &batch).unwrap(), [0.5]);
    let mut last = 0.5;
    for b in [0.5, 2.0, 40.0] {
        model.store.set_value("pred.b", Tensor::from_vec(vec![b])).unwrap();
        let p = model.net.predict_proba(&model.store, &batch).unwrap()[0];
        assert!(p > last && p <= 1.0);
        last = p;
    }
    assert!(last > 1.0 - 1e-12);
}

#[test]
fn forecast_head_zero_weights() {
    let mut model = EmitModel::new(ModelConfig { num_features: 1, ..tiny(1) }, 11).unwrap();
    model.store.set_value("forecast.w", Tensor::zeros(&[8, 1])).unwrap();
    let mut tape = Tape::new();
    let h = tape.constant(Tensor::full(&[1, 3, 8], 0.3));
    let out = model.net.forecast(&mut tape, &model.store, h, &[0, 2]).unwrap();
    assert_eq!(tape.shape(out), [2, 1]);
    assert!(tape.value(out).data().iter().all(|v| *v == 0.0));
}

#[test]
fn eval_mode_is_bitwise_deterministic() {
    let model = EmitModel::new(ModelConfig { dropout: 0.3, ..tiny(2) }, 12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let seqs: Vec<TripletSequence> = (0..4).map(|i| random_seq(&mut rng, &format!("s{i}"), 2 + i)).collect();
    let refs: Vec<&TripletSequence> = seqs.iter().collect();
    let a = model.predict(&refs, 3).unwrap();
    let b = model.predict(&refs, 3).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn checkpoint_file_round_trip() {
    let model = EmitModel::new(tiny(2), 13).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    Checkpoint::from_model(&model).save(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["format_version", "model_config", "parameters"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    let back = Checkpoint::load(&path).unwrap().to_model().unwrap();
    let names: BTreeMap<_, _> = model.store.iter().map(|p| (p.name.clone(), p.value.clone())).collect();
    for p in back.store.iter() {
        assert_eq!(&p.value, &names[&p.name]);
    }
}

#[test]
fn transfer_copies_encoder_only() {
    let source = EmitModel::new(tiny(1), 20).unwrap();
    let mut target = EmitModel::new(tiny(1), 21).unwrap();
    let copied = target.transfer_from(&source).unwrap();
    assert!(copied > 0);
    let get = |m: &EmitModel, n: &str| m.store.by_name(n).unwrap().value.clone();
    assert_eq!(get(&target, "encoder.0.wq"), get(&source, "encoder.0.wq"));
    assert_eq!(get(&target, "mask_token.value"), get(&source, "mask_token.value"));
    assert_ne!(get(&target, "agg.w"), get(&source, "agg.w"));
    assert_ne!(get(&target, "pred.w"), get(&source, "pred.w"));
}
