use emit::masking::{
    assign_mask_kinds, classify_positions, mask_statistics, plan_sequence, random_mask,
    rate_of_change, select_event_mask, MaskConfig, MaskKind, MaskRng, MaskVariant, Significance,
};
use emit::series::{FeatureVocab, LabeledSequence, Observation, TripletSequence};
use proptest::prelude::*;

fn rate_oracle(x: &[f64], t: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..x.len() {
        if i + 1 < x.len() && t[i + 1] != t[i] {
            out.push((x[i + 1] - x[i]) / (t[i + 1] - t[i]));
        } else {
            out.push(0.0);
        }
    }
    out
}

/// Strictly increasing times, feature 0, values alternating big/small jumps.
fn alternating_sequence(id: &str, n: usize) -> TripletSequence {
    let obs = (0..n)
        .map(|i| {
            let x = if (i / 2) % 2 == 0 { 0.0 } else { 10.0 };
            Observation::new(i as f64, x, 0)
        })
        .collect();
    TripletSequence::new(id, obs).unwrap()
}

#[test]
fn rate_examples() {
    assert_eq!(rate_of_change(&[1.0, 5.0], &[2.0, 2.0]).unwrap().values(), [0.0, 0.0]);
    assert_eq!(
        rate_of_change(&[4.0, 4.0, 4.0], &[0.0, 0.5, 7.0]).unwrap().values(),
        [0.0, 0.0, 0.0]
    );
    assert_eq!(rate_of_change(&[1.0, 3.0, 3.0], &[0.0, 1.0, 3.0]).unwrap().values(), [2.0, 0.0, 0.0]);
    assert!(rate_of_change(&[1.0], &[]).is_err());
    assert!(rate_of_change(&[], &[]).is_err());
}

#[test]
fn statistical_contract() {
    let seq = alternating_sequence("s", 200);
    let cfg = MaskConfig {
        theta: 1.0,
        alpha_mask: 0.2,
        ..MaskConfig::default()
    };
    let classes = classify_positions(&seq, cfg.theta);
    let s_count = classes.iter().filter(|c| **c == Significance::Significant).count();
    assert!(s_count > 50);
    let draws = 10_000usize.div_ceil(s_count);
    let (mut ms, mut ns, mut mu, mut nu) = (0usize, 0usize, 0usize, 0usize);
    for k in 0..draws {
        let m = select_event_mask(&seq, &cfg, &MaskRng::new(42, k as u64, seq.id()));
        for (c, m) in classes.iter().zip(m) {
            match c {
                Significance::Significant => {
                    ns += 1;
                    ms += usize::from(m);
                }
                Significance::Insignificant => {
                    nu += 1;
                    mu += usize::from(m);
                }
                Significance::Singleton => assert!(!m),
            }
        }
    }
    assert!(ns >= 10_000);
    let fs = ms as f64 / ns as f64;
    let fu = mu as f64 / nu as f64;
    assert!((fs - 0.8).abs() <= 0.02, "significant fraction {fs}");
    assert!((fu - 0.2).abs() <= 0.02, "insignificant fraction {fu}");
}

#[test]
fn alpha_half_is_uniform_half() {
    let seq = alternating_sequence("s", 500);
    for theta in [0.0, 1.0, 1e9] {
        let cfg = MaskConfig {
            theta,
            alpha_mask: 0.5,
            ..MaskConfig::default()
        };
        let mut masked = 0usize;
        let mut total = 0usize;
        for k in 0..20 {
            let m = select_event_mask(&seq, &cfg, &MaskRng::new(1, k, seq.id()));
            masked += m.iter().filter(|b| **b).count();
            total += m.len();
        }
        let f = masked as f64 / total as f64;
        assert!((f - 0.5).abs() <= 0.02, "theta {theta}: {f}");
    }
}

#[test]
fn composite_kind_shares() {
    let masked = vec![true; 30_000];
    let plan = assign_mask_kinds(&masked, MaskVariant::Composite, &MaskRng::new(5, 0, "x"));
    for kind in [MaskKind::Time, MaskKind::Value, MaskKind::Feature] {
        let share = plan.kinds().values().filter(|k| **k == kind).count() as f64 / 30_000.0;
        assert!((share - 1.0 / 3.0).abs() <= 0.02, "{kind:?}: {share}");
    }
}

#[test]
fn random_mask_rates() {
    let seq = alternating_sequence("r", 10_000);
    let rng = MaskRng::new(3, 0, "r");
    assert!(random_mask(&seq, 0.0, &rng).iter().all(|m| !m));
    assert!(random_mask(&seq, 1.0, &rng).iter().all(|m| *m));
    let f = random_mask(&seq, 0.3, &rng).iter().filter(|m| **m).count() as f64 / 10_000.0;
    assert!((0.28..=0.32).contains(&f), "{f}");
}

#[test]
fn fixed_variants_use_their_kind() {
    let seq = alternating_sequence("v", 100);
    for (variant, kind) in [
        (MaskVariant::TimeOnly, MaskKind::Time),
        (MaskVariant::ValueOnly, MaskKind::Value),
        (MaskVariant::FeatureOnly, MaskKind::Feature),
        (MaskVariant::Sum, MaskKind::Sum),
    ] {
        let cfg = MaskConfig {
            theta: 1.0,
            alpha_mask: 0.3,
            variant,
            ..MaskConfig::default()
        };
        let plan = plan_sequence(&seq, &cfg, 0).unwrap();
        assert!(plan.count() > 0);
        assert!(plan.kinds().values().all(|k| *k == kind));
        plan.validate().unwrap();
    }
}

#[test]
fn mask_statistics_expectation() {
    // 1000 positions in one feature: significant where the next value jumps.
    let n = 1000;
    let obs = (0..n)
        .map(|i| {
            // 100 significant positions: every tenth step is a jump of 50
            let x = 50.0 * ((i + 9) / 10) as f64;
            Observation::new(i as f64, x, 0)
        })
        .collect();
    let seq = TripletSequence::new("m", obs).unwrap();
    let data = vec![LabeledSequence::new(seq, None).unwrap()];
    let vocab = FeatureVocab::new(["a"]).unwrap();
    let cfg = MaskConfig {
        theta: 1.0,
        alpha_mask: 0.2,
        ..MaskConfig::default()
    };
    let st = mask_statistics(&data, &cfg, &vocab).unwrap();
    assert_eq!((st.significant, st.insignificant), (100, 900));
    assert!((st.expected_masked - 260.0).abs() < 1e-9);

    let inf = MaskConfig {
        theta: f64::INFINITY,
        ..cfg
    };
    assert_eq!(mask_statistics(&data, &inf, &vocab).unwrap().significant, 0);

    let random0 = MaskConfig {
        variant: MaskVariant::Random,
        random_rate: Some(0.0),
        ..cfg
    };
    assert_eq!(mask_statistics(&data, &random0, &vocab).unwrap().mask_rate, 0.0);
}

#[test]
fn config_validation() {
    for cfg in [
        MaskConfig { theta: -1.0, ..MaskConfig::default() },
        MaskConfig { alpha_mask: 1.5, ..MaskConfig::default() },
        MaskConfig { random_rate: Some(-0.1), ..MaskConfig::default() },
    ] {
        assert!(cfg.validate().is_err());
    }
}

fn arb_series() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..30).prop_flat_map(|n| {
        (
            prop::collection::vec(-100.0..100.0f64, n),
            prop::collection::vec(0.01..5.0f64, n),
        )
            .prop_map(|(x, gaps)| {
                let t = gaps
                    .iter()
                    .scan(0.0, |acc, g| {
                        *acc += g;
                        Some(*acc)
                    })
                    .collect();
                (x, t)
            })
    })
}

proptest! {
    #[test]
    fn rate_matches_oracle((x, t) in arb_series()) {
        let r = rate_of_change(&x, &t).unwrap();
        let o = rate_oracle(&x, &t);
        prop_assert_eq!(r.len(), x.len());
        prop_assert_eq!(r.values()[x.len() - 1], 0.0);
        for (a, b) in r.values().iter().zip(&o) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn per_feature_isolation(
        (a, b) in (arb_series(), arb_series()),
        shift in 0.0..3.0f64,
        theta in 0.0..20.0f64,
    ) {
        // Same per-feature series, two different interleavings.
        let build = |offset: f64| {
            let mut obs: Vec<Observation> = a.0.iter().zip(&a.1).map(|(x, t)| Observation::new(*t, *x, 0)).collect();
            obs.extend(b.0.iter().zip(&b.1).map(|(x, t)| Observation::new(*t + offset, *x, 1)));
            TripletSequence::new("p", obs).unwrap()
        };
        let key = |s: &TripletSequence| {
            let classes = classify_positions(s, theta);
            let mut per: [Vec<Significance>; 2] = [Vec::new(), Vec::new()];
            for (o, c) in s.observations().iter().zip(classes) {
                per[o.feature].push(c);
            }
            per
        };
        // Offsetting every time of one feature by a constant preserves its gaps.
        prop_assert_eq!(key(&build(0.0)), key(&build(shift)));
    }

    #[test]
    fn threshold_monotone((x, t) in arb_series(), lo in 0.0..5.0f64, extra in 0.0..5.0f64) {
        let obs = x.iter().zip(&t).map(|(x, t)| Observation::new(*t, *x, 0)).collect();
        let s = TripletSequence::new("m", obs).unwrap();
        let low = classify_positions(&s, lo);
        let high = classify_positions(&s, lo + extra);
        for (l, h) in low.iter().zip(&high) {
            if *h == Significance::Significant {
                prop_assert_eq!(*l, Significance::Significant);
            }
        }
    }

    #[test]
    fn plans_are_deterministic((x, t) in arb_series(), seed in any::<u64>(), alpha in 0.0..=1.0f64) {
        let obs = x.iter().zip(&t).map(|(x, t)| Observation::new(*t, *x, 0)).collect();
        let s = TripletSequence::new("d", obs).unwrap();
        let cfg = MaskConfig { theta: 1.0, alpha_mask: alpha, seed, ..MaskConfig::default() };
        let p1 = plan_sequence(&s, &cfg, 3).unwrap();
        prop_assert_eq!(&p1, &plan_sequence(&s, &cfg, 3).unwrap());
        prop_assert!(p1.validate().is_ok());
    }
}
