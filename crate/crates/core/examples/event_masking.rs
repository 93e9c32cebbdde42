//! Rate of change, significance classes, and event-based mask plans for one
//! sequence, followed by corpus-level mask statistics.
//!
//! cargo run --release --example event_masking

use emit::masking::{
    classify_positions, mask_statistics, plan_sequence, position_rates, MaskConfig, MaskVariant,
};
use emit::series::{fit_normalization, generate_synthetic, SynthConfig};

fn main() -> emit::Result<()> {
    let data = generate_synthetic(&SynthConfig::default(), 0)?;
    let stats = fit_normalization(&data.sequences, &data.vocab)?;
    let normalized = stats.normalize_all(&data.sequences)?;

    let seq = &normalized[0].sequence;
    let cfg = MaskConfig {
        theta: 1.0,
        ..MaskConfig::default()
    };
    let rates = position_rates(seq);
    let classes = classify_positions(seq, cfg.theta);
    let plan = plan_sequence(seq, &cfg, 1)?;
    println!("sequence {} (label {:?})", seq.id(), normalized[0].label);
    for (i, o) in seq.observations().iter().enumerate().take(12) {
        let kind = plan.kind(i).map_or("-".to_string(), |k| format!("{k:?}"));
        println!(
            "  t={:>6.3} feature={} value={:>7.3} rate={:>8} {:?} mask={}",
            o.time,
            o.feature,
            o.value,
            rates[i].map_or("-".to_string(), |r| format!("{r:.3}")),
            classes[i],
            kind
        );
    }

    for variant in MaskVariant::ALL {
        let cfg = MaskConfig { variant, ..cfg };
        let s = mask_statistics(&normalized, &cfg, &data.vocab)?;
        println!(
            "{variant:<13} masked {:>6} of {} positions (rate {:.3})",
            s.masked, s.positions, s.mask_rate
        );
    }
    Ok(())
}
