//! Generate the synthetic event-labeled corpus, split it, z-score it, and
//! write it as JSON lines.
//!
//! cargo run --release --example synthetic_data -- /tmp/synthetic.jsonl

use emit::series::{fit_normalization, generate_synthetic, split, write_dataset, SplitSpec, SynthConfig};

fn main() -> emit::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synthetic.jsonl".into());
    let data = generate_synthetic(&SynthConfig::default(), 0)?;
    let positives = data.sequences.iter().filter(|s| s.label == Some(1)).count();
    let observations: usize = data.sequences.iter().map(|s| s.sequence.len()).sum();
    println!(
        "{} sequences, {} positive, {:.1} observations per sequence, features {:?}",
        data.sequences.len(),
        positives,
        observations as f64 / data.sequences.len() as f64,
        data.vocab.names()
    );
    println!("injected spikes have |rate of change| >= {}", data.spike_floor);

    let parts = split(&data.sequences, &SplitSpec::default())?;
    let stats = fit_normalization(&parts.train, &data.vocab)?;
    for (i, name) in data.vocab.names().iter().enumerate() {
        let s = stats.feature(i).expect("fitted feature");
        println!("  {name}: mean {:.3} std {:.3}", s.mean, s.std);
    }
    write_dataset(&out, &data.sequences, &data.vocab)?;
    println!("wrote {out}");
    Ok(())
}
