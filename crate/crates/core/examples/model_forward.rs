//! Build a model, run a forward pass over a padded batch, and inspect the
//! attention-pooling weights and predicted probabilities.
//!
//! cargo run --release --example model_forward

use emit::model::{Batch, EmitModel, ModelConfig};
use emit::numerics::{Real, Tape};
use emit::series::{fit_normalization, generate_synthetic, SynthConfig, TripletSequence};

fn main() -> emit::Result<()> {
    let synth = SynthConfig {
        n_sequences: 3,
        ..SynthConfig::default()
    };
    let data = generate_synthetic(&synth, 2)?;
    let stats = fit_normalization(&data.sequences, &data.vocab)?;
    let normalized = stats.normalize_all(&data.sequences)?;
    let seqs: Vec<&TripletSequence> = normalized.iter().map(|s| &s.sequence).collect();

    let model = EmitModel::new(ModelConfig::new(data.vocab.len()), 0)?;
    let params: usize = model.store.num_scalars();
    println!("{} parameter tensors, {params} scalars", model.store.len());

    let batch = Batch::new(&seqs, model.config())?;
    let mut tape = Tape::new();
    let fwd = model.net.forward(&mut tape, &model.store, &batch, None, None)?;
    let lengths: Vec<usize> = (0..batch.size).map(|b| batch.valid_len(b)).collect();
    println!("batch {} x {} (valid lengths {lengths:?})", batch.size, batch.len);
    println!("encoder output shape {:?}", tape.shape(fwd.hidden));
    let (_, alpha) = model.net.aggregate(&mut tape, &model.store, fwd.hidden, &batch.valid)?;
    let alpha = tape.value(alpha);
    for (b, len) in lengths.iter().enumerate() {
        let row = &alpha.data()[b * batch.len..(b + 1) * batch.len];
        let top = row.iter().cloned().fold(0.0, Real::max);
        let pad: Real = row[*len..].iter().sum();
        println!("  sequence {b}: largest pooling weight {top:.4}, weight on padding {pad:.1e}");
    }
    println!("probabilities {:?}", model.predict(&seqs, 8)?);
    Ok(())
}
