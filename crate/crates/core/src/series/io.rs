use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeatureVocab, LabeledSequence, Observation, TripletSequence};
use crate::error::{io_err, EmitError, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLine {
    id: String,
    obs: Vec<(f64, f64, String)>,
    #[serde(default)]
    label: Option<u8>,
}

#[derive(Serialize)]
struct OutLine<'a> {
    id: &'a str,
    obs: Vec<(f64, f64, &'a str)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<u8>,
}

/// Read a JSON-lines dataset from `path`.
///
/// When `vocab` is `None` the vocabulary is the sorted set of feature names in
/// the file; otherwise every feature must already be in `vocab`.
pub fn load_dataset(
    path: impl AsRef<Path>,
    vocab: Option<&FeatureVocab>,
) -> Result<(Vec<LabeledSequence>, FeatureVocab)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    read_dataset(BufReader::new(file), path, vocab)
}

/// Like [`load_dataset`] over any reader; `source` only labels error messages.
pub fn read_dataset<R: BufRead>(
    reader: R,
    source: impl AsRef<Path>,
    vocab: Option<&FeatureVocab>,
) -> Result<(Vec<LabeledSequence>, FeatureVocab)> {
    let source = source.as_ref();
    let parse_err = |line: usize, message: String| EmitError::Parse {
        path: source.to_path_buf(),
        line,
        message,
    };

    let mut raw = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(io_err(source))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RawLine =
            serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        raw.push((lineno, parsed));
    }

    let vocab = match vocab {
        Some(v) => v.clone(),
        None => {
            let names: BTreeSet<&str> = raw
                .iter()
                .flat_map(|(_, r)| r.obs.iter().map(|o| o.2.as_str()))
                .collect();
            FeatureVocab::new(names)?
        }
    };

    let mut out = Vec::with_capacity(raw.len());
    for (lineno, r) in raw {
        let mut obs = Vec::with_capacity(r.obs.len());
        for (t, x, f) in r.obs {
            if t < 0.0 {
                return Err(parse_err(lineno, format!("negative time {t}")));
            }
            let feature = vocab
                .get(&f)
                .ok_or_else(|| parse_err(lineno, format!("unknown feature '{f}'")))?;
            obs.push(Observation::new(t, x, feature));
        }
        let seq = TripletSequence::new(r.id, obs).map_err(|e| parse_err(lineno, e.to_string()))?;
        out.push(LabeledSequence::new(seq, r.label).map_err(|e| parse_err(lineno, e.to_string()))?);
    }
    Ok((out, vocab))
}

/// Write sequences as JSON lines using raw (hour) timestamps.
pub fn write_dataset(
    path: impl AsRef<Path>,
    data: &[LabeledSequence],
    vocab: &FeatureVocab,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for item in data {
        let seq = &item.sequence;
        let obs = seq
            .observations()
            .iter()
            .zip(seq.raw_times())
            .map(|(o, t)| {
                let name = vocab.name(o.feature).ok_or(EmitError::FeatureOutOfRange {
                    index: o.feature,
                    size: vocab.len(),
                })?;
                Ok((*t, o.value, name))
            })
            .collect::<Result<Vec<_>>>()?;
        let line = OutLine {
            id: seq.id(),
            obs,
            label: item.label,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}
