use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelConfig;
use crate::error::{EmitError, Result};
use crate::masking::{MaskKind, MaskPlan};
use crate::numerics::{sigmoid, ParamId, ParamStore, Real, Tape, Tensor, Var};
use crate::series::TripletSequence;

const PAD_LOGIT: Real = -1e9;

/// Padded batch of triplet sequences in row-major `[size, len]` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub len: usize,
    pub times: Vec<Real>,
    pub values: Vec<Real>,
    /// Feature index per position; padded slots hold 0.
    pub features: Vec<usize>,
    pub valid: Vec<bool>,
}

impl Batch {
    /// Pad to the longest sequence.
    pub fn new(seqs: &[&TripletSequence], config: &ModelConfig) -> Result<Self> {
        let len = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        Self::with_len(seqs, config, len)
    }

    /// Pad every sequence to exactly `len` positions.
    pub fn with_len(seqs: &[&TripletSequence], config: &ModelConfig, len: usize) -> Result<Self> {
        if seqs.is_empty() {
            return Err(EmitError::Empty("batch"));
        }
        let n = seqs.len() * len;
        let mut batch = Self {
            size: seqs.len(),
            len,
            times: vec![0.0; n],
            values: vec![0.0; n],
            features: vec![0; n],
            valid: vec![false; n],
        };
        for (b, seq) in seqs.iter().enumerate() {
            if seq.len() > len || seq.len() > config.max_len {
                return Err(EmitError::InvalidInput(format!(
                    "sequence '{}' has {} observations, limit {}",
                    seq.id(),
                    seq.len(),
                    len.min(config.max_len)
                )));
            }
            for (i, o) in seq.observations().iter().enumerate() {
                if o.feature >= config.num_features {
                    return Err(EmitError::FeatureOutOfRange {
                        index: o.feature,
                        size: config.num_features,
                    });
                }
                let p = b * len + i;
                batch.times[p] = o.time as Real;
                batch.values[p] = o.value as Real;
                batch.features[p] = o.feature;
                batch.valid[p] = true;
            }
        }
        Ok(batch)
    }

    pub fn positions(&self) -> usize {
        self.size * self.len
    }

    pub fn valid_len(&self, b: usize) -> usize {
        self.valid[b * self.len..(b + 1) * self.len]
            .iter()
            .filter(|v| **v)
            .count()
    }

    /// Flatten per-sequence plans into one kind slot per batch position.
    pub fn mask_kinds(&self, plans: &[&MaskPlan]) -> Result<Vec<Option<MaskKind>>> {
        if plans.len() != self.size {
            return Err(EmitError::InvalidInput(format!(
                "{} mask plans for a batch of {}",
                plans.len(),
                self.size
            )));
        }
        let mut kinds = vec![None; self.positions()];
        for (b, plan) in plans.iter().enumerate() {
            plan.validate()?;
            if plan.len() != self.valid_len(b) {
                return Err(EmitError::InvalidInput(format!(
                    "mask plan of length {} for a sequence of length {}",
                    plan.len(),
                    self.valid_len(b)
                )));
            }
            for (&i, &k) in plan.kinds() {
                kinds[b * self.len + i] = Some(k);
            }
        }
        Ok(kinds)
    }
}

/// The three per-position component embeddings, each `[size, len, d]`.
#[derive(Debug, Clone, Copy)]
pub struct Components {
    pub time: Var,
    pub value: Var,
    pub feature: Var,
    /// Raw input leaves, `[size, len, 1]`.
    pub time_input: Var,
    pub value_input: Var,
}

#[derive(Debug, Clone, Copy)]
struct ValueFfn {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln1_gamma: ParamId,
    ln1_beta: ParamId,
    ffn_w1: ParamId,
    ffn_b1: ParamId,
    ffn_w2: ParamId,
    ffn_b2: ParamId,
    ln2_gamma: ParamId,
    ln2_beta: ParamId,
}

/// Parameter names shared between pretraining and fine-tuning.
pub const TRANSFER_PREFIXES: [&str; 3] = ["embed.", "mask_token.", "encoder."];

/// Architecture plus parameter handles. Forward methods read parameters
/// from a caller-supplied [`ParamStore`] built by [`EmitNet::build`].
#[derive(Debug, Clone)]
pub struct EmitNet {
    config: ModelConfig,
    time_ffn: ValueFfn,
    value_ffn: ValueFfn,
    feature_emb: ParamId,
    mask_time: ParamId,
    mask_value: ParamId,
    mask_feature: ParamId,
    blocks: Vec<Block>,
    agg_w: ParamId,
    agg_b: ParamId,
    agg_u: ParamId,
    pred_w: ParamId,
    pred_b: ParamId,
    forecast_w: ParamId,
    forecast_b: ParamId,
}

struct Init<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl Init<'_> {
    fn uniform(&mut self, name: String, shape: &[usize], fan_in: usize) -> Result<ParamId> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| self.rng.random_range(-bound..bound) as Real)
            .collect();
        self.store.add(name, Tensor::new(shape.to_vec(), data)?)
    }

    fn normal(&mut self, name: String, shape: &[usize]) -> Result<ParamId> {
        let dist = Normal::new(0.0, 0.02).expect("valid std");
        let n = shape.iter().product();
        let data = (0..n).map(|_| dist.sample(&mut self.rng) as Real).collect();
        self.store.add(name, Tensor::new(shape.to_vec(), data)?)
    }

    fn fill(&mut self, name: String, shape: &[usize], value: Real) -> Result<ParamId> {
        self.store.add(name, Tensor::full(shape, value))
    }

    fn value_ffn(&mut self, prefix: &str, d: usize) -> Result<ValueFfn> {
        Ok(ValueFfn {
            w1: self.uniform(format!("{prefix}.w1"), &[1, d], 1)?,
            b1: self.fill(format!("{prefix}.b1"), &[d], 0.0)?,
            w2: self.uniform(format!("{prefix}.w2"), &[d, d], d)?,
            b2: self.fill(format!("{prefix}.b2"), &[d], 0.0)?,
        })
    }
}

impl EmitNet {
    /// Create all parameters in a fresh store, initialized from `seed`.
    pub fn build(config: ModelConfig, seed: u64) -> Result<(Self, ParamStore)> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut init = Init {
            store: &mut store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let (d, f, h, da) = (config.d, config.num_features, config.ffn_hidden, config.d_a);
        let time_ffn = init.value_ffn("embed.time", d)?;
        let value_ffn = init.value_ffn("embed.value", d)?;
        let feature_emb = init.normal("embed.feature".into(), &[f, d])?;
        let mask_time = init.normal("mask_token.time".into(), &[d])?;
        let mask_value = init.normal("mask_token.value".into(), &[d])?;
        let mask_feature = init.normal("mask_token.feature".into(), &[d])?;
        let mut blocks = Vec::with_capacity(config.blocks);
        for i in 0..config.blocks {
            let p = format!("encoder.{i}");
            blocks.push(Block {
                wq: init.uniform(format!("{p}.wq"), &[d, d], d)?,
                bq: init.fill(format!("{p}.bq"), &[d], 0.0)?,
                wk: init.uniform(format!("{p}.wk"), &[d, d], d)?,
                wv: init.uniform(format!("{p}.wv"), &[d, d], d)?,
                bv: init.fill(format!("{p}.bv"), &[d], 0.0)?,
                wo: init.uniform(format!("{p}.wo"), &[d, d], d)?,
                bo: init.fill(format!("{p}.bo"), &[d], 0.0)?,
                ln1_gamma: init.fill(format!("{p}.ln1.gamma"), &[d], 1.0)?,
                ln1_beta: init.fill(format!("{p}.ln1.beta"), &[d], 0.0)?,
                ffn_w1: init.uniform(format!("{p}.ffn.w1"), &[d, h], d)?,
                ffn_b1: init.fill(format!("{p}.ffn.b1"), &[h], 0.0)?,
                ffn_w2: init.uniform(format!("{p}.ffn.w2"), &[h, d], h)?,
                ffn_b2: init.fill(format!("{p}.ffn.b2"), &[d], 0.0)?,
                ln2_gamma: init.fill(format!("{p}.ln2.gamma"), &[d], 1.0)?,
                ln2_beta: init.fill(format!("{p}.ln2.beta"), &[d], 0.0)?,
            });
        }
        let net = Self {
            config,
            time_ffn,
            value_ffn,
            feature_emb,
            mask_time,
            mask_value,
            mask_feature,
            blocks,
            agg_w: init.uniform("agg.w".into(), &[d, da], d)?,
            agg_b: init.fill("agg.b".into(), &[da], 0.0)?,
            agg_u: init.uniform("agg.u".into(), &[da, 1], da)?,
            pred_w: init.uniform("pred.w".into(), &[d, 1], d)?,
            pred_b: init.fill("pred.b".into(), &[1], 0.0)?,
            forecast_w: init.uniform("forecast.w".into(), &[d, f], d)?,
            forecast_b: init.fill("forecast.b".into(), &[f], 0.0)?,
        };
        Ok((net, store))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn ffn_1d(&self, tape: &mut Tape, store: &ParamStore, input: Var, p: ValueFfn) -> Result<Var> {
        let w1 = tape.param(store, p.w1);
        let b1 = tape.param(store, p.b1);
        let w2 = tape.param(store, p.w2);
        let b2 = tape.param(store, p.b2);
        let h = tape.matmul(input, w1)?;
        let h = tape.add_row(h, b1)?;
        let h = tape.tanh(h);
        let h = tape.matmul(h, w2)?;
        tape.add_row(h, b2)
    }

    /// Time, value, and feature embeddings for every position.
    pub fn embed(&self, tape: &mut Tape, store: &ParamStore, batch: &Batch) -> Result<Components> {
        let shape = [batch.size, batch.len, 1];
        let time_input = tape.input(Tensor::new(shape.to_vec(), batch.times.clone())?);
        let value_input = tape.input(Tensor::new(shape.to_vec(), batch.values.clone())?);
        let time = self.ffn_1d(tape, store, time_input, self.time_ffn)?;
        let value = self.ffn_1d(tape, store, value_input, self.value_ffn)?;
        if let Some(&bad) = batch.features.iter().find(|&&f| f >= self.config.num_features) {
            return Err(EmitError::FeatureOutOfRange {
                index: bad,
                size: self.config.num_features,
            });
        }
        let table = tape.param(store, self.feature_emb);
        let rows = tape.gather_rows(table, &batch.features)?;
        let feature = tape.reshape(rows, &[batch.size, batch.len, self.config.d])?;
        Ok(Components {
            time,
            value,
            feature,
            time_input,
            value_input,
        })
    }

    /// Combined embedding `e_t + e_x + e_f`, with mask tokens substituted
    /// where `kinds` says so. Replaced components are dropped from the graph.
    pub fn combine(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        c: &Components,
        kinds: Option<&[Option<MaskKind>]>,
    ) -> Result<Var> {
        let shape = tape.shape(c.time).to_vec();
        let n = shape[0] * shape[1];
        let Some(kinds) = kinds.filter(|k| k.iter().any(Option::is_some)) else {
            let s = tape.add(c.time, c.value)?;
            return tape.add(s, c.feature);
        };
        if kinds.len() != n {
            return Err(EmitError::ShapeMismatch {
                op: "combine",
                left: shape,
                right: vec![kinds.len()],
            });
        }
        let d = self.config.d;
        let parts = [
            (c.time, self.mask_time, MaskKind::Time),
            (c.value, self.mask_value, MaskKind::Value),
            (c.feature, self.mask_feature, MaskKind::Feature),
        ];
        let mut total: Option<Var> = None;
        for (component, token, kind) in parts {
            let rows = tape.reshape(component, &[n, d])?;
            let token = tape.param(store, token);
            let token = tape.reshape(token, &[1, d])?;
            let table = tape.concat(&[rows, token], 0)?;
            let index: Vec<usize> = kinds
                .iter()
                .enumerate()
                .map(|(i, k)| match k {
                    Some(k) if *k == kind || *k == MaskKind::Sum => n,
                    _ => i,
                })
                .collect();
            let picked = tape.gather_rows(table, &index)?;
            total = Some(match total {
                None => picked,
                Some(t) => tape.add(t, picked)?,
            });
        }
        tape.reshape(total.expect("three components"), &shape)
    }

    fn head_split_index(&self, size: usize, len: usize) -> Vec<usize> {
        let (h, dh, d) = (self.config.heads, self.config.head_dim(), self.config.d);
        let mut index = Vec::with_capacity(size * len * d);
        for b in 0..size {
            for hh in 0..h {
                for l in 0..len {
                    for j in 0..dh {
                        index.push((b * len + l) * d + hh * dh + j);
                    }
                }
            }
        }
        index
    }

    fn head_merge_index(&self, size: usize, len: usize) -> Vec<usize> {
        let (h, dh) = (self.config.heads, self.config.head_dim());
        let mut index = Vec::with_capacity(size * len * h * dh);
        for b in 0..size {
            for l in 0..len {
                for hh in 0..h {
                    for j in 0..dh {
                        index.push(((b * h + hh) * len + l) * dh + j);
                    }
                }
            }
        }
        index
    }

    fn linear(&self, tape: &mut Tape, store: &ParamStore, x: Var, w: ParamId, b: Option<ParamId>) -> Result<Var> {
        let w = tape.param(store, w);
        let y = tape.matmul(x, w)?;
        match b {
            Some(b) => {
                let b = tape.param(store, b);
                tape.add_row(y, b)
            }
            None => Ok(y),
        }
    }

    fn norm(&self, tape: &mut Tape, store: &ParamStore, x: Var, gamma: ParamId, beta: ParamId) -> Result<Var> {
        let y = tape.layer_norm(x);
        let g = tape.param(store, gamma);
        let y = tape.mul_row(y, g)?;
        let b = tape.param(store, beta);
        tape.add_row(y, b)
    }

    #[allow(clippy::too_many_arguments)]
    fn block(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        blk: &Block,
        key_pad: &[bool],
        split: &[usize],
        merge: &[usize],
        mut rng: Option<&mut (dyn RngCore + '_)>,
    ) -> Result<Var> {
        let shape = tape.shape(x).to_vec();
        let (size, len, d) = (shape[0], shape[1], shape[2]);
        let (h, dh) = (self.config.heads, self.config.head_dim());
        let rate = self.config.dropout as Real;
        let heads_shape = vec![size * h, len, dh];

        let q = self.linear(tape, store, x, blk.wq, Some(blk.bq))?;
        let k = self.linear(tape, store, x, blk.wk, None)?;
        let v = self.linear(tape, store, x, blk.wv, Some(blk.bv))?;
        let q = tape.gather(q, split.to_vec(), heads_shape.clone())?;
        let k = tape.gather(k, split.to_vec(), heads_shape.clone())?;
        let v = tape.gather(v, split.to_vec(), heads_shape)?;
        let scores = tape.batch_matmul(q, k, true)?;
        let scores = tape.scale(scores, 1.0 / (dh as Real).sqrt());
        let scores = tape.masked_fill(scores, key_pad.to_vec(), PAD_LOGIT)?;
        let attn = tape.softmax(scores);
        let ctx = tape.batch_matmul(attn, v, false)?;
        let ctx = tape.gather(ctx, merge.to_vec(), vec![size, len, d])?;
        let out = self.linear(tape, store, ctx, blk.wo, Some(blk.bo))?;
        let out = tape.dropout(out, rate, rng.as_deref_mut())?;
        let x = tape.add(x, out)?;
        let x = self.norm(tape, store, x, blk.ln1_gamma, blk.ln1_beta)?;

        let f = self.linear(tape, store, x, blk.ffn_w1, Some(blk.ffn_b1))?;
        let f = tape.gelu(f);
        let f = self.linear(tape, store, f, blk.ffn_w2, Some(blk.ffn_b2))?;
        #[allow(clippy::needless_option_as_deref)]
        let f = tape.dropout(f, rate, rng.as_deref_mut())?;
        let x = tape.add(x, f)?;
        self.norm(tape, store, x, blk.ln2_gamma, blk.ln2_beta)
    }

    /// Run the encoder blocks over `[size, len, d]` embeddings. Padded keys
    /// receive no attention. `rng = None` disables dropout.
    pub fn encode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        valid: &[bool],
        mut rng: Option<&mut (dyn RngCore + '_)>,
    ) -> Result<Var> {
        let shape = tape.shape(x).to_vec();
        if shape.len() != 3 || shape[2] != self.config.d || valid.len() != shape[0] * shape[1] {
            return Err(EmitError::ShapeMismatch {
                op: "encode",
                left: shape,
                right: vec![valid.len(), self.config.d],
            });
        }
        if self.blocks.is_empty() {
            return Ok(x);
        }
        let (size, len) = (shape[0], shape[1]);
        let h = self.config.heads;
        // One flag per attention score: true where the key is padding.
        let mut key_pad = Vec::with_capacity(size * h * len * len);
        for b in 0..size {
            let row = &valid[b * len..(b + 1) * len];
            for _ in 0..h * len {
                key_pad.extend(row.iter().map(|v| !v));
            }
        }
        let split = self.head_split_index(size, len);
        let merge = self.head_merge_index(size, len);
        let mut x = x;
        for blk in &self.blocks {
            x = self.block(tape, store, x, blk, &key_pad, &split, &merge, rng.as_deref_mut())?;
        }
        Ok(x)
    }

    /// Attention pooling over valid positions: returns `e_T [size, d]` and weights `α [size, len]`.
    pub fn aggregate(&self, tape: &mut Tape, store: &ParamStore, hidden: Var, valid: &[bool]) -> Result<(Var, Var)> {
        let shape = tape.shape(hidden).to_vec();
        let (size, len, d) = (shape[0], shape[1], shape[2]);
        if valid.len() != size * len {
            return Err(EmitError::ShapeMismatch {
                op: "aggregate",
                left: shape,
                right: vec![valid.len()],
            });
        }
        if (0..size).any(|b| !valid[b * len..(b + 1) * len].iter().any(|v| *v)) {
            return Err(EmitError::InvalidInput("sequence with no valid positions".into()));
        }
        let a = self.linear(tape, store, hidden, self.agg_w, Some(self.agg_b))?;
        let a = tape.tanh(a);
        let a = self.linear(tape, store, a, self.agg_u, None)?;
        let a = tape.reshape(a, &[size, len])?;
        let a = tape.masked_fill(a, valid.iter().map(|v| !v).collect(), PAD_LOGIT)?;
        let alpha = tape.softmax(a);
        let weights = tape.reshape(alpha, &[size, 1, len])?;
        let pooled = tape.batch_matmul(weights, hidden, false)?;
        Ok((tape.reshape(pooled, &[size, d])?, alpha))
    }

    /// Prediction logits `w_oᵀ e_T + b_o`, shape `[size]`.
    pub fn predict_logits(&self, tape: &mut Tape, store: &ParamStore, pooled: Var) -> Result<Var> {
        let size = tape.shape(pooled)[0];
        let z = self.linear(tape, store, pooled, self.pred_w, Some(self.pred_b))?;
        tape.reshape(z, &[size])
    }

    /// Forecast head applied to the listed flat positions of `hidden`: `[rows, F]`.
    pub fn forecast(&self, tape: &mut Tape, store: &ParamStore, hidden: Var, positions: &[usize]) -> Result<Var> {
        let d = self.config.d;
        let n = tape.value(hidden).len() / d;
        let flat = tape.reshape(hidden, &[n, d])?;
        let rows = tape.gather_rows(flat, positions)?;
        self.linear(tape, store, rows, self.forecast_w, Some(self.forecast_b))
    }

    /// Embed (optionally masked) and encode.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        batch: &Batch,
        kinds: Option<&[Option<MaskKind>]>,
        rng: Option<&mut (dyn RngCore + '_)>,
    ) -> Result<Forward> {
        let components = self.embed(tape, store, batch)?;
        let input = self.combine(tape, store, &components, kinds)?;
        let hidden = self.encode(tape, store, input, &batch.valid, rng)?;
        Ok(Forward {
            components,
            input,
            hidden,
        })
    }

    /// Probability of the positive class per sequence, without dropout.
    pub fn predict_proba(&self, store: &ParamStore, batch: &Batch) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, store, batch, None, None)?;
        let (pooled, _) = self.aggregate(&mut tape, store, f.hidden, &batch.valid)?;
        let z = self.predict_logits(&mut tape, store, pooled)?;
        Ok(tape.value(z).data().iter().map(|z| sigmoid(*z) as f64).collect())
    }
}

/// Intermediate handles of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    pub components: Components,
    /// Encoder input after mask substitution.
    pub input: Var,
    pub hidden: Var,
}
