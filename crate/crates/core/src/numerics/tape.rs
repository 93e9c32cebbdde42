//! Dynamic reverse-mode tape.
//!
//! Every primitive appends a node holding its forward value; [`Tape::backward`]
//! walks the nodes in reverse execution order and sums the contributions
//! reaching each input.

use std::collections::HashMap;

use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::tensor::{gemm, Tensor};
use super::Real;
use crate::error::{EmitError, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param,
    Input,
    MatMul { a: Var, w: Var },
    BatchMatMul { a: Var, b: Var, trans_b: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow { a: Var, row: Var },
    MulRow { a: Var, row: Var },
    MulConst { a: Var, factor: Vec<Real> },
    MaskedFill { a: Var, mask: Vec<bool> },
    Scale { a: Var, factor: Real },
    Tanh(Var),
    Sigmoid(Var),
    Gelu(Var),
    Softmax(Var),
    LayerNorm { a: Var, inv_std: Vec<Real> },
    Gather { a: Var, index: Vec<usize> },
    Concat { parts: Vec<Var>, axis: usize },
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    BceWithLogits { logits: Var, targets: Vec<Real> },
    #[cfg(all(test, not(feature = "f32")))]
    BrokenTanh(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

/// Gradients produced by one backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }
}

fn mismatch(op: &'static str, left: &[usize], right: &[usize]) -> EmitError {
    EmitError::ShapeMismatch {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
}

// sqrt(2/pi)
const GELU_C: Real = (std::f64::consts::FRAC_2_SQRT_PI * std::f64::consts::FRAC_1_SQRT_2) as Real;
const GELU_K: Real = 0.044_715;
const LAYER_NORM_EPS: Real = 1e-6;

fn gelu(x: Real) -> Real {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

fn gelu_grad(x: Real) -> Real {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

pub(crate) fn sigmoid(x: Real) -> Real {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A leaf that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// A non-parameter leaf whose gradient can be read from [`Gradients`].
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input, true)
    }

    /// Copy of `a` cut off from the graph.
    pub fn detach(&mut self, a: Var) -> Var {
        let value = self.value(a).clone();
        self.constant(value)
    }

    /// Leaf bound to a parameter. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).value.clone(), Op::Param, true);
        self.params.insert(id, v);
        v
    }

    /// `a[..., k] · w[k, n] -> [..., n]`
    pub fn matmul(&mut self, a: Var, w: Var) -> Result<Var> {
        let (ash, wsh) = (self.shape(a).to_vec(), self.shape(w).to_vec());
        if wsh.len() != 2 || ash.is_empty() || *ash.last().unwrap() != wsh[0] {
            return Err(mismatch("matmul", &ash, &wsh));
        }
        let (k, n) = (wsh[0], wsh[1]);
        let rows = self.value(a).len() / k;
        let mut out = vec![0.0; rows * n];
        gemm(
            rows,
            n,
            k,
            self.value(a).data(),
            false,
            self.value(w).data(),
            false,
            &mut out,
            false,
        );
        let mut shape = ash;
        *shape.last_mut().unwrap() = n;
        let rg = self.rg(&[a, w]);
        Ok(self.push(Tensor::new(shape, out)?, Op::MatMul { a, w }, rg))
    }

    /// Batched product `a[B, m, k] · b[B, k, n]`, or `a · bᵀ` with `b[B, n, k]` when `trans_b`.
    pub fn batch_matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (ash, bsh) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if ash.len() != 3 || bsh.len() != 3 || ash[0] != bsh[0] {
            return Err(mismatch("batch_matmul", &ash, &bsh));
        }
        let (batch, m, k) = (ash[0], ash[1], ash[2]);
        let (bk, n) = if trans_b { (bsh[2], bsh[1]) } else { (bsh[1], bsh[2]) };
        if bk != k {
            return Err(mismatch("batch_matmul", &ash, &bsh));
        }
        let mut out = vec![0.0; batch * m * n];
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        for i in 0..batch {
            gemm(
                m,
                n,
                k,
                &av[i * m * k..(i + 1) * m * k],
                false,
                &bv[i * k * n..(i + 1) * k * n],
                trans_b,
                &mut out[i * m * n..(i + 1) * m * n],
                false,
            );
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(
            Tensor::new(vec![batch, m, n], out)?,
            Op::BatchMatMul { a, b, trans_b },
            rg,
        ))
    }

    fn zip_same(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(Real, Real) -> Real,
    ) -> Result<Tensor> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(mismatch(name, x.shape(), y.shape()));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| f(*p, *q)).collect();
        Tensor::new(x.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_same("add", a, b, |p, q| p + q)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_same("sub", a, b, |p, q| p - q)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_same("mul", a, b, |p, q| p * q)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    fn row_broadcast(
        &self,
        name: &'static str,
        a: Var,
        row: Var,
        f: impl Fn(Real, Real) -> Real,
    ) -> Result<Tensor> {
        let (x, r) = (self.value(a), self.value(row));
        if r.ndim() != 1 || x.last_dim() != r.len() || x.ndim() == 0 {
            return Err(mismatch(name, x.shape(), r.shape()));
        }
        let n = r.len();
        let data = x
            .data()
            .chunks(n)
            .flat_map(|chunk| chunk.iter().zip(r.data()).map(|(p, q)| f(*p, *q)))
            .collect();
        Tensor::new(x.shape().to_vec(), data)
    }

    /// `a[..., n] + row[n]` broadcast over leading axes.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let v = self.row_broadcast("add_row", a, row, |p, q| p + q)?;
        let rg = self.rg(&[a, row]);
        Ok(self.push(v, Op::AddRow { a, row }, rg))
    }

    /// `a[..., n] * row[n]` broadcast over leading axes.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let v = self.row_broadcast("mul_row", a, row, |p, q| p * q)?;
        let rg = self.rg(&[a, row]);
        Ok(self.push(v, Op::MulRow { a, row }, rg))
    }

    /// Elementwise product with a constant of the same length.
    pub fn mul_const(&mut self, a: Var, factor: Vec<Real>) -> Result<Var> {
        let x = self.value(a);
        if factor.len() != x.len() {
            return Err(mismatch("mul_const", x.shape(), &[factor.len()]));
        }
        let data = x.data().iter().zip(&factor).map(|(p, q)| p * q).collect();
        let v = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(v, Op::MulConst { a, factor }, rg))
    }

    /// Replace entries where `mask` is true with `fill`.
    pub fn masked_fill(&mut self, a: Var, mask: Vec<bool>, fill: Real) -> Result<Var> {
        let x = self.value(a);
        if mask.len() != x.len() {
            return Err(mismatch("masked_fill", x.shape(), &[mask.len()]));
        }
        let data = x
            .data()
            .iter()
            .zip(&mask)
            .map(|(p, m)| if *m { fill } else { *p })
            .collect();
        let v = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(v, Op::MaskedFill { a, mask }, rg))
    }

    pub fn scale(&mut self, a: Var, factor: Real) -> Var {
        let x = self.value(a);
        let data = x.data().iter().map(|p| p * factor).collect();
        let v = Tensor::new(x.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(&[a]);
        self.push(v, Op::Scale { a, factor }, rg)
    }

    fn map(&self, a: Var, f: impl Fn(Real) -> Real) -> Tensor {
        let x = self.value(a);
        Tensor::new(x.shape().to_vec(), x.data().iter().map(|p| f(*p)).collect())
            .expect("same shape")
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.map(a, Real::tanh);
        let rg = self.rg(&[a]);
        self.push(v, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.map(a, sigmoid);
        let rg = self.rg(&[a]);
        self.push(v, Op::Sigmoid(a), rg)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.map(a, gelu);
        let rg = self.rg(&[a]);
        self.push(v, Op::Gelu(a), rg)
    }

    /// Softmax over the last axis, computed after subtracting the row maximum.
    pub fn softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let n = x.last_dim();
        let mut data = x.data().to_vec();
        for row in data.chunks_mut(n) {
            let max = row.iter().copied().fold(Real::NEG_INFINITY, Real::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let v = Tensor::new(x.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(&[a]);
        self.push(v, Op::Softmax(a), rg)
    }

    /// Normalize each row over the last axis to zero mean and unit variance.
    pub fn layer_norm(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let n = x.last_dim();
        let mut data = x.data().to_vec();
        let mut inv_std = Vec::with_capacity(data.len() / n.max(1));
        for row in data.chunks_mut(n) {
            let mean = row.iter().sum::<Real>() / n as Real;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / n as Real;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * inv;
            }
            inv_std.push(inv);
        }
        let v = Tensor::new(x.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(&[a]);
        self.push(v, Op::LayerNorm { a, inv_std }, rg)
    }

    /// `out[i] = a[index[i]]`, shaped `shape`.
    pub fn gather(&mut self, a: Var, index: Vec<usize>, shape: Vec<usize>) -> Result<Var> {
        let x = self.value(a);
        if shape.iter().product::<usize>() != index.len() {
            return Err(mismatch("gather", &shape, &[index.len()]));
        }
        if let Some(bad) = index.iter().find(|&&i| i >= x.len()) {
            return Err(mismatch("gather", x.shape(), &[*bad]));
        }
        let data = index.iter().map(|&i| x.data()[i]).collect();
        let v = Tensor::new(shape, data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(v, Op::Gather { a, index }, rg))
    }

    /// Select rows of `a` viewed as `[rows, last]`.
    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let width = self.value(a).last_dim();
        let total_rows = self.value(a).len() / width.max(1);
        if let Some(bad) = rows.iter().find(|&&r| r >= total_rows) {
            return Err(mismatch("gather_rows", self.shape(a), &[*bad]));
        }
        let index = rows
            .iter()
            .flat_map(|&r| (r * width)..(r + 1) * width)
            .collect();
        self.gather(a, index, vec![rows.len(), width])
    }

    /// Contiguous slice `[start, end)` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || start > end || end > shape[axis] {
            return Err(mismatch("slice", &shape, &[axis, start, end]));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut index = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            for s in start..end {
                let base = (o * shape[axis] + s) * inner;
                index.extend(base..base + inner);
            }
        }
        let mut out_shape = shape;
        out_shape[axis] = end - start;
        self.gather(a, index, out_shape)
    }

    /// Join tensors along `axis`; all other axes must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .map(|v| self.shape(*v).to_vec())
            .ok_or(EmitError::Empty("concat input"))?;
        if axis >= first.len() {
            return Err(mismatch("concat", &first, &[axis]));
        }
        for p in parts {
            let s = self.shape(*p);
            let ok = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !ok {
                return Err(mismatch("concat", &first, s));
            }
        }
        let outer: usize = first[..axis].iter().product();
        let mut data = Vec::new();
        for o in 0..outer {
            for p in parts {
                let x = self.value(*p);
                let chunk = x.len() / outer.max(1);
                data.extend_from_slice(&x.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = first;
        shape[axis] = parts.iter().map(|p| self.shape(*p)[axis]).sum();
        let rg = self.rg(parts);
        Ok(self.push(
            Tensor::new(shape, data)?,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).clone().reshape(shape)?;
        let rg = self.rg(&[a]);
        Ok(self.push(v, Op::Reshape(a), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// Mean of all entries; an empty tensor yields 0.
    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let m = if x.is_empty() {
            0.0
        } else {
            x.data().iter().sum::<Real>() / x.len() as Real
        };
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(m), Op::Mean(a), rg)
    }

    /// Mean binary cross entropy of `logits` against 0/1 `targets`,
    /// evaluated as `max(z,0) - z·y + ln(1 + e^{-|z|})`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Vec<Real>) -> Result<Var> {
        let z = self.value(logits);
        if z.len() != targets.len() || z.is_empty() {
            return Err(mismatch("bce_with_logits", z.shape(), &[targets.len()]));
        }
        let total: Real = z
            .data()
            .iter()
            .zip(&targets)
            .map(|(z, y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum();
        let v = Tensor::scalar(total / targets.len() as Real);
        let rg = self.rg(&[logits]);
        Ok(self.push(v, Op::BceWithLogits { logits, targets }, rg))
    }

    /// Inverted dropout. `rng = None` (evaluation) or `rate = 0` returns `a` unchanged.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        rate: Real,
        rng: Option<&mut R>,
    ) -> Result<Var> {
        let Some(rng) = rng else { return Ok(a) };
        if rate <= 0.0 {
            return Ok(a);
        }
        if rate >= 1.0 {
            let n = self.value(a).len();
            return self.mul_const(a, vec![0.0; n]);
        }
        let keep = 1.0 / (1.0 - rate);
        let factor = (0..self.value(a).len())
            .map(|_| {
                if rng.random::<f64>() < rate as f64 {
                    0.0
                } else {
                    keep
                }
            })
            .collect();
        self.mul_const(a, factor)
    }

    #[cfg(all(test, not(feature = "f32")))]
    pub(crate) fn broken_tanh(&mut self, a: Var) -> Var {
        let v = self.map(a, Real::tanh);
        let rg = self.rg(&[a]);
        self.push(v, Op::BrokenTanh(a), rg)
    }

    /// Reverse-mode pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(mismatch("backward (loss must be scalar)", lv.shape(), &[]));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], var: Var, delta: Tensor) {
        if !self.nodes[var.0].requires_grad {
            return;
        }
        match &mut grads[var.0] {
            Some(existing) => existing.add_assign(&delta),
            slot => *slot = Some(delta),
        }
    }

    fn with_data(&self, var: Var, data: Vec<Real>) -> Tensor {
        Tensor::new(self.shape(var).to_vec(), data).expect("gradient shape")
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match &node.op {
            Op::Constant | Op::Param | Op::Input => {}
            Op::MatMul { a, w } => {
                let wsh = self.shape(*w);
                let (k, n) = (wsh[0], wsh[1]);
                let rows = gd.len() / n;
                if self.requires_grad(*a) {
                    let mut da = vec![0.0; rows * k];
                    gemm(rows, k, n, gd, false, self.value(*w).data(), true, &mut da, false);
                    self.accumulate(grads, *a, self.with_data(*a, da));
                }
                if self.requires_grad(*w) {
                    let mut dw = vec![0.0; k * n];
                    gemm(k, n, rows, self.value(*a).data(), true, gd, false, &mut dw, false);
                    self.accumulate(grads, *w, self.with_data(*w, dw));
                }
            }
            Op::BatchMatMul { a, b, trans_b } => {
                let ash = self.shape(*a);
                let (batch, m, k) = (ash[0], ash[1], ash[2]);
                let n = node.value.shape()[2];
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if self.requires_grad(*a) {
                    let mut da = vec![0.0; batch * m * k];
                    for i in 0..batch {
                        // trans_b: dA = G·B ; else dA = G·Bᵀ
                        gemm(
                            m,
                            k,
                            n,
                            &gd[i * m * n..(i + 1) * m * n],
                            false,
                            &bv[i * k * n..(i + 1) * k * n],
                            !*trans_b,
                            &mut da[i * m * k..(i + 1) * m * k],
                            false,
                        );
                    }
                    self.accumulate(grads, *a, self.with_data(*a, da));
                }
                if self.requires_grad(*b) {
                    let mut db = vec![0.0; batch * k * n];
                    for i in 0..batch {
                        let gi = &gd[i * m * n..(i + 1) * m * n];
                        let ai = &av[i * m * k..(i + 1) * m * k];
                        let out = &mut db[i * k * n..(i + 1) * k * n];
                        if *trans_b {
                            // dB[n×k] = Gᵀ·A
                            gemm(n, k, m, gi, true, ai, false, out, false);
                        } else {
                            // dB[k×n] = Aᵀ·G
                            gemm(k, n, m, ai, true, gi, false, out, false);
                        }
                    }
                    self.accumulate(grads, *b, self.with_data(*b, db));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                let neg = gd.iter().map(|x| -x).collect();
                self.accumulate(grads, *b, self.with_data(*b, neg));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if self.requires_grad(*a) {
                    let da = gd.iter().zip(bv).map(|(g, y)| g * y).collect();
                    self.accumulate(grads, *a, self.with_data(*a, da));
                }
                if self.requires_grad(*b) {
                    let db = gd.iter().zip(av).map(|(g, x)| g * x).collect();
                    self.accumulate(grads, *b, self.with_data(*b, db));
                }
            }
            Op::AddRow { a, row } => {
                self.accumulate(grads, *a, g.clone());
                if self.requires_grad(*row) {
                    let n = self.value(*row).len();
                    let mut dr = vec![0.0; n];
                    for chunk in gd.chunks(n) {
                        for (d, x) in dr.iter_mut().zip(chunk) {
                            *d += x;
                        }
                    }
                    self.accumulate(grads, *row, self.with_data(*row, dr));
                }
            }
            Op::MulRow { a, row } => {
                let rv = self.value(*row).data();
                let n = rv.len();
                if self.requires_grad(*a) {
                    let da = gd
                        .chunks(n)
                        .flat_map(|c| c.iter().zip(rv).map(|(g, r)| g * r))
                        .collect();
                    self.accumulate(grads, *a, self.with_data(*a, da));
                }
                if self.requires_grad(*row) {
                    let mut dr = vec![0.0; n];
                    for (gc, ac) in gd.chunks(n).zip(self.value(*a).data().chunks(n)) {
                        for ((d, g), x) in dr.iter_mut().zip(gc).zip(ac) {
                            *d += g * x;
                        }
                    }
                    self.accumulate(grads, *row, self.with_data(*row, dr));
                }
            }
            Op::MulConst { a, factor } => {
                let da = gd.iter().zip(factor).map(|(g, f)| g * f).collect();
                self.accumulate(grads, *a, self.with_data(*a, da));
            }
            Op::MaskedFill { a, mask } => {
                let da = gd
                    .iter()
                    .zip(mask)
                    .map(|(g, m)| if *m { 0.0 } else { *g })
                    .collect();
                self.accumulate(grads, *a, self.with_data(*a, da));
            }
            Op::Scale { a, factor } => {
                let da = gd.iter().map(|g| g * factor).collect();
                self.accumulate(grads, *a, self.with_data(*a, da));
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                let da = gd.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
                self.accumulate(grads, *a, self.with_data(*a, da));
            }
            #[cfg(all(test, not(feature = "f32")))]
            Op::BrokenTanh(a) => {
                // Deliberately wrong: derivative taken as 1 - y.
                let y = node.value.data();
                let da = gd.iter().zip(y).map(|(g, y)| g * (1.0 - y)).collect();
                self.accumulate(grads, *a, self.with_data(*a, da));
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                let da = gd.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect();
                self.accumulate(grads, *a, self.with_data(*a, da));
            }
            Op::Gelu(a) => {
                let x = self.value(*a).data();
                let da = gd.iter().zip(x).map(|(g, x)| g * gelu_grad(*x)).collect();
                self.accumulate(grads, *a, self.with_data(*a, da));
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let n = node.value.last_dim();
                let mut da = vec![0.0; y.len()];
                for ((dr, gr), yr) in da.chunks_mut(n).zip(gd.chunks(n)).zip(y.chunks(n)) {
                    let dot: Real = gr.iter().zip(yr).map(|(g, y)| g * y).sum();
                    for ((d, g), y) in dr.iter_mut().zip(gr).zip(yr) {
                        *d = y * (g - dot);
                    }
                }
                self.accumulate(grads, *a, self.with_data(*a, da));
            }
            Op::LayerNorm { a, inv_std } => {
                let xhat = node.value.data();
                let n = node.value.last_dim();
                let nf = n as Real;
                let mut da = vec![0.0; xhat.len()];
                for (((dr, gr), xr), inv) in da
                    .chunks_mut(n)
                    .zip(gd.chunks(n))
                    .zip(xhat.chunks(n))
                    .zip(inv_std)
                {
                    let sum_g: Real = gr.iter().sum();
                    let sum_gx: Real = gr.iter().zip(xr).map(|(g, x)| g * x).sum();
                    for ((d, g), x) in dr.iter_mut().zip(gr).zip(xr) {
                        *d = inv / nf * (nf * g - sum_g - x * sum_gx);
                    }
                }
                self.accumulate(grads, *a, self.with_data(*a, da));
            }
            Op::Gather { a, index } => {
                let mut da = vec![0.0; self.value(*a).len()];
                for (g, &i) in gd.iter().zip(index) {
                    da[i] += g;
                }
                self.accumulate(grads, *a, self.with_data(*a, da));
            }
            Op::Concat { parts, axis } => {
                let outer: usize = node.value.shape()[..*axis].iter().product();
                let mut offset = 0;
                let mut pieces: Vec<Vec<Real>> = parts
                    .iter()
                    .map(|p| Vec::with_capacity(self.value(*p).len()))
                    .collect();
                for _ in 0..outer {
                    for (p, piece) in parts.iter().zip(pieces.iter_mut()) {
                        let chunk = self.value(*p).len() / outer.max(1);
                        piece.extend_from_slice(&gd[offset..offset + chunk]);
                        offset += chunk;
                    }
                }
                for (p, piece) in parts.iter().zip(pieces) {
                    self.accumulate(grads, *p, self.with_data(*p, piece));
                }
            }
            Op::Reshape(a) => {
                self.accumulate(grads, *a, self.with_data(*a, gd.to_vec()));
            }
            Op::Sum(a) => {
                let n = self.value(*a).len();
                self.accumulate(grads, *a, self.with_data(*a, vec![gd[0]; n]));
            }
            Op::Mean(a) => {
                let n = self.value(*a).len();
                if n > 0 {
                    let v = gd[0] / n as Real;
                    self.accumulate(grads, *a, self.with_data(*a, vec![v; n]));
                }
            }
            Op::BceWithLogits { logits, targets } => {
                let z = self.value(*logits).data();
                let scale = gd[0] / targets.len() as Real;
                let dz = z
                    .iter()
                    .zip(targets)
                    .map(|(z, y)| scale * (sigmoid(*z) - y))
                    .collect();
                self.accumulate(grads, *logits, self.with_data(*logits, dz));
            }
        }
    }

    /// Add parameter gradients from `grads` into `store`. Gradients accumulate
    /// across calls until [`ParamStore::zero_grads`].
    pub fn accumulate_param_grads(&self, grads: &Gradients, store: &mut ParamStore) {
        for (&id, &var) in &self.params {
            if let Some(g) = grads.get(var) {
                store.get_mut(id).grad.add_assign(g);
            }
        }
    }
}
