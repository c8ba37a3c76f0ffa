//! Reverse-mode differentiation over a per-pass operation tape.
//!
//! Nodes are appended in evaluation order, so the tape is topologically
//! sorted by construction and `backward` visits it once in reverse.

use super::params::{ParamId, ParamStore};
use super::tensor::{Real, Tensor};
use super::NnError;
use crate::rng::RngStream;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Sigmoid,
    Relu,
    Tanh,
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Vec<T>),
    Affine(Var, T),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Reshape(Var),
    GatherRows { src: Var, rows: Vec<usize> },
    SliceCols { src: Var, start: usize },
    Concat(Vec<Var>),
    Conv1d { x: Var, w: Var, b: Var, batch: usize, len: usize, k: usize },
    Softmax(Var),
    WeightedSum { alpha: Var, seq: Var },
    AddPerSequence { x: Var, ctx: Var },
    Blend { new: Var, old: Var, keep: Vec<T> },
    MaxOverTime { x: Var, argmax: Vec<usize> },
    BatchNorm { x: Var, inv_std: Vec<T> },
    Mse { pred: Var, target: Vec<T> },
    Sum(Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Running-statistics update recorded by a train-mode batch norm.
#[derive(Debug, Clone)]
pub struct StatUpdate<T> {
    pub mean_id: ParamId,
    pub var_id: ParamId,
    pub batch_mean: Vec<T>,
    pub batch_var: Vec<T>,
}

/// One forward/backward pass over a frozen parameter store.
pub struct Tape<'p, T: Real> {
    store: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_vars: Vec<Option<Var>>,
    mode: Mode,
    rng: RngStream,
    stat_updates: Vec<StatUpdate<T>>,
}

fn shape_err(op: &str, detail: String) -> NnError {
    NnError::ShapeMismatch(format!("{op}: {detail}"))
}

impl<'p, T: Real> Tape<'p, T> {
    /// `seed` drives dropout masks in train mode.
    pub fn new(store: &'p ParamStore<T>, mode: Mode, seed: u64) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
            param_vars: vec![None; store.len()],
            mode,
            rng: RngStream::new(seed),
            stat_updates: Vec::new(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn store(&self) -> &'p ParamStore<T> {
        self.store
    }

    pub fn rng(&mut self) -> &mut RngStream {
        &mut self.rng
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn stat_updates(&self) -> &[StatUpdate<T>] {
        &self.stat_updates
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Constant input (no gradient).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// Trainable parameter leaf; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let p = self.store.get(id);
        self.nodes.push(Node { value: p.value.clone(), op: Op::Leaf, needs_grad: p.trainable });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", format!("{sa:?} x {sb:?}")));
        }
        let (n, k, m) = (sa[0], sa[1], sb[1]);
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), n, k, m);
        Ok(self.push(Tensor::new(vec![n, m], out), Op::MatMul(a, b), &[a, b]))
    }

    /// Adds a length-`m` vector to every row of `x` (last axis `m`).
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var, NnError> {
        let m = self.value(x).cols();
        if self.value(row).len() != m {
            return Err(shape_err("add_row", format!("{:?} + {:?}", self.shape(x), self.shape(row))));
        }
        let r = self.value(row).data().to_vec();
        let mut out = self.value(x).clone();
        for chunk in out.data_mut().chunks_mut(m) {
            chunk.iter_mut().zip(&r).for_each(|(o, &b)| *o = *o + b);
        }
        Ok(self.push(out, Op::AddRow(x, row), &[x, row]))
    }

    /// Multiplies every row of `x` elementwise by a length-`m` vector.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var, NnError> {
        let m = self.value(x).cols();
        if self.value(row).len() != m {
            return Err(shape_err("mul_row", format!("{:?} * {:?}", self.shape(x), self.shape(row))));
        }
        let r = self.value(row).data().to_vec();
        let mut out = self.value(x).clone();
        for chunk in out.data_mut().chunks_mut(m) {
            chunk.iter_mut().zip(&r).for_each(|(o, &g)| *o = *o * g);
        }
        Ok(self.push(out, Op::MulRow(x, row), &[x, row]))
    }

    fn zip_same(&mut self, a: Var, b: Var, name: &str, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var, NnError> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(name, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor::new(shape, data), op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip_same(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip_same(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip_same(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise product with a constant array of the same size.
    pub fn mul_const(&mut self, x: Var, c: Vec<T>) -> Result<Var, NnError> {
        if c.len() != self.value(x).len() {
            return Err(shape_err("mul_const", format!("{} vs {}", self.value(x).len(), c.len())));
        }
        let data = self.value(x).data().iter().zip(&c).map(|(&a, &b)| a * b).collect();
        let shape = self.shape(x).to_vec();
        Ok(self.push(Tensor::new(shape, data), Op::MulConst(x, c), &[x]))
    }

    /// `scale * x + shift` with constant scalars.
    pub fn affine(&mut self, x: Var, scale: T, shift: T) -> Var {
        let data = self.value(x).data().iter().map(|&a| scale * a + shift).collect();
        let shape = self.shape(x).to_vec();
        self.push(Tensor::new(shape, data), Op::Affine(x, scale), &[x])
    }

    fn unary(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let data = self.value(x).data().iter().map(|&a| f(a)).collect();
        let shape = self.shape(x).to_vec();
        self.push(Tensor::new(shape, data), op, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, |a| a.tanh(), Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |a| if a > T::zero() { a } else { T::zero() }, Op::Relu(x))
    }

    pub fn activate(&mut self, x: Var, act: Activation) -> Var {
        match act {
            Activation::Linear => x,
            Activation::Sigmoid => self.sigmoid(x),
            Activation::Relu => self.relu(x),
            Activation::Tanh => self.tanh(x),
        }
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var, NnError> {
        if shape.iter().product::<usize>() != self.value(x).len() {
            return Err(shape_err("reshape", format!("{:?} -> {shape:?}", self.shape(x))));
        }
        let data = self.value(x).data().to_vec();
        Ok(self.push(Tensor::new(shape, data), Op::Reshape(x), &[x]))
    }

    /// Selects rows (over the flattened leading axes) of `src`; gradients are
    /// scattered back additively, so repeated rows accumulate.
    pub fn gather_rows(&mut self, src: Var, rows: Vec<usize>) -> Result<Var, NnError> {
        let (nrows, m) = (self.value(src).rows(), self.value(src).cols());
        if let Some(&bad) = rows.iter().find(|&&r| r >= nrows) {
            return Err(NnError::IndexOutOfRange { index: bad, size: nrows });
        }
        let srcd = self.value(src).data();
        let mut out = Vec::with_capacity(rows.len() * m);
        for &r in &rows {
            out.extend_from_slice(&srcd[r * m..(r + 1) * m]);
        }
        let n = rows.len();
        Ok(self.push(Tensor::new(vec![n, m], out), Op::GatherRows { src, rows }, &[src]))
    }

    /// Columns `start..start + len` of the last axis.
    pub fn slice_cols(&mut self, src: Var, start: usize, len: usize) -> Result<Var, NnError> {
        let m = self.value(src).cols();
        if start + len > m {
            return Err(shape_err("slice_cols", format!("{start}+{len} > {m}")));
        }
        let mut shape = self.shape(src).to_vec();
        *shape.last_mut().unwrap() = len;
        let data: Vec<T> = self
            .value(src)
            .data()
            .chunks(m)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        Ok(self.push(Tensor::new(shape, data), Op::SliceCols { src, start }, &[src]))
    }

    /// Concatenation along the last axis; leading axes must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let first = *parts.first().ok_or_else(|| shape_err("concat", "no inputs".into()))?;
        let lead = self.shape(first)[..self.shape(first).len() - 1].to_vec();
        let rows = self.value(first).rows();
        let mut width = 0;
        for &p in parts {
            let s = self.shape(p);
            if s[..s.len() - 1] != lead[..] {
                return Err(shape_err("concat", format!("{:?} vs {:?}", self.shape(first), s)));
            }
            width += self.value(p).cols();
        }
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for &p in parts {
                let v = self.value(p);
                let c = v.cols();
                out.extend_from_slice(&v.data()[r * c..(r + 1) * c]);
            }
        }
        let mut shape = lead;
        shape.push(width);
        Ok(self.push(Tensor::new(shape, out), Op::Concat(parts.to_vec()), parts))
    }

    /// Same-length 1-D convolution: `x` [B, T, Cin], `w` [K, Cin, Cout],
    /// `b` [Cout], zero padding of `(K - 1) / 2` on both ends.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 3 || sw.len() != 3 || sx[2] != sw[1] || self.value(b).len() != sw[2] {
            return Err(shape_err("conv1d", format!("x {sx:?}, w {sw:?}, b {:?}", self.shape(b))));
        }
        let (batch, len, cin) = (sx[0], sx[1], sx[2]);
        let (k, cout) = (sw[0], sw[2]);
        if k % 2 == 0 {
            return Err(NnError::EvenKernel(k));
        }
        let pad = (k - 1) / 2;
        let (xd, wd, bd) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        let mut out = vec![T::zero(); batch * len * cout];
        for bi in 0..batch {
            for t in 0..len {
                let o = &mut out[(bi * len + t) * cout..(bi * len + t + 1) * cout];
                o.copy_from_slice(bd);
                for kk in 0..k {
                    let src = t as isize + kk as isize - pad as isize;
                    if src < 0 || src >= len as isize {
                        continue;
                    }
                    let xrow = &xd[(bi * len + src as usize) * cin..(bi * len + src as usize + 1) * cin];
                    for (c, &xv) in xrow.iter().enumerate() {
                        if xv == T::zero() {
                            continue;
                        }
                        let wrow = &wd[(kk * cin + c) * cout..(kk * cin + c + 1) * cout];
                        o.iter_mut().zip(wrow).for_each(|(acc, &wv)| *acc = *acc + xv * wv);
                    }
                }
            }
        }
        Ok(self.push(
            Tensor::new(vec![batch, len, cout], out),
            Op::Conv1d { x, w, b, batch, len, k },
            &[x, w, b],
        ))
    }

    /// Stable softmax over the last axis. `mask` (same size as `x`) marks
    /// excluded positions with `true`; they get exactly zero weight.
    pub fn softmax(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var, NnError> {
        let m = self.value(x).cols();
        if let Some(mk) = mask {
            if mk.len() != self.value(x).len() {
                return Err(shape_err("softmax", format!("mask {} vs {}", mk.len(), self.value(x).len())));
            }
        }
        let xd = self.value(x).data();
        let mut out = vec![T::zero(); xd.len()];
        for (r, row) in xd.chunks(m).enumerate() {
            let masked = |i: usize| mask.is_some_and(|mk| mk[r * m + i]);
            let mut max = T::neg_infinity();
            for (i, &v) in row.iter().enumerate() {
                if !masked(i) && v > max {
                    max = v;
                }
            }
            if max == T::neg_infinity() {
                return Err(NnError::AllMasked);
            }
            let mut sum = T::zero();
            for (i, &v) in row.iter().enumerate() {
                if !masked(i) {
                    let e = (v - max).exp();
                    out[r * m + i] = e;
                    sum = sum + e;
                }
            }
            for i in 0..m {
                if !masked(i) {
                    out[r * m + i] = out[r * m + i] / sum;
                }
            }
        }
        let shape = self.shape(x).to_vec();
        Ok(self.push(Tensor::new(shape, out), Op::Softmax(x), &[x]))
    }

    /// `alpha` [B, T], `seq` [B, T, D] -> [B, D] with `out[b] = sum_t alpha[b,t] seq[b,t]`.
    pub fn weighted_sum(&mut self, alpha: Var, seq: Var) -> Result<Var, NnError> {
        let (sa, ss) = (self.shape(alpha).to_vec(), self.shape(seq).to_vec());
        if sa.len() != 2 || ss.len() != 3 || sa[0] != ss[0] || sa[1] != ss[1] {
            return Err(shape_err("weighted_sum", format!("{sa:?} . {ss:?}")));
        }
        let (b, t, d) = (ss[0], ss[1], ss[2]);
        let (ad, sd) = (self.value(alpha).data(), self.value(seq).data());
        let mut out = vec![T::zero(); b * d];
        for bi in 0..b {
            for ti in 0..t {
                let a = ad[bi * t + ti];
                if a == T::zero() {
                    continue;
                }
                let row = &sd[(bi * t + ti) * d..(bi * t + ti + 1) * d];
                out[bi * d..(bi + 1) * d].iter_mut().zip(row).for_each(|(o, &s)| *o = *o + a * s);
            }
        }
        Ok(self.push(Tensor::new(vec![b, d], out), Op::WeightedSum { alpha, seq }, &[alpha, seq]))
    }

    /// `x` [B, T, A] plus per-sequence context `ctx` [B, A] broadcast over T.
    pub fn add_per_sequence(&mut self, x: Var, ctx: Var) -> Result<Var, NnError> {
        let (sx, sc) = (self.shape(x).to_vec(), self.shape(ctx).to_vec());
        if sx.len() != 3 || sc.len() != 2 || sx[0] != sc[0] || sx[2] != sc[1] {
            return Err(shape_err("add_per_sequence", format!("{sx:?} + {sc:?}")));
        }
        let (b, t, a) = (sx[0], sx[1], sx[2]);
        let cd = self.value(ctx).data().to_vec();
        let mut out = self.value(x).clone();
        for bi in 0..b {
            for ti in 0..t {
                let row = &mut out.data_mut()[(bi * t + ti) * a..(bi * t + ti + 1) * a];
                row.iter_mut().zip(&cd[bi * a..(bi + 1) * a]).for_each(|(o, &c)| *o = *o + c);
            }
        }
        Ok(self.push(out, Op::AddPerSequence { x, ctx }, &[x, ctx]))
    }

    /// Row-wise blend `keep * new + (1 - keep) * old` with a constant per-row
    /// factor; used to hold recurrent state across padded steps.
    pub fn blend(&mut self, new: Var, old: Var, keep: Vec<T>) -> Result<Var, NnError> {
        if self.shape(new) != self.shape(old) || keep.len() != self.value(new).rows() {
            return Err(shape_err("blend", format!("{:?} / {:?} / {}", self.shape(new), self.shape(old), keep.len())));
        }
        let m = self.value(new).cols();
        let data: Vec<T> = self
            .value(new)
            .data()
            .iter()
            .zip(self.value(old).data())
            .enumerate()
            .map(|(i, (&n, &o))| {
                let k = keep[i / m];
                k * n + (T::one() - k) * o
            })
            .collect();
        let shape = self.shape(new).to_vec();
        Ok(self.push(Tensor::new(shape, data), Op::Blend { new, old, keep }, &[new, old]))
    }

    /// Max over the time axis of `x` [B, T, C], skipping positions where
    /// `mask` [B, T] is `true`.
    pub fn max_over_time(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var, NnError> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 {
            return Err(shape_err("max_over_time", format!("{s:?}")));
        }
        let (b, t, c) = (s[0], s[1], s[2]);
        let xd = self.value(x).data();
        let mut out = vec![T::zero(); b * c];
        let mut argmax = vec![0usize; b * c];
        for bi in 0..b {
            for ci in 0..c {
                let mut best: Option<(usize, T)> = None;
                for ti in 0..t {
                    if mask.is_some_and(|m| m[bi * t + ti]) {
                        continue;
                    }
                    let v = xd[(bi * t + ti) * c + ci];
                    if best.is_none_or(|(_, bv)| v > bv) {
                        best = Some((ti, v));
                    }
                }
                let (ti, v) = best.ok_or(NnError::AllMasked)?;
                out[bi * c + ci] = v;
                argmax[bi * c + ci] = (bi * t + ti) * c + ci;
            }
        }
        Ok(self.push(Tensor::new(vec![b, c], out), Op::MaxOverTime { x, argmax }, &[x]))
    }

    /// Train-mode normalization of `x` [N, F] by batch statistics with the
    /// variance floored at `floor`. Returns the normalized tensor and the
    /// batch mean and variance.
    pub fn batch_normalize(&mut self, x: Var, floor: T) -> Result<(Var, Vec<T>, Vec<T>), NnError> {
        let (n, f) = (self.value(x).rows(), self.value(x).cols());
        if n < 2 {
            return Err(NnError::BatchTooSmall(n));
        }
        let xd = self.value(x).data();
        let nt = T::from_usize(n).unwrap();
        let mut mean = vec![T::zero(); f];
        for row in xd.chunks(f) {
            mean.iter_mut().zip(row).for_each(|(m, &v)| *m = *m + v);
        }
        mean.iter_mut().for_each(|m| *m = *m / nt);
        let mut var = vec![T::zero(); f];
        for row in xd.chunks(f) {
            for j in 0..f {
                let d = row[j] - mean[j];
                var[j] = var[j] + d * d;
            }
        }
        var.iter_mut().for_each(|v| *v = *v / nt);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / v.max(floor).sqrt()).collect();
        let data: Vec<T> = xd
            .iter()
            .enumerate()
            .map(|(i, &v)| (v - mean[i % f]) * inv_std[i % f])
            .collect();
        // floored features are normalized by a constant; mark them with a negative sign
        let tagged: Vec<T> = inv_std
            .iter()
            .zip(&var)
            .map(|(&s, &v)| if v < floor { -s } else { s })
            .collect();
        let shape = self.shape(x).to_vec();
        let out = self.push(Tensor::new(shape, data), Op::BatchNorm { x, inv_std: tagged }, &[x]);
        Ok((out, mean, var))
    }

    pub fn record_stat_update(&mut self, update: StatUpdate<T>) {
        self.stat_updates.push(update);
    }

    pub fn mse(&mut self, pred: Var, target: &[T]) -> Result<Var, NnError> {
        if self.value(pred).len() != target.len() || target.is_empty() {
            return Err(shape_err("mse", format!("{} vs {}", self.value(pred).len(), target.len())));
        }
        let n = T::from_usize(target.len()).unwrap();
        let loss = self
            .value(pred)
            .data()
            .iter()
            .zip(target)
            .map(|(&p, &t)| (p - t) * (p - t))
            .fold(T::zero(), |a, b| a + b)
            / n;
        Ok(self.push(Tensor::scalar(loss), Op::Mse { pred, target: target.to_vec() }, &[pred]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().fold(T::zero(), |a, &b| a + b);
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// Back-propagates from scalar `output`; returns gradients per parameter
    /// of the store (`None` for parameters not on the tape).
    pub fn backward(&self, output: Var) -> Result<Vec<Option<Tensor<T>>>, NnError> {
        let grads = self.backward_all(output)?;
        Ok(self
            .param_vars
            .iter()
            .map(|pv| {
                pv.and_then(|v| {
                    grads[v.0].as_ref().map(|g| Tensor::new(self.nodes[v.0].value.shape().to_vec(), g.clone()))
                })
            })
            .collect())
    }

    /// Gradient of scalar `output` with respect to an arbitrary node.
    pub fn grad_of(&self, output: Var, wrt: Var) -> Result<Option<Vec<T>>, NnError> {
        Ok(self.backward_all(output)?.swap_remove(wrt.0))
    }

    fn backward_all(&self, output: Var) -> Result<Vec<Option<Vec<T>>>, NnError> {
        if self.value(output).len() != 1 {
            return Err(shape_err("backward", format!("output must be scalar, got {:?}", self.shape(output))));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(vec![T::one()]);
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.needs_grad {
                self.propagate(idx, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        Ok(grads)
    }

    fn acc(&self, grads: &mut [Option<Vec<T>>], v: Var, f: impl FnOnce(&mut [T])) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); self.nodes[v.0].value.len()]);
        f(slot);
    }

    fn propagate(&self, idx: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let out = &self.nodes[idx].value;
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (n, k, m) = (sa[0], sa[1], sb[1]);
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                self.acc(grads, *a, |ga| {
                    for i in 0..n {
                        for kk in 0..k {
                            let mut s = T::zero();
                            for j in 0..m {
                                s = s + g[i * m + j] * bd[kk * m + j];
                            }
                            ga[i * k + kk] = ga[i * k + kk] + s;
                        }
                    }
                });
                self.acc(grads, *b, |gb| {
                    for i in 0..n {
                        for kk in 0..k {
                            let av = ad[i * k + kk];
                            if av == T::zero() {
                                continue;
                            }
                            let grow = &g[i * m..(i + 1) * m];
                            gb[kk * m..(kk + 1) * m].iter_mut().zip(grow).for_each(|(o, &gv)| *o = *o + av * gv);
                        }
                    }
                });
            }
            Op::AddRow(x, row) => {
                let m = out.cols();
                self.acc(grads, *x, |gx| add_into(gx, g));
                self.acc(grads, *row, |gr| {
                    for chunk in g.chunks(m) {
                        add_into(gr, chunk);
                    }
                });
            }
            Op::MulRow(x, row) => {
                let m = out.cols();
                let (xd, rd) = (self.value(*x).data(), self.value(*row).data());
                self.acc(grads, *x, |gx| {
                    for (i, gv) in g.iter().enumerate() {
                        gx[i] = gx[i] + *gv * rd[i % m];
                    }
                });
                self.acc(grads, *row, |gr| {
                    for (i, gv) in g.iter().enumerate() {
                        gr[i % m] = gr[i % m] + *gv * xd[i];
                    }
                });
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, |ga| add_into(ga, g));
                self.acc(grads, *b, |gb| add_into(gb, g));
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, |ga| add_into(ga, g));
                self.acc(grads, *b, |gb| gb.iter_mut().zip(g).for_each(|(o, &v)| *o = *o - v));
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                self.acc(grads, *a, |ga| {
                    for i in 0..g.len() {
                        ga[i] = ga[i] + g[i] * bd[i];
                    }
                });
                self.acc(grads, *b, |gb| {
                    for i in 0..g.len() {
                        gb[i] = gb[i] + g[i] * ad[i];
                    }
                });
            }
            Op::MulConst(x, c) => {
                self.acc(grads, *x, |gx| {
                    for i in 0..g.len() {
                        gx[i] = gx[i] + g[i] * c[i];
                    }
                });
            }
            Op::Affine(x, scale) => {
                self.acc(grads, *x, |gx| gx.iter_mut().zip(g).for_each(|(o, &v)| *o = *o + *scale * v));
            }
            Op::Sigmoid(x) => {
                let y = out.data();
                self.acc(grads, *x, |gx| {
                    for i in 0..g.len() {
                        gx[i] = gx[i] + g[i] * y[i] * (T::one() - y[i]);
                    }
                });
            }
            Op::Tanh(x) => {
                let y = out.data();
                self.acc(grads, *x, |gx| {
                    for i in 0..g.len() {
                        gx[i] = gx[i] + g[i] * (T::one() - y[i] * y[i]);
                    }
                });
            }
            Op::Relu(x) => {
                let xd = self.value(*x).data();
                self.acc(grads, *x, |gx| {
                    for i in 0..g.len() {
                        if xd[i] > T::zero() {
                            gx[i] = gx[i] + g[i];
                        }
                    }
                });
            }
            Op::Reshape(x) => self.acc(grads, *x, |gx| add_into(gx, g)),
            Op::GatherRows { src, rows } => {
                let m = out.cols();
                self.acc(grads, *src, |gs| {
                    for (i, &r) in rows.iter().enumerate() {
                        add_into(&mut gs[r * m..(r + 1) * m], &g[i * m..(i + 1) * m]);
                    }
                });
            }
            Op::SliceCols { src, start } => {
                let (len, m) = (out.cols(), self.value(*src).cols());
                self.acc(grads, *src, |gs| {
                    for (r, chunk) in g.chunks(len).enumerate() {
                        add_into(&mut gs[r * m + start..r * m + start + len], chunk);
                    }
                });
            }
            Op::Concat(parts) => {
                let width = out.cols();
                let rows = out.rows();
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).cols();
                    self.acc(grads, p, |gp| {
                        for r in 0..rows {
                            add_into(&mut gp[r * c..(r + 1) * c], &g[r * width + offset..r * width + offset + c]);
                        }
                    });
                    offset += c;
                }
            }
            Op::Conv1d { x, w, b, batch, len, k } => {
                let (batch, len, k) = (*batch, *len, *k);
                let cin = self.shape(*x)[2];
                let cout = out.cols();
                let pad = (k - 1) / 2;
                let (xd, wd) = (self.value(*x).data(), self.value(*w).data());
                self.acc(grads, *b, |gb| {
                    for chunk in g.chunks(cout) {
                        add_into(gb, chunk);
                    }
                });
                self.acc(grads, *w, |gw| {
                    for bi in 0..batch {
                        for t in 0..len {
                            let go = &g[(bi * len + t) * cout..(bi * len + t + 1) * cout];
                            for kk in 0..k {
                                let src = t as isize + kk as isize - pad as isize;
                                if src < 0 || src >= len as isize {
                                    continue;
                                }
                                let xrow = &xd[(bi * len + src as usize) * cin..(bi * len + src as usize + 1) * cin];
                                for (c, &xv) in xrow.iter().enumerate() {
                                    if xv == T::zero() {
                                        continue;
                                    }
                                    let wg = &mut gw[(kk * cin + c) * cout..(kk * cin + c + 1) * cout];
                                    wg.iter_mut().zip(go).for_each(|(o, &gv)| *o = *o + xv * gv);
                                }
                            }
                        }
                    }
                });
                self.acc(grads, *x, |gx| {
                    for bi in 0..batch {
                        for t in 0..len {
                            let go = &g[(bi * len + t) * cout..(bi * len + t + 1) * cout];
                            for kk in 0..k {
                                let src = t as isize + kk as isize - pad as isize;
                                if src < 0 || src >= len as isize {
                                    continue;
                                }
                                let base = (bi * len + src as usize) * cin;
                                for c in 0..cin {
                                    let wrow = &wd[(kk * cin + c) * cout..(kk * cin + c + 1) * cout];
                                    let s = wrow.iter().zip(go).fold(T::zero(), |a, (&wv, &gv)| a + wv * gv);
                                    gx[base + c] = gx[base + c] + s;
                                }
                            }
                        }
                    }
                });
            }
            Op::Softmax(x) => {
                let m = out.cols();
                let y = out.data();
                self.acc(grads, *x, |gx| {
                    for r in 0..out.rows() {
                        let yr = &y[r * m..(r + 1) * m];
                        let gr = &g[r * m..(r + 1) * m];
                        let dot = yr.iter().zip(gr).fold(T::zero(), |a, (&yv, &gv)| a + yv * gv);
                        for i in 0..m {
                            gx[r * m + i] = gx[r * m + i] + yr[i] * (gr[i] - dot);
                        }
                    }
                });
            }
            Op::WeightedSum { alpha, seq } => {
                let s = self.shape(*seq);
                let (b, t, d) = (s[0], s[1], s[2]);
                let (ad, sd) = (self.value(*alpha).data(), self.value(*seq).data());
                self.acc(grads, *alpha, |ga| {
                    for bi in 0..b {
                        let go = &g[bi * d..(bi + 1) * d];
                        for ti in 0..t {
                            let row = &sd[(bi * t + ti) * d..(bi * t + ti + 1) * d];
                            let dot = row.iter().zip(go).fold(T::zero(), |a, (&sv, &gv)| a + sv * gv);
                            ga[bi * t + ti] = ga[bi * t + ti] + dot;
                        }
                    }
                });
                self.acc(grads, *seq, |gs| {
                    for bi in 0..b {
                        let go = &g[bi * d..(bi + 1) * d];
                        for ti in 0..t {
                            let a = ad[bi * t + ti];
                            let row = &mut gs[(bi * t + ti) * d..(bi * t + ti + 1) * d];
                            row.iter_mut().zip(go).for_each(|(o, &gv)| *o = *o + a * gv);
                        }
                    }
                });
            }
            Op::AddPerSequence { x, ctx } => {
                let s = self.shape(*x);
                let (b, t, a) = (s[0], s[1], s[2]);
                self.acc(grads, *x, |gx| add_into(gx, g));
                self.acc(grads, *ctx, |gc| {
                    for bi in 0..b {
                        for ti in 0..t {
                            add_into(&mut gc[bi * a..(bi + 1) * a], &g[(bi * t + ti) * a..(bi * t + ti + 1) * a]);
                        }
                    }
                });
            }
            Op::Blend { new, old, keep } => {
                let m = out.cols();
                self.acc(grads, *new, |gn| {
                    for i in 0..g.len() {
                        gn[i] = gn[i] + keep[i / m] * g[i];
                    }
                });
                self.acc(grads, *old, |go| {
                    for i in 0..g.len() {
                        go[i] = go[i] + (T::one() - keep[i / m]) * g[i];
                    }
                });
            }
            Op::MaxOverTime { x, argmax } => {
                self.acc(grads, *x, |gx| {
                    for (i, &src) in argmax.iter().enumerate() {
                        gx[src] = gx[src] + g[i];
                    }
                });
            }
            Op::BatchNorm { x, inv_std } => {
                let f = out.cols();
                let n = out.rows();
                let nt = T::from_usize(n).unwrap();
                let xhat = out.data();
                let mut sum_g = vec![T::zero(); f];
                let mut sum_gx = vec![T::zero(); f];
                for i in 0..g.len() {
                    sum_g[i % f] = sum_g[i % f] + g[i];
                    sum_gx[i % f] = sum_gx[i % f] + g[i] * xhat[i];
                }
                self.acc(grads, *x, |gx| {
                    for i in 0..g.len() {
                        let j = i % f;
                        let s = inv_std[j];
                        gx[i] = gx[i]
                            + if s < T::zero() {
                                // floored variance: constant scale, only the mean depends on x
                                -s * (g[i] - sum_g[j] / nt)
                            } else {
                                s / nt * (nt * g[i] - sum_g[j] - xhat[i] * sum_gx[j])
                            };
                    }
                });
            }
            Op::Mse { pred, target } => {
                let n = T::from_usize(target.len()).unwrap();
                let pd = self.value(*pred).data();
                let two = T::one() + T::one();
                self.acc(grads, *pred, |gp| {
                    for i in 0..target.len() {
                        gp[i] = gp[i] + g[0] * two * (pd[i] - target[i]) / n;
                    }
                });
            }
            Op::Sum(x) => {
                self.acc(grads, *x, |gx| gx.iter_mut().for_each(|o| *o = *o + g[0]));
            }
        }
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d = *d + s);
}

pub(crate) fn sigmoid<T: Real>(a: T) -> T {
    if a >= T::zero() {
        T::one() / (T::one() + (-a).exp())
    } else {
        let e = a.exp();
        e / (T::one() + e)
    }
}

/// `[n, k] x [k, m]` row-major product.
pub(crate) fn matmul_raw<T: Real>(a: &[T], b: &[T], n: usize, k: usize, m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * m];
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for kk in 0..k {
            let av = a[i * k + kk];
            if av == T::zero() {
                continue;
            }
            let brow = &b[kk * m..(kk + 1) * m];
            orow.iter_mut().zip(brow).for_each(|(o, &bv)| *o = *o + av * bv);
        }
    }
    out
}
