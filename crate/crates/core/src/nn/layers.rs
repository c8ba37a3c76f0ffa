use super::params::{glorot_uniform, orthogonal, uniform, ParamId, ParamStore};
use super::tape::{Activation, Mode, StatUpdate, Tape, Var};
use super::tensor::{Real, Tensor};
use super::NnError;
use crate::rng::RngStream;

pub const BATCHNORM_MOMENTUM: f64 = 0.99;
pub const BATCHNORM_VARIANCE_FLOOR: f64 = 1e-5;
pub const EMBEDDING_INIT_BOUND: f64 = 0.05;

/// `activation(x W + b)` for `x` [N, in], `W` [in, out], `b` [out].
pub fn dense_forward<T: Real>(tape: &mut Tape<'_, T>, x: Var, w: Var, b: Var, act: Activation) -> Result<Var, NnError> {
    let h = tape.matmul(x, w)?;
    let h = tape.add_row(h, b)?;
    Ok(tape.activate(h, act))
}

/// Row gather of `table` [vocab, H] for `ids` laid out [batch, T]; returns [batch, T, H].
pub fn embedding_forward<T: Real>(tape: &mut Tape<'_, T>, ids: &[usize], batch: usize, table: Var) -> Result<Var, NnError> {
    let vocab = tape.value(table).rows();
    if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
        return Err(NnError::IndexOutOfVocab { id: bad, vocab });
    }
    if batch == 0 || ids.len() % batch != 0 {
        return Err(NnError::ShapeMismatch(format!("{} ids for batch {batch}", ids.len())));
    }
    let h = tape.value(table).cols();
    let g = tape.gather_rows(table, ids.to_vec())?;
    tape.reshape(g, vec![batch, ids.len() / batch, h])
}

/// Same-padding 1-D convolution followed by `act`.
pub fn conv1d_forward<T: Real>(tape: &mut Tape<'_, T>, x: Var, kernels: Var, bias: Var, act: Activation) -> Result<Var, NnError> {
    let y = tape.conv1d(x, kernels, bias)?;
    Ok(tape.activate(y, act))
}

/// Inverted dropout: in train mode keeps each entry with probability
/// `1 - p_drop` and rescales survivors by `1 / (1 - p_drop)`.
pub fn dropout_apply<T: Real>(tape: &mut Tape<'_, T>, x: Var, p_drop: f64) -> Result<Var, NnError> {
    if !(0.0..1.0).contains(&p_drop) {
        return Err(NnError::InvalidProbability(p_drop));
    }
    if tape.mode() == Mode::Eval || p_drop == 0.0 {
        return Ok(x);
    }
    let n = tape.value(x).len();
    let scale = T::lit(1.0 / (1.0 - p_drop));
    let mask: Vec<T> = (0..n)
        .map(|_| if tape.rng().bernoulli(p_drop) { T::zero() } else { scale })
        .collect();
    tape.mul_const(x, mask)
}

pub fn mse_loss<T: Real>(tape: &mut Tape<'_, T>, pred: Var, target: &[T]) -> Result<Var, NnError> {
    tape.mse(pred, target)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: ParamId,
    /// Absent when a following batch norm supplies the shift.
    pub b: Option<ParamId>,
    pub act: Activation,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, inputs: usize, outputs: usize, act: Activation, rng: &mut RngStream) -> Self {
        let w = store.add(format!("{name}.w"), glorot_uniform(vec![inputs, outputs], inputs, outputs, rng), true);
        let b = store.add(format!("{name}.b"), Tensor::zeros(vec![outputs]), true);
        Dense { w, b: Some(b), act, inputs, outputs }
    }

    pub fn without_bias<T: Real>(store: &mut ParamStore<T>, name: &str, inputs: usize, outputs: usize, act: Activation, rng: &mut RngStream) -> Self {
        let w = store.add(format!("{name}.w"), glorot_uniform(vec![inputs, outputs], inputs, outputs, rng), true);
        Dense { w, b: None, act, inputs, outputs }
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var, NnError> {
        let w = tape.param(self.w);
        match self.b {
            Some(b) => {
                let b = tape.param(b);
                dense_forward(tape, x, w, b, self.act)
            }
            None => {
                let h = tape.matmul(x, w)?;
                Ok(tape.activate(h, self.act))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub table: ParamId,
    pub dim: usize,
}

impl Embedding {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, vocab: usize, dim: usize, rng: &mut RngStream) -> Self {
        let table = store.add(format!("{name}.table"), uniform(vec![vocab, dim], EMBEDDING_INIT_BOUND, rng), true);
        Embedding { table, dim }
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, ids: &[usize], batch: usize) -> Result<Var, NnError> {
        let table = tape.param(self.table);
        embedding_forward(tape, ids, batch, table)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub width: usize,
    pub act: Activation,
}

impl Conv1d {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        width: usize,
        cin: usize,
        cout: usize,
        act: Activation,
        rng: &mut RngStream,
    ) -> Result<Self, NnError> {
        if width % 2 == 0 {
            return Err(NnError::EvenKernel(width));
        }
        let w = store.add(format!("{name}.w"), glorot_uniform(vec![width, cin, cout], width * cin, width * cout, rng), true);
        let b = store.add(format!("{name}.b"), Tensor::zeros(vec![cout]), true);
        Ok(Conv1d { w, b, width, act })
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var, NnError> {
        let (w, b) = (tape.param(self.w), tape.param(self.b));
        conv1d_forward(tape, x, w, b, self.act)
    }
}

/// Batch normalization over [N, F] with learnable scale and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNorm {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, features: usize) -> Self {
        BatchNorm {
            gamma: store.add(format!("{name}.gamma"), Tensor::filled(vec![features], T::one()), true),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(vec![features]), true),
            running_mean: store.add(format!("{name}.running_mean"), Tensor::zeros(vec![features]), false),
            running_var: store.add(format!("{name}.running_var"), Tensor::filled(vec![features], T::one()), false),
        }
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var, NnError> {
        let normalized = batchnorm_normalize(tape, x, self)?;
        let (gamma, beta) = (tape.param(self.gamma), tape.param(self.beta));
        let scaled = tape.mul_row(normalized, gamma)?;
        tape.add_row(scaled, beta)
    }
}

/// Normalization step of batch norm (before scale and shift). Train mode
/// uses batch statistics and records a running-stat update; eval mode uses
/// the running statistics.
pub fn batchnorm_normalize<T: Real>(tape: &mut Tape<'_, T>, x: Var, bn: &BatchNorm) -> Result<Var, NnError> {
    let floor = T::lit(BATCHNORM_VARIANCE_FLOOR);
    match tape.mode() {
        Mode::Train => {
            let (out, mean, var) = tape.batch_normalize(x, floor)?;
            tape.record_stat_update(StatUpdate {
                mean_id: bn.running_mean,
                var_id: bn.running_var,
                batch_mean: mean,
                batch_var: var,
            });
            Ok(out)
        }
        Mode::Eval => {
            let store = tape.store();
            let mean = store.value(bn.running_mean).data().to_vec();
            let var = store.value(bn.running_var).data();
            if tape.value(x).cols() != mean.len() {
                return Err(NnError::ShapeMismatch(format!("batch norm over {} features, input {:?}", mean.len(), tape.shape(x))));
            }
            let inv: Vec<T> = var.iter().map(|&v| T::one() / v.max(floor).sqrt()).collect();
            let shift: Vec<T> = mean.iter().zip(&inv).map(|(&m, &s)| -m * s).collect();
            let inv_v = tape.constant(Tensor::new(vec![inv.len()], inv));
            let shift_v = tape.constant(Tensor::new(vec![shift.len()], shift));
            let scaled = tape.mul_row(x, inv_v)?;
            tape.add_row(scaled, shift_v)
        }
    }
}

/// Applies recorded running-statistic updates:
/// `running = momentum * running + (1 - momentum) * batch`.
pub fn apply_stat_updates<T: Real>(store: &mut ParamStore<T>, updates: &[StatUpdate<T>]) {
    let m = T::lit(BATCHNORM_MOMENTUM);
    let one_m = T::one() - m;
    for u in updates {
        for (r, &b) in store.value_mut(u.mean_id).data_mut().iter_mut().zip(&u.batch_mean) {
            *r = m * *r + one_m * b;
        }
        for (r, &b) in store.value_mut(u.var_id).data_mut().iter_mut().zip(&u.batch_var) {
            *r = m * *r + one_m * b;
        }
    }
}

/// One direction of a GRU layer.
///
/// z = σ(x W_z + h U_z + b_z), r = σ(x W_r + h U_r + b_r),
/// h~ = tanh(x W_h + (r ⊙ h) U_h + b_h), h' = (1 - z) ⊙ h + z ⊙ h~.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    /// Input weights [in, 3H] for (z, r, h~).
    pub w: ParamId,
    pub b: ParamId,
    /// Recurrent weights for (z, r): [H, 2H].
    pub u_zr: ParamId,
    pub u_h: ParamId,
    pub hidden: usize,
}

impl GruCell {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, inputs: usize, hidden: usize, rng: &mut RngStream) -> Self {
        let mut wdata = Vec::with_capacity(inputs * 3 * hidden);
        let gates: Vec<Tensor<T>> = (0..3).map(|_| glorot_uniform(vec![inputs, hidden], inputs, hidden, rng)).collect();
        for i in 0..inputs {
            for g in &gates {
                wdata.extend_from_slice(&g.data()[i * hidden..(i + 1) * hidden]);
            }
        }
        let w = store.add(format!("{name}.w"), Tensor::new(vec![inputs, 3 * hidden], wdata), true);
        let b = store.add(format!("{name}.b"), Tensor::zeros(vec![3 * hidden]), true);
        let uz: Tensor<T> = orthogonal(hidden, rng);
        let ur: Tensor<T> = orthogonal(hidden, rng);
        let mut zr = Vec::with_capacity(hidden * 2 * hidden);
        for i in 0..hidden {
            zr.extend_from_slice(&uz.data()[i * hidden..(i + 1) * hidden]);
            zr.extend_from_slice(&ur.data()[i * hidden..(i + 1) * hidden]);
        }
        let u_zr = store.add(format!("{name}.u_zr"), Tensor::new(vec![hidden, 2 * hidden], zr), true);
        let u_h = store.add(format!("{name}.u_h"), orthogonal(hidden, rng), true);
        GruCell { w, b, u_zr, u_h, hidden }
    }

    /// Runs over `x` [B, T, in] in the given direction. Steps where `valid`
    /// [B, T] is false leave the state unchanged. Returns per-step states
    /// as [B, T, H] and the final state [B, H].
    pub fn run<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var, valid: &[bool], reverse: bool) -> Result<(Var, Var), NnError> {
        let s = tape.shape(x).to_vec();
        if s.len() != 3 || valid.len() != s[0] * s[1] {
            return Err(NnError::ShapeMismatch(format!("gru input {s:?} with mask of {}", valid.len())));
        }
        let (batch, len, inputs) = (s[0], s[1], s[2]);
        let hsz = self.hidden;
        let (w, b, u_zr, u_h) = (tape.param(self.w), tape.param(self.b), tape.param(self.u_zr), tape.param(self.u_h));
        let flat = tape.reshape(x, vec![batch * len, inputs])?;
        let projected = dense_forward(tape, flat, w, b, Activation::Linear)?;
        let mut h = tape.constant(Tensor::zeros(vec![batch, hsz]));
        let mut states = vec![h; len];
        let steps: Vec<usize> = if reverse { (0..len).rev().collect() } else { (0..len).collect() };
        for t in steps {
            let rows: Vec<usize> = (0..batch).map(|bi| bi * len + t).collect();
            let xt = tape.gather_rows(projected, rows)?;
            let x_zr = tape.slice_cols(xt, 0, 2 * hsz)?;
            let x_h = tape.slice_cols(xt, 2 * hsz, hsz)?;
            let h_zr = tape.matmul(h, u_zr)?;
            let zr_pre = tape.add(x_zr, h_zr)?;
            let zr = tape.sigmoid(zr_pre);
            let z = tape.slice_cols(zr, 0, hsz)?;
            let r = tape.slice_cols(zr, hsz, hsz)?;
            let rh = tape.mul(r, h)?;
            let rh_u = tape.matmul(rh, u_h)?;
            let cand_pre = tape.add(x_h, rh_u)?;
            let cand = tape.tanh(cand_pre);
            // h' = h + z ⊙ (h~ - h)
            let diff = tape.sub(cand, h)?;
            let step = tape.mul(z, diff)?;
            let next = tape.add(h, step)?;
            let keep: Vec<T> = (0..batch).map(|bi| if valid[bi * len + t] { T::one() } else { T::zero() }).collect();
            h = tape.blend(next, h, keep)?;
            states[t] = h;
        }
        let stacked = tape.concat(&states)?;
        let seq = tape.reshape(stacked, vec![batch, len, hsz])?;
        Ok((seq, h))
    }
}

/// Stacked bidirectional GRU.
#[derive(Debug, Clone, PartialEq)]
pub struct BiGru {
    pub layers: Vec<(GruCell, GruCell)>,
    pub hidden: usize,
}

impl BiGru {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, inputs: usize, hidden: usize, layers: usize, rng: &mut RngStream) -> Self {
        let mut out = Vec::with_capacity(layers);
        let mut width = inputs;
        for l in 0..layers {
            let f = GruCell::new(store, &format!("{name}.l{l}.fwd"), width, hidden, rng);
            let b = GruCell::new(store, &format!("{name}.l{l}.bwd"), width, hidden, rng);
            out.push((f, b));
            width = 2 * hidden;
        }
        BiGru { layers: out, hidden }
    }

    /// Returns `[B, 2 * hidden]`: the top layer's forward state after the
    /// last valid token, concatenated with its backward state at position 0.
    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var, pad_mask: &[bool]) -> Result<Var, NnError> {
        bigru_forward(tape, self, x, pad_mask)
    }
}

/// See [`BiGru::forward`]. `pad_mask` is `true` at (trailing) pad positions.
pub fn bigru_forward<T: Real>(tape: &mut Tape<'_, T>, gru: &BiGru, x: Var, pad_mask: &[bool]) -> Result<Var, NnError> {
    let valid: Vec<bool> = pad_mask.iter().map(|p| !p).collect();
    let mut input = x;
    let mut last = None;
    for (fwd, bwd) in &gru.layers {
        let (fseq, fend) = fwd.run(tape, input, &valid, false)?;
        let (bseq, bend) = bwd.run(tape, input, &valid, true)?;
        input = tape.concat(&[fseq, bseq])?;
        last = Some((fend, bend));
    }
    let (f, b) = last.ok_or_else(|| NnError::ShapeMismatch("bidirectional GRU without layers".into()))?;
    tape.concat(&[f, b])
}

/// Hidden dense block stack (dense -> batch norm -> sigmoid -> dropout) and
/// a final single linear neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseStack {
    pub blocks: Vec<(Dense, BatchNorm)>,
    pub output: Dense,
    pub p_drop: f64,
}

impl DenseStack {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, inputs: usize, sizes: &[usize], p_drop: f64, rng: &mut RngStream) -> Self {
        let mut blocks = Vec::new();
        let mut width = inputs;
        for (i, &s) in sizes.iter().enumerate() {
            let d = Dense::without_bias(store, &format!("{name}.{i}"), width, s, Activation::Linear, rng);
            let bn = BatchNorm::new(store, &format!("{name}.{i}.bn"), s);
            blocks.push((d, bn));
            width = s;
        }
        let output = Dense::new(store, &format!("{name}.out"), width, 1, Activation::Linear, rng);
        DenseStack { blocks, output, p_drop }
    }

    /// Returns predictions as a flat [N] tensor.
    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var, NnError> {
        let mut h = x;
        for (dense, bn) in &self.blocks {
            h = dense.forward(tape, h)?;
            h = bn.forward(tape, h)?;
            h = tape.sigmoid(h);
            h = dropout_apply(tape, h, self.p_drop)?;
        }
        let y = self.output.forward(tape, h)?;
        let n = tape.value(y).len();
        tape.reshape(y, vec![n])
    }
}
