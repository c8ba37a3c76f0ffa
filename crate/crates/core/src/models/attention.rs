use crate::nn::{glorot_uniform, NnError, ParamId, ParamStore, Real, Tape, Tensor, Var};
use crate::rng::RngStream;

/// Dense softmax over the gene panel that gates the panel elementwise.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneAttention {
    pub w: ParamId,
    pub b: ParamId,
    pub genes: usize,
}

impl GeneAttention {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, genes: usize, rng: &mut RngStream) -> Self {
        let w = store.add(format!("{name}.w"), glorot_uniform(vec![genes, genes], genes, genes, rng), true);
        let b = store.add(format!("{name}.b"), Tensor::zeros(vec![genes]), true);
        GeneAttention { w, b, genes }
    }
}

/// Returns `(alpha ⊙ g, alpha)` with `alpha = softmax(g W + b)`.
pub fn gene_attention_forward<T: Real>(tape: &mut Tape<'_, T>, layer: &GeneAttention, g: Var) -> Result<(Var, Var), NnError> {
    let s = tape.shape(g);
    if s.len() != 2 || s[1] != layer.genes {
        return Err(NnError::ShapeMismatch(format!("gene attention over {} genes got {s:?}", layer.genes)));
    }
    let (w, b) = (tape.param(layer.w), tape.param(layer.b));
    let logits = tape.matmul(g, w)?;
    let logits = tape.add_row(logits, b)?;
    let alpha = tape.softmax(logits, None)?;
    let filtered = tape.mul(alpha, g)?;
    Ok((filtered, alpha))
}

/// Token attention `u_i = V^T tanh(W_e s_i + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfAttention {
    pub w_e: ParamId,
    pub b: ParamId,
    pub v: ParamId,
    pub dim: usize,
}

impl SelfAttention {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, dim: usize, attention: usize, rng: &mut RngStream) -> Self {
        SelfAttention {
            w_e: store.add(format!("{name}.w_e"), glorot_uniform(vec![dim, attention], dim, attention, rng), true),
            b: store.add(format!("{name}.b"), Tensor::zeros(vec![attention]), true),
            v: store.add(format!("{name}.v"), glorot_uniform(vec![attention, 1], attention, 1, rng), true),
            dim,
        }
    }
}

/// Token attention with the projected gene context added to every token:
/// `u_i = V^T tanh(W_e s_i + W_g G)`. No bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextAttention {
    pub w_e: ParamId,
    pub w_g: ParamId,
    pub v: ParamId,
    pub dim: usize,
    pub genes: usize,
}

impl ContextAttention {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, dim: usize, genes: usize, attention: usize, rng: &mut RngStream) -> Self {
        ContextAttention {
            w_e: store.add(format!("{name}.w_e"), glorot_uniform(vec![dim, attention], dim, attention, rng), true),
            w_g: store.add(format!("{name}.w_g"), glorot_uniform(vec![genes, attention], genes, attention, rng), true),
            v: store.add(format!("{name}.v"), glorot_uniform(vec![attention, 1], attention, 1, rng), true),
            dim,
            genes,
        }
    }
}

fn sequence_dims<T: Real>(tape: &Tape<'_, T>, s: Var, dim: usize) -> Result<(usize, usize), NnError> {
    let shape = tape.shape(s);
    if shape.len() != 3 || shape[2] != dim {
        return Err(NnError::ShapeMismatch(format!("attention over width {dim} got {shape:?}")));
    }
    Ok((shape[0], shape[1]))
}

/// Scores [B, T, A] pre-activations into pooled [B, d] and alpha [B, T].
fn pool<T: Real>(tape: &mut Tape<'_, T>, s: Var, projected: Var, v: ParamId, pad_mask: Option<&[bool]>) -> Result<(Var, Var), NnError> {
    let shape = tape.shape(projected).to_vec();
    let (b, t, a) = (shape[0], shape[1], shape[2]);
    let h = tape.tanh(projected);
    let h = tape.reshape(h, vec![b * t, a])?;
    let v = tape.param(v);
    let u = tape.matmul(h, v)?;
    let u = tape.reshape(u, vec![b, t])?;
    let alpha = tape.softmax(u, pad_mask)?;
    let pooled = tape.weighted_sum(alpha, s)?;
    Ok((pooled, alpha))
}

/// `S` [B, T, d] -> `(Σ_i alpha_i s_i, alpha)`. `pad_mask` is `true` at pads.
pub fn self_attention_forward<T: Real>(
    tape: &mut Tape<'_, T>,
    layer: &SelfAttention,
    s: Var,
    pad_mask: Option<&[bool]>,
) -> Result<(Var, Var), NnError> {
    let (b, t) = sequence_dims(tape, s, layer.dim)?;
    let flat = tape.reshape(s, vec![b * t, layer.dim])?;
    let (w_e, bias) = (tape.param(layer.w_e), tape.param(layer.b));
    let proj = tape.matmul(flat, w_e)?;
    let proj = tape.add_row(proj, bias)?;
    let a = tape.shape(proj)[1];
    let proj = tape.reshape(proj, vec![b, t, a])?;
    pool(tape, s, proj, layer.v, pad_mask)
}

/// `S` [B, T, d] with context `G` [B, |G|] -> `(pooled, alpha)`.
pub fn contextual_attention_forward<T: Real>(
    tape: &mut Tape<'_, T>,
    layer: &ContextAttention,
    s: Var,
    context: Var,
    pad_mask: Option<&[bool]>,
) -> Result<(Var, Var), NnError> {
    let (b, t) = sequence_dims(tape, s, layer.dim)?;
    let cs = tape.shape(context);
    if cs != [b, layer.genes] {
        return Err(NnError::ShapeMismatch(format!("context {cs:?} for batch {b} and {} genes", layer.genes)));
    }
    let flat = tape.reshape(s, vec![b * t, layer.dim])?;
    let (w_e, w_g) = (tape.param(layer.w_e), tape.param(layer.w_g));
    let proj = tape.matmul(flat, w_e)?;
    let a = tape.shape(proj)[1];
    let proj = tape.reshape(proj, vec![b, t, a])?;
    let ctx = tape.matmul(context, w_g)?;
    let proj = tape.add_per_sequence(proj, ctx)?;
    pool(tape, s, proj, layer.v, pad_mask)
}
