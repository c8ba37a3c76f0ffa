use super::attention::{
    contextual_attention_forward, gene_attention_forward, self_attention_forward, ContextAttention, GeneAttention, SelfAttention,
};
use super::spec::{ModelKind, ModelSpec};
use super::{ModelError, ModelInput};
use crate::nn::{Activation, BiGru, Conv1d, DenseStack, Embedding, ParamStore, Real, Tape, Tensor, Var};
use crate::rng::RngStream;

/// Graph nodes of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    /// [batch]
    pub prediction: Var,
    /// [batch, panel]
    pub gene_attention: Option<Var>,
    /// One [batch, T] distribution per attention head.
    pub smiles_attention: Vec<Var>,
}

/// One MCA channel: an optional convolution (absent for the residual
/// channel), its own gene attention and `m` contextual heads.
#[derive(Debug, Clone, PartialEq)]
pub struct McaChannel {
    pub conv: Option<Conv1d>,
    pub genes: GeneAttention,
    pub heads: Vec<ContextAttention>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Architecture {
    Dnn { stack: DenseStack },
    Brnn { embedding: Embedding, gru: BiGru, genes: GeneAttention, stack: DenseStack },
    Scnn { embedding: Embedding, convs: Vec<Conv1d>, genes: GeneAttention, stack: DenseStack },
    Sa { embedding: Embedding, attention: SelfAttention, genes: GeneAttention, stack: DenseStack },
    Ca { embedding: Embedding, attention: ContextAttention, genes: GeneAttention, stack: DenseStack },
    Mca { embedding: Embedding, channels: Vec<McaChannel>, stack: DenseStack },
}

impl Architecture {
    pub fn build<T: Real>(spec: &ModelSpec, store: &mut ParamStore<T>, rng: &mut RngStream) -> Result<Self, ModelError> {
        let (h, g) = (spec.embedding, spec.panel);
        let prefix = spec.kind.name().to_lowercase();
        let name = |part: &str| format!("{prefix}.{part}");
        let embedding = |store: &mut ParamStore<T>, rng: &mut RngStream| Embedding::new(store, &name("embedding"), spec.vocab, h, rng);
        let stack = |store: &mut ParamStore<T>, rng: &mut RngStream, inputs: usize| {
            DenseStack::new(store, &name("dense"), inputs, &spec.dense, spec.p_drop, rng)
        };
        Ok(match spec.kind {
            ModelKind::Dnn => Architecture::Dnn { stack: stack(store, rng, spec.fingerprint_width + g) },
            ModelKind::Brnn => {
                let embedding = embedding(store, rng);
                let gru = BiGru::new(store, &name("gru"), h, spec.rnn_hidden, spec.rnn_layers, rng);
                let genes = GeneAttention::new(store, &name("gene_attention"), g, rng);
                let stack = stack(store, rng, 2 * spec.rnn_hidden + g);
                Architecture::Brnn { embedding, gru, genes, stack }
            }
            ModelKind::Scnn => {
                let embedding = embedding(store, rng);
                let mut convs = Vec::new();
                let mut width = h;
                for (i, (&k, &c)) in spec.kernel_widths.iter().zip(&spec.scnn_channels).enumerate() {
                    convs.push(Conv1d::new(store, &name(&format!("conv{i}")), k, width, c, Activation::Sigmoid, rng)?);
                    width = c;
                }
                let genes = GeneAttention::new(store, &name("gene_attention"), g, rng);
                let stack = stack(store, rng, width + g);
                Architecture::Scnn { embedding, convs, genes, stack }
            }
            ModelKind::Sa => {
                let embedding = embedding(store, rng);
                let attention = SelfAttention::new(store, &name("attention"), h, spec.attention, rng);
                let genes = GeneAttention::new(store, &name("gene_attention"), g, rng);
                let stack = stack(store, rng, h + g);
                Architecture::Sa { embedding, attention, genes, stack }
            }
            ModelKind::Ca => {
                let embedding = embedding(store, rng);
                let attention = ContextAttention::new(store, &name("attention"), h, g, spec.attention, rng);
                let genes = GeneAttention::new(store, &name("gene_attention"), g, rng);
                let stack = stack(store, rng, h + g);
                Architecture::Ca { embedding, attention, genes, stack }
            }
            ModelKind::Mca => {
                let embedding = embedding(store, rng);
                let mut channels = Vec::new();
                let widths: Vec<Option<usize>> = spec.kernel_widths.iter().map(|&k| Some(k)).chain([None]).collect();
                for (c, width) in widths.into_iter().enumerate() {
                    let ch = name(&format!("channel{c}"));
                    let (conv, dim) = match width {
                        Some(k) => (Some(Conv1d::new(store, &format!("{ch}.conv"), k, h, spec.filters, Activation::Relu, rng)?), spec.filters),
                        None => (None, h),
                    };
                    let genes = GeneAttention::new(store, &format!("{ch}.gene_attention"), g, rng);
                    let heads = (0..spec.heads)
                        .map(|m| ContextAttention::new(store, &format!("{ch}.head{m}"), dim, g, spec.attention, rng))
                        .collect();
                    channels.push(McaChannel { conv, genes, heads });
                }
                let stack = stack(store, rng, spec.mca_concat_width() + g);
                Architecture::Mca { embedding, channels, stack }
            }
        })
    }

    pub fn forward<T: Real>(&self, spec: &ModelSpec, tape: &mut Tape<'_, T>, input: &ModelInput) -> Result<ForwardVars, ModelError> {
        let genes = tape.constant(Tensor::new(vec![input.batch, spec.panel], input.genes.iter().map(|&v| T::lit(v)).collect()));
        let attn_mask = spec.mask_pads.then_some(input.pad_mask.as_slice());
        let out = |prediction, gene_attention, smiles_attention| ForwardVars { prediction, gene_attention, smiles_attention };
        match self {
            Architecture::Dnn { stack } => {
                let w = spec.fingerprint_width;
                let mut x = Vec::with_capacity(input.batch * (w + spec.panel));
                for (fp, g) in input.fingerprints.chunks(w).zip(input.genes.chunks(spec.panel)) {
                    x.extend(fp.iter().chain(g).map(|&v| T::lit(v)));
                }
                let x = tape.constant(Tensor::new(vec![input.batch, w + spec.panel], x));
                Ok(out(stack.forward(tape, x)?, None, Vec::new()))
            }
            Architecture::Brnn { embedding, gru, genes: ga, stack } => {
                let e = embed(tape, embedding, input)?;
                let states = gru.forward(tape, e, &input.pad_mask)?;
                let (filtered, alpha) = gene_attention_forward(tape, ga, genes)?;
                let x = tape.concat(&[states, filtered])?;
                Ok(out(stack.forward(tape, x)?, Some(alpha), Vec::new()))
            }
            Architecture::Scnn { embedding, convs, genes: ga, stack } => {
                let mut s = embed(tape, embedding, input)?;
                for conv in convs {
                    s = conv.forward(tape, s)?;
                    s = zero_pads(tape, s, &input.pad_mask)?;
                }
                let pooled = tape.max_over_time(s, Some(&input.pad_mask))?;
                let (filtered, alpha) = gene_attention_forward(tape, ga, genes)?;
                let x = tape.concat(&[pooled, filtered])?;
                Ok(out(stack.forward(tape, x)?, Some(alpha), Vec::new()))
            }
            Architecture::Sa { embedding, attention, genes: ga, stack } => {
                let e = embed(tape, embedding, input)?;
                let (pooled, a) = self_attention_forward(tape, attention, e, attn_mask)?;
                let (filtered, alpha) = gene_attention_forward(tape, ga, genes)?;
                let x = tape.concat(&[pooled, filtered])?;
                Ok(out(stack.forward(tape, x)?, Some(alpha), vec![a]))
            }
            Architecture::Ca { embedding, attention, genes: ga, stack } => {
                let e = embed(tape, embedding, input)?;
                let (filtered, alpha) = gene_attention_forward(tape, ga, genes)?;
                let (pooled, a) = contextual_attention_forward(tape, attention, e, filtered, attn_mask)?;
                let x = tape.concat(&[pooled, filtered])?;
                Ok(out(stack.forward(tape, x)?, Some(alpha), vec![a]))
            }
            Architecture::Mca { embedding, channels, stack } => {
                let e = embed(tape, embedding, input)?;
                let mut pooled = Vec::new();
                let mut smiles = Vec::new();
                let mut alpha_sum: Option<Var> = None;
                let mut filtered_sum: Option<Var> = None;
                for ch in channels {
                    let s = match &ch.conv {
                        Some(conv) => conv.forward(tape, e)?,
                        None => e,
                    };
                    let (filtered, alpha) = gene_attention_forward(tape, &ch.genes, genes)?;
                    for head in &ch.heads {
                        let (p, a) = contextual_attention_forward(tape, head, s, filtered, attn_mask)?;
                        pooled.push(p);
                        smiles.push(a);
                    }
                    alpha_sum = Some(match alpha_sum {
                        Some(acc) => tape.add(acc, alpha)?,
                        None => alpha,
                    });
                    filtered_sum = Some(match filtered_sum {
                        Some(acc) => tape.add(acc, filtered)?,
                        None => filtered,
                    });
                }
                let inv = T::lit(1.0 / channels.len() as f64);
                let alpha = tape.affine(alpha_sum.expect("at least one channel"), inv, T::zero());
                let filtered = tape.affine(filtered_sum.expect("at least one channel"), inv, T::zero());
                pooled.push(filtered);
                let x = tape.concat(&pooled)?;
                Ok(out(stack.forward(tape, x)?, Some(alpha), smiles))
            }
        }
    }
}

/// Token embeddings with pad positions zeroed, so convolutions see the same
/// zeros at pads as beyond the sequence end.
fn embed<T: Real>(tape: &mut Tape<'_, T>, embedding: &Embedding, input: &ModelInput) -> Result<Var, ModelError> {
    let e = embedding.forward(tape, &input.ids, input.batch)?;
    zero_pads(tape, e, &input.pad_mask)
}

fn zero_pads<T: Real>(tape: &mut Tape<'_, T>, x: Var, pad_mask: &[bool]) -> Result<Var, ModelError> {
    let width = tape.value(x).cols();
    let mask: Vec<T> = pad_mask
        .iter()
        .flat_map(|&p| std::iter::repeat_n(if p { T::zero() } else { T::one() }, width))
        .collect();
    Ok(tape.mul_const(x, mask)?)
}
