//! The six drug-sensitivity encoders. Each maps a compound (token ids or a
//! fingerprint) plus a gene-expression panel to one prediction on the
//! normalized IC50 scale, along with its attention weights.

mod attention;
mod encoders;
mod spec;

pub use attention::{
    contextual_attention_forward, gene_attention_forward, self_attention_forward, ContextAttention, GeneAttention, SelfAttention,
};
pub use encoders::{Architecture, ForwardVars, McaChannel};
pub use spec::{ModelKind, ModelSpec, DEFAULT_EMBEDDING, DEFAULT_P_DROP, DNN_LAYERS, SMILES_DENSE_LAYERS};

use crate::chem::{Fingerprint, TokenSequence};
use crate::nn::{mse_loss, Mode, NnError, ParamStore, Real, Tape, Tensor, Var};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("invalid model input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// A batch of model inputs, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub batch: usize,
    pub seq_len: usize,
    /// [batch, seq_len] token ids; empty for the fingerprint model.
    pub ids: Vec<usize>,
    /// [batch, seq_len], `true` at (trailing) pads.
    pub pad_mask: Vec<bool>,
    /// [batch, fingerprint width]; empty for SMILES models.
    pub fingerprints: Vec<f64>,
    /// [batch, panel].
    pub genes: Vec<f64>,
}

impl ModelInput {
    /// Token sequences must share one padded length.
    pub fn from_sequences(seqs: &[TokenSequence], genes: &[Vec<f64>]) -> Result<Self, ModelError> {
        let seq_len = seqs.first().map_or(0, |s| s.ids.len());
        if seqs.iter().any(|s| s.ids.len() != seq_len) {
            return Err(ModelError::InvalidInput("token sequences differ in padded length".into()));
        }
        Ok(ModelInput {
            batch: seqs.len(),
            seq_len,
            ids: seqs.iter().flat_map(|s| s.ids.iter().copied()).collect(),
            pad_mask: seqs.iter().flat_map(|s| s.pad_mask.iter().copied()).collect(),
            fingerprints: Vec::new(),
            genes: flatten(genes, seqs.len())?,
        })
    }

    pub fn from_fingerprints(fps: &[Fingerprint], genes: &[Vec<f64>]) -> Result<Self, ModelError> {
        Ok(ModelInput {
            batch: fps.len(),
            seq_len: 0,
            ids: Vec::new(),
            pad_mask: Vec::new(),
            fingerprints: fps.iter().flat_map(|f| f.to_dense::<u8>().into_iter().map(f64::from)).collect(),
            genes: flatten(genes, fps.len())?,
        })
    }

    /// Sub-batch made of the given rows, in that order.
    pub fn select(&self, rows: &[usize]) -> ModelInput {
        let take = |v: &[f64], w: usize| rows.iter().flat_map(|&r| v[r * w..(r + 1) * w].iter().copied()).collect::<Vec<_>>();
        let fp_w = if self.batch == 0 { 0 } else { self.fingerprints.len() / self.batch };
        let g_w = if self.batch == 0 { 0 } else { self.genes.len() / self.batch };
        let t = self.seq_len;
        ModelInput {
            batch: rows.len(),
            seq_len: t,
            ids: rows.iter().flat_map(|&r| self.ids[r * t..(r + 1) * t].iter().copied()).collect(),
            pad_mask: rows.iter().flat_map(|&r| self.pad_mask[r * t..(r + 1) * t].iter().copied()).collect(),
            fingerprints: take(&self.fingerprints, fp_w),
            genes: take(&self.genes, g_w),
        }
    }

    fn check(&self, spec: &ModelSpec) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidInput(m));
        if self.batch == 0 {
            return bad("empty batch".into());
        }
        if self.genes.len() != self.batch * spec.panel {
            return bad(format!("expected {} genes per row, got {} values for {} rows", spec.panel, self.genes.len(), self.batch));
        }
        if spec.kind.uses_smiles() {
            if self.seq_len == 0 || self.seq_len > spec.max_len {
                return bad(format!("sequence length {} outside 1..={}", self.seq_len, spec.max_len));
            }
            if self.ids.len() != self.batch * self.seq_len || self.pad_mask.len() != self.ids.len() {
                return bad("ids and pad mask do not match batch x length".into());
            }
            for row in self.pad_mask.chunks(self.seq_len) {
                if row[0] {
                    return bad("sequence without tokens".into());
                }
                if row.windows(2).any(|w| w[0] && !w[1]) {
                    return bad("pads must be trailing".into());
                }
            }
        } else if self.fingerprints.len() != self.batch * spec.fingerprint_width {
            return bad(format!("expected fingerprints of width {}", spec.fingerprint_width));
        }
        Ok(())
    }
}

fn flatten(rows: &[Vec<f64>], n: usize) -> Result<Vec<f64>, ModelError> {
    if rows.len() != n {
        return Err(ModelError::InvalidInput(format!("{} gene rows for {n} compounds", rows.len())));
    }
    Ok(rows.concat())
}

/// Eval-mode model output in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub prediction: Vec<f64>,
    /// [batch, panel]; absent for the fingerprint model.
    pub gene_attention: Option<Tensor<f64>>,
    /// [batch, heads, T] token attention for SA, CA and MCA.
    pub smiles_attention: Option<Tensor<f64>>,
}

/// An architecture together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T: Real> {
    pub spec: ModelSpec,
    pub arch: Architecture,
    pub store: ParamStore<T>,
}

impl<T: Real> Model<T> {
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self, ModelError> {
        spec.validate()?;
        let mut store = ParamStore::new();
        let mut rng = RngStream::new(seed);
        let arch = Architecture::build(&spec, &mut store, &mut rng)?;
        Ok(Model { spec, arch, store })
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model { spec: self.spec.clone(), arch: self.arch.clone(), store: self.store.cast() }
    }

    pub fn forward(&self, tape: &mut Tape<'_, T>, input: &ModelInput) -> Result<ForwardVars, ModelError> {
        input.check(&self.spec)?;
        self.arch.forward(&self.spec, tape, input)
    }

    /// Forward pass plus MSE against `targets`; returns `(loss, prediction)`.
    pub fn loss(&self, tape: &mut Tape<'_, T>, input: &ModelInput, targets: &[f64]) -> Result<(Var, Var), ModelError> {
        let out = self.forward(tape, input)?;
        let t: Vec<T> = targets.iter().map(|&v| T::lit(v)).collect();
        Ok((mse_loss(tape, out.prediction, &t)?, out.prediction))
    }

    /// Eval-mode inference.
    pub fn predict(&self, input: &ModelInput) -> Result<ForwardOutput, ModelError> {
        let mut tape = Tape::new(&self.store, Mode::Eval, 0);
        let out = self.forward(&mut tape, input)?;
        let prediction = tape.value(out.prediction).to_f64();
        let gene_attention = out.gene_attention.map(|v| tape.value(v).cast());
        let smiles_attention = if out.smiles_attention.is_empty() {
            None
        } else {
            let (b, t) = (input.batch, input.seq_len);
            let heads = out.smiles_attention.len();
            let mut data = vec![0.0; b * heads * t];
            for (h, &v) in out.smiles_attention.iter().enumerate() {
                for (i, x) in tape.value(v).data().iter().enumerate() {
                    let (bi, ti) = (i / t, i % t);
                    data[(bi * heads + h) * t + ti] = x.f64();
                }
            }
            Some(Tensor::new(vec![b, heads, t], data))
        };
        Ok(ForwardOutput { prediction, gene_attention, smiles_attention })
    }
}
