use std::path::Path;

use sha2::{Digest, Sha256};

use super::TrainError;
use crate::chem::Vocabulary;
use crate::data::{ExpressionTransform, LabelTransform};
use crate::models::{Model, ModelSpec};
use crate::nn::Tensor;

const MAGIC: &str = "pacc-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Trained parameters together with everything needed to predict: the
/// model spec, fitted transforms, vocabulary and gene panel. Batch-norm
/// running statistics travel with the other arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub step: u64,
    pub val_rmse: f64,
    pub seed: u64,
    pub labels: LabelTransform,
    pub expression: ExpressionTransform,
    pub vocab: Vec<String>,
    pub panel: Vec<String>,
    pub arrays: Vec<(String, Tensor<f32>)>,
}

fn corrupt(m: impl Into<String>) -> TrainError {
    TrainError::Checkpoint(m.into())
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("\t")
}

impl Checkpoint {
    #[allow(clippy::too_many_arguments)]
    pub fn capture(
        model: &Model<f32>,
        step: u64,
        val_rmse: f64,
        seed: u64,
        labels: LabelTransform,
        expression: ExpressionTransform,
        vocab: &Vocabulary,
        panel: &[String],
    ) -> Self {
        Checkpoint {
            spec: model.spec.clone(),
            step,
            val_rmse,
            seed,
            labels,
            expression,
            vocab: vocab.tokens().to_vec(),
            panel: panel.to_vec(),
            arrays: model.store.iter().map(|(_, p)| (p.name.clone(), p.value.clone())).collect(),
        }
    }

    pub fn model(&self) -> Result<Model<f32>, TrainError> {
        let mut model = Model::new(self.spec.clone(), 0)?;
        model.store.load_from(&self.arrays).map_err(|e| corrupt(e.to_string()))?;
        Ok(model)
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::from_tokens(self.vocab.iter().cloned())
    }

    /// Tab-separated manifest, `end`, the little-endian `f32` arrays, then
    /// the hex SHA-256 of everything before it.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut blob = Vec::new();
        let mut index = String::new();
        for (name, t) in &self.arrays {
            let dims = t.shape().iter().map(ToString::to_string).collect::<Vec<_>>().join("x");
            index.push_str(&format!("array\t{name}\t{dims}\t{}\t{}\n", blob.len(), t.len()));
            for v in t.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut m = format!("{MAGIC}\t{CHECKPOINT_VERSION}\n");
        m.push_str(&format!("step\t{}\nval_rmse\t{}\nseed\t{}\n", self.step, self.val_rmse, self.seed));
        m.push_str(&format!("label_range\t{}\t{}\n", self.labels.min, self.labels.max));
        for line in self.spec.to_config().lines() {
            m.push_str(&format!("spec\t{line}\n"));
        }
        m.push_str(&format!("vocab\t{}\n", join(&self.vocab)));
        m.push_str(&format!("panel\t{}\n", join(&self.panel)));
        m.push_str(&format!("expression_mean\t{}\n", join(&self.expression.mean)));
        m.push_str(&format!("expression_std\t{}\n", join(&self.expression.std)));
        m.push_str(&index);
        m.push_str(&format!("arrays_sha256\t{}\nend\n", hex::encode(Sha256::digest(&blob))));
        let mut out = m.into_bytes();
        out.extend_from_slice(&blob);
        let digest = hex::encode(Sha256::digest(&out));
        out.extend_from_slice(digest.as_bytes());
        out.push(b'\n');
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainError> {
        if bytes.len() < 65 {
            return Err(corrupt("file too short"));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 65);
        if trailer[..64] != *hex::encode(Sha256::digest(body)).as_bytes() || trailer[64] != b'\n' {
            return Err(corrupt("file checksum mismatch"));
        }
        let end = body.windows(5).position(|w| w == b"\nend\n").ok_or_else(|| corrupt("manifest terminator missing"))? + 5;
        let manifest = std::str::from_utf8(&body[..end]).map_err(|_| corrupt("manifest is not UTF-8"))?;
        let blob = &body[end..];

        let mut lines = manifest.lines();
        if lines.next() != Some(&format!("{MAGIC}\t{CHECKPOINT_VERSION}")) {
            return Err(corrupt("unsupported checkpoint version"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| corrupt(format!("bad number {s:?}")));
        let list = |rest: &[&str]| rest.iter().filter(|s| !s.is_empty()).map(|s| s.to_string()).collect::<Vec<_>>();
        let floats = |rest: &[&str]| rest.iter().filter(|s| !s.is_empty()).map(|s| num(s)).collect::<Result<Vec<_>, _>>();
        let (mut step, mut val_rmse, mut seed, mut labels) = (None, None, None, None);
        let (mut spec_text, mut vocab, mut panel, mut mean, mut std) = (String::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut arrays = Vec::new();
        let mut arrays_hash = None;
        for line in lines {
            let f: Vec<&str> = line.split('\t').collect();
            match f.as_slice() {
                ["step", v] => step = Some(v.parse::<u64>().map_err(|_| corrupt("bad step"))?),
                ["val_rmse", v] => val_rmse = Some(num(v)?),
                ["seed", v] => seed = Some(v.parse::<u64>().map_err(|_| corrupt("bad seed"))?),
                ["label_range", lo, hi] => labels = Some(LabelTransform { min: num(lo)?, max: num(hi)? }),
                ["spec", kv] => {
                    spec_text.push_str(kv);
                    spec_text.push('\n');
                }
                ["vocab", rest @ ..] => vocab = list(rest),
                ["panel", rest @ ..] => panel = list(rest),
                ["expression_mean", rest @ ..] => mean = floats(rest)?,
                ["expression_std", rest @ ..] => std = floats(rest)?,
                ["array", name, dims, offset, count] => {
                    let shape = dims
                        .split('x')
                        .filter(|d| !d.is_empty())
                        .map(|d| d.parse::<usize>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|_| corrupt("bad shape"))?;
                    let offset: usize = offset.parse().map_err(|_| corrupt("bad offset"))?;
                    let count: usize = count.parse().map_err(|_| corrupt("bad count"))?;
                    if shape.iter().product::<usize>() != count {
                        return Err(corrupt(format!("array {name}: shape and count disagree")));
                    }
                    let bytes = blob.get(offset..offset + 4 * count).ok_or_else(|| corrupt(format!("array {name} out of bounds")))?;
                    let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
                    arrays.push((name.to_string(), Tensor::new(shape, data)));
                }
                ["arrays_sha256", h] => arrays_hash = Some(h.to_string()),
                ["end"] => {}
                _ => return Err(corrupt(format!("unrecognized manifest line {line:?}"))),
            }
        }
        if arrays_hash.as_deref() != Some(hex::encode(Sha256::digest(blob)).as_str()) {
            return Err(corrupt("array checksum mismatch"));
        }
        let spec = ModelSpec::from_config(&spec_text)?;
        if mean.len() != panel.len() || std.len() != panel.len() {
            return Err(corrupt("expression transform does not match the panel"));
        }
        Ok(Checkpoint {
            spec,
            step: step.ok_or_else(|| corrupt("missing step"))?,
            val_rmse: val_rmse.ok_or_else(|| corrupt("missing val_rmse"))?,
            seed: seed.ok_or_else(|| corrupt("missing seed"))?,
            labels: labels.ok_or_else(|| corrupt("missing label_range"))?,
            expression: ExpressionTransform { mean, std },
            vocab,
            panel,
            arrays,
        })
    }

    /// Hex SHA-256 over manifest and arrays, as stored in the file trailer.
    pub fn hash(&self) -> String {
        let bytes = self.to_bytes();
        String::from_utf8_lossy(&bytes[bytes.len() - 65..bytes.len() - 1]).into_owned()
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let bytes = std::fs::read(path).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}
