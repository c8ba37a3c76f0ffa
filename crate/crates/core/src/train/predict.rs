use super::metrics::exact_mean;
use super::{Checkpoint, TrainError};
use crate::data::{Dataset, ExpressionTransform, SampleRef};
use crate::models::Model;

const EVAL_CHUNK: usize = 512;

/// Eval-mode predictions on the normalized label scale, one per pair. With
/// `augment_average` each pair is scored with every SMILES variant of its
/// drug and the scores are averaged.
pub fn normalized_predictions(
    model: &Model<f32>,
    expression: &ExpressionTransform,
    ds: &Dataset,
    pairs: &[usize],
    augment_average: bool,
) -> Result<Vec<f64>, TrainError> {
    let samples: Vec<SampleRef> = pairs
        .iter()
        .flat_map(|&pair| {
            let n = if augment_average && model.spec.kind.uses_smiles() { ds.variant_count(pair) } else { 1 };
            (0..n).map(move |variant| SampleRef { pair, variant })
        })
        .collect();
    let mut scores = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_CHUNK) {
        let input = ds.input(&model.spec, chunk, expression)?;
        scores.extend(model.predict(&input)?.prediction);
    }
    let mut out = Vec::with_capacity(pairs.len());
    let mut at = 0;
    for w in samples.chunk_by(|a, b| a.pair == b.pair && b.variant > a.variant) {
        out.push(exact_mean(&scores[at..at + w.len()]));
        at += w.len();
    }
    Ok(out)
}

fn check_compatible(ckpt: &Checkpoint, ds: &Dataset) -> Result<(), TrainError> {
    if ckpt.spec.kind.uses_smiles() && ckpt.vocab != ds.vocab.tokens() {
        return Err(TrainError::VocabMismatch);
    }
    if ckpt.panel != ds.panel {
        return Err(TrainError::PanelMismatch);
    }
    Ok(())
}

/// Predictions on the log-IC50 scale.
pub fn predict(ckpt: &Checkpoint, ds: &Dataset, pairs: &[usize], augment_average: bool) -> Result<Vec<f64>, TrainError> {
    check_compatible(ckpt, ds)?;
    let scores = normalized_predictions(&ckpt.model()?, &ckpt.expression, ds, pairs, augment_average)?;
    Ok(scores.into_iter().map(|s| ckpt.labels.invert(s)).collect())
}

/// Unweighted mean of member predictions on the normalized scale, inverted
/// with the shared label transform. Members fitted on different label
/// ranges are inverted individually and averaged on the log-IC50 scale.
pub fn ensemble_predict(ckpts: &[Checkpoint], ds: &Dataset, pairs: &[usize], augment_average: bool) -> Result<Vec<f64>, TrainError> {
    let first = ckpts.first().ok_or(TrainError::EmptyEnsemble)?;
    let shared = ckpts.iter().all(|c| c.labels == first.labels);
    let mut members = Vec::with_capacity(ckpts.len());
    for c in ckpts {
        check_compatible(c, ds)?;
        let scores = normalized_predictions(&c.model()?, &c.expression, ds, pairs, augment_average)?;
        members.push(if shared { scores } else { scores.into_iter().map(|s| c.labels.invert(s)).collect() });
    }
    Ok((0..pairs.len())
        .map(|i| {
            let m = exact_mean(&members.iter().map(|v| v[i]).collect::<Vec<_>>());
            if shared {
                first.labels.invert(m)
            } else {
                m
            }
        })
        .collect())
}
