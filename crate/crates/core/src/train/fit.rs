use std::collections::VecDeque;

use super::predict::normalized_predictions;
use super::{Checkpoint, TrainConfig, TrainError};
use crate::chem::mix_hash;
use crate::data::{Dataset, ExpressionTransform, Fold, LabelTransform, SampleRef};
use crate::models::{Model, ModelSpec};
use crate::nn::{adam_step, apply_stat_updates, AdamState, Mode, Real, Tape};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub step: u64,
    /// Mean training loss since the previous evaluation.
    pub train_loss: f64,
    /// Normalized-scale RMSE on the validation pairs (canonical SMILES).
    pub val_rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Best checkpoints by validation RMSE, best first; ties keep the
    /// earlier step.
    pub checkpoints: Vec<Checkpoint>,
    pub history: Vec<HistoryRow>,
}

pub fn history_csv(history: &[HistoryRow]) -> String {
    let mut s = String::from("step,train_loss,val_rmse\n");
    for r in history {
        s.push_str(&format!("{},{},{}\n", r.step, r.train_loss, r.val_rmse));
    }
    s
}

fn validation_rmse(model: &Model<f32>, expression: &ExpressionTransform, labels: &LabelTransform, ds: &Dataset, pairs: &[usize]) -> Result<f64, TrainError> {
    let pred = normalized_predictions(model, expression, ds, pairs, false)?;
    let truth = ds.targets(&Dataset::canonical(pairs), labels);
    let sse: f64 = pred.iter().zip(&truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / pairs.len() as f64).sqrt())
}

/// Keeps the `keep` lowest validation RMSEs; on equal RMSE the earlier
/// checkpoint ranks first.
fn retain_best(best: &mut Vec<Checkpoint>, candidate: Checkpoint, keep: usize) {
    let at = best.partition_point(|c| c.val_rmse.total_cmp(&candidate.val_rmse).is_le());
    if at < keep {
        best.insert(at, candidate);
        best.truncate(keep);
    }
}

/// Trains `spec` on the fold's training pairs with Adam on the MSE of
/// normalized labels. Transforms are fitted on the training pairs only.
/// Fully determined by `cfg.seed`. Batches of a single sample (possible as
/// the last batch of an epoch) are skipped since batch norm needs two rows.
pub fn train(spec: &ModelSpec, ds: &Dataset, fold: &Fold, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if fold.validation.is_empty() {
        return Err(TrainError::EmptyValidation);
    }
    let (labels, expression) = ds.fit_transforms(&fold.train)?;
    let mut model = Model::<f32>::new(spec.clone(), mix_hash(&[cfg.seed, 1]))?;
    let snapshot = |model: &Model<f32>, step: u64, val_rmse: f64| {
        Checkpoint::capture(model, step, val_rmse, cfg.seed, labels, expression.clone(), &ds.vocab, &ds.panel)
    };
    if cfg.max_steps == 0 {
        let rmse = validation_rmse(&model, &expression, &labels, ds, &fold.validation)?;
        return Ok(TrainOutcome { checkpoints: vec![snapshot(&model, 0, rmse)], history: Vec::new() });
    }

    let mut adam = AdamState::new(&model.store, cfg.schedule);
    let mut batch_rng = RngStream::new(cfg.seed).fork(2);
    let mut queue: VecDeque<Vec<SampleRef>> = VecDeque::new();
    let mut best = Vec::new();
    let mut history = Vec::new();
    let (mut loss_sum, mut loss_n) = (0.0, 0u64);
    for step in 1..=cfg.max_steps {
        if queue.is_empty() {
            queue = ds.batches(&fold.train, cfg.batch_size, cfg.augment, &mut batch_rng).into_iter().filter(|b| b.len() >= 2).collect();
            if queue.is_empty() {
                return Err(TrainError::NoTrainingBatches);
            }
        }
        let batch = queue.pop_front().expect("queue refilled above");
        let input = ds.input(spec, &batch, &expression)?;
        let targets = ds.targets(&batch, &labels);
        let (grads, stats, loss) = {
            let mut tape = Tape::new(&model.store, Mode::Train, mix_hash(&[cfg.seed, 3, step]));
            let (loss, _) = model.loss(&mut tape, &input, &targets)?;
            let value = tape.value(loss).data()[0].f64();
            if !value.is_finite() {
                return Err(TrainError::NonFiniteLoss { step });
            }
            (tape.backward(loss)?, tape.stat_updates().to_vec(), value)
        };
        adam_step(&mut model.store, &grads, &mut adam).map_err(|e| match e {
            crate::nn::NnError::NonFiniteGradient(_) => TrainError::NonFiniteLoss { step },
            e => e.into(),
        })?;
        apply_stat_updates(&mut model.store, &stats);
        loss_sum += loss;
        loss_n += 1;

        if step % cfg.eval_interval == 0 || step == cfg.max_steps {
            let val_rmse = validation_rmse(&model, &expression, &labels, ds, &fold.validation)?;
            let train_loss = loss_sum / loss_n as f64;
            log::info!("step {step}: train loss {train_loss:.6}, validation RMSE {val_rmse:.6}");
            history.push(HistoryRow { step, train_loss, val_rmse });
            (loss_sum, loss_n) = (0.0, 0);
            retain_best(&mut best, snapshot(&model, step, val_rmse), cfg.checkpoint_keep);
        }
    }
    Ok(TrainOutcome { checkpoints: best, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ExpressionTransform;
    use crate::models::ModelKind;

    fn ckpt(step: u64, val_rmse: f64) -> Checkpoint {
        Checkpoint {
            spec: ModelSpec::new(ModelKind::Dnn, 0, 1, 0),
            step,
            val_rmse,
            seed: 0,
            labels: LabelTransform { min: 0.0, max: 1.0 },
            expression: ExpressionTransform { mean: vec![0.0], std: vec![1.0] },
            vocab: Vec::new(),
            panel: vec!["G".into()],
            arrays: Vec::new(),
        }
    }

    #[test]
    fn best_k_keeps_smallest_with_earlier_ties() {
        let seen = [(1, 0.5), (2, 0.3), (3, 0.4), (4, 0.3), (5, 0.9), (6, 0.1), (7, 0.3)];
        let mut best = Vec::new();
        for (s, r) in seen {
            retain_best(&mut best, ckpt(s, r), 3);
        }
        let kept: Vec<u64> = best.iter().map(|c| c.step).collect();
        assert_eq!(kept, vec![6, 2, 4]);
    }
}
