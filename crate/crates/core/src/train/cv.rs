use super::metrics::{metric_report, summarize, MetricReport, Summary};
use super::predict::ensemble_predict;
use super::{train, TrainConfig, TrainError, TrainOutcome};
use crate::data::{Dataset, SplitPlan};
use crate::models::ModelSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub outcome: TrainOutcome,
    /// Best-checkpoint ensemble scored on the fold's validation pairs.
    pub validation: MetricReport,
    /// Same ensemble on the plan's test pairs, when there are at least two.
    pub test: Option<MetricReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub rmse: Summary,
    pub rmse_log: Summary,
    pub pearson: Summary,
    pub r2: Summary,
}

fn run_fold(spec: &ModelSpec, ds: &Dataset, plan: &SplitPlan, cfg: &TrainConfig, k: usize) -> Result<FoldResult, TrainError> {
    let fold = &plan.folds[k];
    let outcome = train(spec, ds, fold, cfg)?;
    let labels = outcome.checkpoints[0].labels;
    let score = |pairs: &[usize]| -> Result<MetricReport, TrainError> {
        let pred = ensemble_predict(&outcome.checkpoints, ds, pairs, false)?;
        metric_report(&pred, &ds.labels(pairs), &labels)
    };
    let validation = score(&fold.validation)?;
    let test = if plan.test.len() >= 2 { Some(score(&plan.test)?) } else { None };
    Ok(FoldResult { fold: k, outcome, validation, test })
}

/// Trains every fold (up to `threads` at a time) and summarizes the
/// validation metrics by median and interquartile range. Results do not
/// depend on `threads`.
pub fn cross_validate(spec: &ModelSpec, ds: &Dataset, plan: &SplitPlan, cfg: &TrainConfig, threads: usize) -> Result<CvReport, TrainError> {
    if plan.folds.is_empty() {
        return Err(TrainError::InvalidConfig("split plan has no folds".into()));
    }
    let n = plan.folds.len();
    let threads = threads.clamp(1, n);
    let mut slots: Vec<Option<Result<FoldResult, TrainError>>> = vec![None; n];
    std::thread::scope(|scope| {
        for (t, chunk) in slots.chunks_mut(n.div_ceil(threads)).enumerate() {
            let base = t * n.div_ceil(threads);
            scope.spawn(move || {
                for (i, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(run_fold(spec, ds, plan, cfg, base + i));
                }
            });
        }
    });
    let folds = slots.into_iter().map(|s| s.expect("every fold ran")).collect::<Result<Vec<_>, _>>()?;
    let pick = |f: fn(&MetricReport) -> f64| summarize(&folds.iter().map(|r| f(&r.validation)).collect::<Vec<_>>());
    Ok(CvReport { rmse: pick(|m| m.rmse), rmse_log: pick(|m| m.rmse_log), pearson: pick(|m| m.pearson), r2: pick(|m| m.r2), folds })
}
