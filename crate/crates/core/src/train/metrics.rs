use super::TrainError;
use crate::data::LabelTransform;

/// Regression metrics. `r2` is NaN (and `constant_truth` set) when the truth
/// has no variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub rmse: f64,
    pub pearson: f64,
    pub r2: f64,
    pub count: usize,
    pub constant_truth: bool,
}

pub fn metrics(pred: &[f64], truth: &[f64]) -> Result<Metrics, TrainError> {
    if pred.len() != truth.len() {
        return Err(TrainError::LengthMismatch { pred: pred.len(), truth: truth.len() });
    }
    let n = pred.len();
    if n < 2 {
        return Err(TrainError::TooFewValues(n));
    }
    let nf = n as f64;
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    let mp = pred.iter().sum::<f64>() / nf;
    let mt = truth.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        sxy += (p - mp) * (t - mt);
        sxx += (p - mp) * (p - mp);
        syy += (t - mt) * (t - mt);
    }
    let constant_truth = syy == 0.0;
    Ok(Metrics {
        rmse: (sse / nf).sqrt(),
        pearson: (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0),
        r2: if constant_truth { f64::NAN } else { 1.0 - sse / syy },
        count: n,
        constant_truth,
    })
}

/// Metrics on both scales: `rmse` on the normalized training scale and
/// `rmse_log` on log-IC50. Correlation and R² are computed on log-IC50.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub rmse: f64,
    pub rmse_log: f64,
    pub pearson: f64,
    pub r2: f64,
    pub count: usize,
    pub constant_truth: bool,
}

pub fn metric_report(pred_log: &[f64], truth_log: &[f64], labels: &LabelTransform) -> Result<MetricReport, TrainError> {
    let log = metrics(pred_log, truth_log)?;
    let norm = |v: &[f64]| v.iter().map(|&x| labels.apply(x)).collect::<Vec<_>>();
    let scaled = metrics(&norm(pred_log), &norm(truth_log))?;
    Ok(MetricReport {
        rmse: scaled.rmse,
        rmse_log: log.rmse,
        pearson: log.pearson,
        r2: log.r2,
        count: log.count,
        constant_truth: log.constant_truth,
    })
}

/// Linear-interpolation quantile of sorted values.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub median: f64,
    /// Q3 - Q1.
    pub iqr: f64,
}

/// Median and IQR over the finite values.
pub fn summarize(values: &[f64]) -> Summary {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    Summary { median: quantile(&v, 0.5), iqr: quantile(&v, 0.75) - quantile(&v, 0.25) }
}

/// Mean that returns a shared value unchanged when all inputs are equal.
pub fn exact_mean(values: &[f64]) -> f64 {
    let first = values[0];
    first + values.iter().map(|&x| x - first).sum::<f64>() / values.len() as f64
}
