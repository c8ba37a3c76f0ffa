use super::DataError;

pub const STD_FLOOR: f64 = 1e-8;

/// Min-max scaling of log-IC50 labels fitted on training labels. Values
/// outside the fitted range map outside [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelTransform {
    pub min: f64,
    pub max: f64,
}

impl LabelTransform {
    pub fn fit(labels: &[f64]) -> Result<Self, DataError> {
        let min = labels.iter().copied().fold(f64::INFINITY, f64::min);
        let max = labels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(DataError::DegenerateRange);
        }
        Ok(LabelTransform { min, max })
    }

    pub fn apply(&self, label: f64) -> f64 {
        (label - self.min) / (self.max - self.min)
    }

    pub fn invert(&self, normalized: f64) -> f64 {
        normalized * (self.max - self.min) + self.min
    }
}

/// Per-gene z-scoring fitted on training cells (population standard
/// deviation, floored).
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionTransform {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ExpressionTransform {
    pub fn fit(cells: &[&[f64]]) -> Result<Self, DataError> {
        if cells.len() < 2 {
            return Err(DataError::TooFewCells(cells.len()));
        }
        let n = cells.len() as f64;
        let genes = cells[0].len();
        let mut mean = vec![0.0; genes];
        for c in cells {
            mean.iter_mut().zip(*c).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; genes];
        for c in cells {
            var.iter_mut().zip(c.iter().zip(&mean)).for_each(|(s, (v, m))| *s += (v - m) * (v - m));
        }
        let std = var.into_iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
        Ok(ExpressionTransform { mean, std })
    }

    pub fn apply(&self, expression: &[f64]) -> Vec<f64> {
        expression.iter().zip(self.mean.iter().zip(&self.std)).map(|(v, (m, s))| (v - m) / s).collect()
    }
}
