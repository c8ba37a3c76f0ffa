use super::params::ParamStore;
use super::tape::{Mode, Tape, Var};
use super::NnError;

pub const FINITE_DIFFERENCE_STEP: f64 = 1e-5;

/// Largest relative error per parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub entries: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.entries.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_error() < tolerance
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares tape gradients of the scalar built by `f` against central
/// finite differences for every trainable scalar of `store`. `f` must be
/// deterministic (each call gets a fresh tape with the same `mode` and seed).
pub fn grad_check<F>(store: &ParamStore<f64>, mode: Mode, seed: u64, f: F) -> Result<GradCheckReport, NnError>
where
    F: Fn(&mut Tape<'_, f64>) -> Result<Var, NnError>,
{
    let analytic = {
        let mut tape = Tape::new(store, mode, seed);
        let out = f(&mut tape)?;
        tape.backward(out)?
    };
    let eval = |s: &ParamStore<f64>| -> Result<f64, NnError> {
        let mut tape = Tape::new(s, mode, seed);
        let out = f(&mut tape)?;
        Ok(tape.value(out).data()[0])
    };
    let mut work = store.clone();
    let mut entries = Vec::new();
    for (id, p) in store.iter() {
        if !p.trainable {
            continue;
        }
        let mut worst: f64 = 0.0;
        for j in 0..p.value.len() {
            let orig = p.value.data()[j];
            work.value_mut(id).data_mut()[j] = orig + FINITE_DIFFERENCE_STEP;
            let up = eval(&work)?;
            work.value_mut(id).data_mut()[j] = orig - FINITE_DIFFERENCE_STEP;
            let down = eval(&work)?;
            work.value_mut(id).data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * FINITE_DIFFERENCE_STEP);
            let a = analytic[id.index()].as_ref().map_or(0.0, |g| g.data()[j]);
            worst = worst.max(relative_error(a, numeric));
        }
        entries.push((p.name.clone(), worst));
    }
    Ok(GradCheckReport { entries })
}
