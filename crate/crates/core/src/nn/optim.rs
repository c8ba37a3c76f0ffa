use super::params::ParamStore;
use super::tensor::{Real, Tensor};
use super::NnError;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Step-wise exponential decay: `initial * factor^(floor(step / interval))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub initial: f64,
    pub decay_factor: f64,
    pub decay_interval: u64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule { initial: 1e-3, decay_factor: 0.5, decay_interval: 10_000 }
    }
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        LrSchedule { initial: lr, decay_factor: 1.0, decay_interval: u64::MAX }
    }

    /// Learning rate for the update taking the counter from `step` to `step + 1`.
    pub fn rate(&self, step: u64) -> f64 {
        let k = step / self.decay_interval.max(1);
        self.initial * self.decay_factor.powi(k.min(i32::MAX as u64) as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub schedule: LrSchedule,
}

impl AdamState {
    pub fn new<T: Real>(store: &ParamStore<T>, schedule: LrSchedule) -> Self {
        let shapes: Vec<Vec<f64>> = store.iter().map(|(_, p)| vec![0.0; p.value.len()]).collect();
        AdamState {
            m: shapes.clone(),
            v: shapes,
            t: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
            schedule,
        }
    }
}

/// Bias-corrected Adam update of every trainable parameter that has a
/// gradient. Moments are kept in `f64`. A non-finite gradient refuses the
/// whole step (no parameter or moment changes).
pub fn adam_step<T: Real>(store: &mut ParamStore<T>, grads: &[Option<Tensor<T>>], state: &mut AdamState) -> Result<(), NnError> {
    if grads.len() != store.len() || state.m.len() != store.len() {
        return Err(NnError::ParamMismatch(format!(
            "{} gradients / {} moments for {} parameters",
            grads.len(),
            state.m.len(),
            store.len()
        )));
    }
    for (id, g) in store.ids().zip(grads) {
        if let Some(g) = g {
            if g.shape() != store.value(id).shape() {
                return Err(NnError::ParamMismatch(format!("gradient shape for {}", store.get(id).name)));
            }
            if g.data().iter().any(|x| !x.is_finite()) {
                return Err(NnError::NonFiniteGradient(store.get(id).name.clone()));
            }
        }
    }
    let lr = state.schedule.rate(state.t);
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (i, id) in store.ids().collect::<Vec<_>>().into_iter().enumerate() {
        if !store.get(id).trainable {
            continue;
        }
        let Some(g) = &grads[i] else { continue };
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, p) in store.value_mut(id).data_mut().iter_mut().enumerate() {
            let gj = g.data()[j].f64();
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            let mhat = m[j] / c1;
            let vhat = v[j] / c2;
            let update = lr * mhat / (vhat.sqrt() + eps);
            if update != 0.0 {
                *p = T::lit(p.f64() - update);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(vals: &[f64]) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("p", Tensor::from_f64(vec![vals.len()], vals), true);
        s
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut s = store(&[1.0, -2.0, 0.5]);
        let mut st = AdamState::new(&s, LrSchedule::constant(0.01));
        let g = Tensor::from_f64(vec![3], &[0.3, -4.0, 1e-3]);
        adam_step(&mut s, &[Some(g)], &mut st).unwrap();
        let d = s.value(crate::nn::ParamId(0)).data().to_vec();
        assert!((d[0] - (1.0 - 0.01)).abs() < 1e-9);
        assert!((d[1] - (-2.0 + 0.01)).abs() < 1e-9);
        assert!((d[2] - (0.5 - 0.01)).abs() < 1e-6);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut s = store(&[1.0, 2.0]);
        let before = s.clone();
        let mut st = AdamState::new(&s, LrSchedule::default());
        for _ in 0..3 {
            adam_step(&mut s, &[Some(Tensor::zeros(vec![2]))], &mut st).unwrap();
        }
        assert_eq!(s, before);
        assert_eq!(st.t, 3);
    }

    #[test]
    fn non_finite_refused() {
        let mut s = store(&[1.0]);
        let before = s.clone();
        let mut st = AdamState::new(&s, LrSchedule::default());
        let err = adam_step(&mut s, &[Some(Tensor::from_f64(vec![1], &[f64::NAN]))], &mut st);
        assert!(matches!(err, Err(NnError::NonFiniteGradient(_))));
        assert_eq!(s, before);
        assert_eq!(st.t, 0);
    }

    #[test]
    fn defaults_and_schedule() {
        let s = store(&[0.0]);
        let st = AdamState::new(&s, LrSchedule::default());
        assert_eq!((st.beta1, st.beta2, st.epsilon), (0.9, 0.999, 1e-8));
        let sch = LrSchedule::default();
        assert_eq!(sch.rate(0), 1e-3);
        assert_eq!(sch.rate(9_999), 1e-3);
        assert_eq!(sch.rate(10_000), 5e-4);
        assert_eq!(sch.rate(25_000), 2.5e-4);
    }
}
