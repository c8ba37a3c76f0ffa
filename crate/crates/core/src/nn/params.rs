use std::collections::HashMap;

use super::tensor::{Real, Tensor};
use super::NnError;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    /// Running statistics are stored alongside weights but never optimized.
    pub trainable: bool,
}

/// Named parameter arrays in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    index: HashMap<String, ParamId>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new(), index: HashMap::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>, trainable: bool) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let id = ParamId(self.params.len());
        self.index.insert(name.clone(), id);
        self.params.push(Param { name, value, trainable });
        id
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Total number of trainable scalars.
    pub fn trainable_size(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    /// Replaces every array from `other`, which must hold the same names and shapes.
    pub fn load_from(&mut self, other: &[(String, Tensor<T>)]) -> Result<(), NnError> {
        if other.len() != self.params.len() {
            return Err(NnError::ParamMismatch(format!(
                "expected {} arrays, found {}",
                self.params.len(),
                other.len()
            )));
        }
        for (name, value) in other {
            let id = self
                .id(name)
                .ok_or_else(|| NnError::ParamMismatch(format!("unknown array {name}")))?;
            let slot = &mut self.params[id.0].value;
            if slot.shape() != value.shape() {
                return Err(NnError::ParamMismatch(format!(
                    "array {name}: shape {:?} vs {:?}",
                    value.shape(),
                    slot.shape()
                )));
            }
            *slot = value.clone();
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param { name: p.name.clone(), value: p.value.cast(), trainable: p.trainable })
                .collect(),
            index: self.index.clone(),
        }
    }
}

/// Glorot-uniform: `U(-b, b)` with `b = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Real>(shape: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut RngStream) -> Tensor<T> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(shape, bound, rng)
}

pub fn uniform<T: Real>(shape: Vec<usize>, bound: f64, rng: &mut RngStream) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.uniform_range(-bound, bound))).collect();
    Tensor::new(shape, data)
}

/// Square orthogonal matrix from modified Gram-Schmidt on a Gaussian draw.
pub fn orthogonal<T: Real>(n: usize, rng: &mut RngStream) -> Tensor<T> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        for c in &cols {
            let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(c).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        cols.push(v);
    }
    let mut data = vec![T::zero(); n * n];
    for (j, c) in cols.iter().enumerate() {
        for (i, &x) in c.iter().enumerate() {
            data[i * n + j] = T::lit(x);
        }
    }
    Tensor::new(vec![n, n], data)
}
