use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), values: vec![0.0; shape.iter().product()] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Named parameter tensors, kept in insertion order.
///
/// Shapes are fixed once an entry is created and every value stays finite:
/// updates that would produce a NaN/Inf are rejected before being written.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_zeros(&mut self, name: &str, shape: &[usize]) -> Result<()> {
        self.insert(name, Tensor::zeros(shape))
    }

    pub fn insert_uniform<R: Rng + ?Sized>(&mut self, name: &str, shape: &[usize], bound: f64, rng: &mut R) -> Result<()> {
        let mut t = Tensor::zeros(shape);
        for v in t.values.iter_mut() {
            *v = rng.gen_range(-bound..=bound);
        }
        self.insert(name, t)
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        if tensor.shape.is_empty() || tensor.shape.contains(&0) {
            return Err(Error::invalid("tensor shape must be a non-empty list of positive dimensions"));
        }
        if tensor.shape.iter().product::<usize>() != tensor.values.len() {
            return Err(Error::invalid("value count does not match shape"));
        }
        if tensor.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite parameter value"));
        }
        if self.index_of(name).is_some() {
            return Err(Error::invalid(alloc::format!("duplicate parameter name {name}")));
        }
        self.entries.push((name.to_string(), tensor));
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.entries[i].1)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn entry(&self, index: usize) -> &Tensor {
        &self.entries[index].1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Same name/shape sets, in any order.
    pub fn congruent(&self, other: &ParamStore) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().all(|(n, t)| other.get(n).is_some_and(|o| o.shape == t.shape))
    }

    pub fn congruent_grads(&self, grads: &GradStore) -> bool {
        self.congruent(&grads.0)
    }

    /// Redraw every value uniformly in `[-bound, bound]`, keeping shapes.
    pub fn fill_uniform<R: Rng + ?Sized>(&mut self, bound: f64, rng: &mut R) {
        for (_, t) in self.entries.iter_mut() {
            for v in t.values.iter_mut() {
                *v = rng.gen_range(-bound..=bound);
            }
        }
    }

    /// Overwrite a single scalar (finite-difference probes, tests).
    pub fn set_value(&mut self, entry: usize, offset: usize, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::invalid("non-finite parameter value"));
        }
        self.entries[entry].1.values[offset] = value;
        Ok(())
    }

    /// Flat view across all entries, in entry order.
    pub fn flat_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().flat_map(|(_, t)| t.values.iter().copied())
    }

    /// Bit-level fingerprint used to assert that a store was not touched.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (name, t) in &self.entries {
            for b in name.bytes() {
                h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
            }
            for v in &t.values {
                for b in v.to_bits().to_le_bytes() {
                    h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }

    /// `params += scale * grads`, rejected as a whole if any resulting value is
    /// non-finite or exceeds `max_abs` in magnitude.
    pub fn apply_step(&mut self, grads: &GradStore, scale: f64, max_abs: f64) -> Result<()> {
        if !self.congruent_grads(grads) {
            return Err(Error::Structural("gradient store is not congruent with parameters".into()));
        }
        let mut updated = Vec::with_capacity(self.entries.len());
        for (name, t) in &self.entries {
            let g = grads.get(name).expect("congruent");
            let mut values = t.values.clone();
            for (v, d) in values.iter_mut().zip(&g.values) {
                *v += scale * d;
                if !v.is_finite() || v.abs() > max_abs {
                    return Err(Error::Divergence(alloc::format!(
                        "parameter {name} left the finite range (|value| > {max_abs:e} or NaN)"
                    )));
                }
            }
            updated.push(values);
        }
        for ((_, t), values) in self.entries.iter_mut().zip(updated) {
            t.values = values;
        }
        Ok(())
    }
}

/// Gradient slots congruent with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradStore(ParamStore);

impl GradStore {
    pub fn zeros_like(params: &ParamStore) -> Self {
        let entries = params.entries.iter().map(|(n, t)| (n.clone(), Tensor::zeros(&t.shape))).collect();
        GradStore(ParamStore { entries })
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.0.get(name)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.0.entries()
    }

    pub(crate) fn entry_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.0.entries[index].1
    }

    pub fn entry(&self, index: usize) -> &Tensor {
        self.0.entry(index)
    }

    pub fn flat_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.flat_values()
    }

    pub fn zero(&mut self) {
        for (_, t) in self.0.entries.iter_mut() {
            t.values.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.flat_values().all(f64::is_finite)
    }

    pub fn add_scaled(&mut self, other: &GradStore, scale: f64) -> Result<()> {
        if !self.0.congruent(&other.0) {
            return Err(Error::Structural("gradient stores are not congruent".into()));
        }
        for (name, t) in self.0.entries.iter_mut() {
            let o = other.get(name).expect("congruent");
            for (a, b) in t.values.iter_mut().zip(&o.values) {
                *a += scale * b;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.0.entries.iter_mut() {
            t.values.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.flat_values().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.flat_values().map(|v| v * v).sum())
    }
}
