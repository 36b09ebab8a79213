use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::tensor::Tensor;
use crate::NeuralError;

static NEXT_STORE_UID: AtomicU64 = AtomicU64::new(1);

fn fresh_uid() -> u64 {
    NEXT_STORE_UID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub frozen: bool,
}

/// Initialization schemes for freshly registered parameters.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Ones,
    /// Uniform in `[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`.
    Xavier,
    /// Uniform in `[-a, a]`.
    Uniform(f64),
    /// Normal-ish (sum of uniforms) with the given standard deviation.
    Normal(f64),
}

impl Init {
    fn sample(self, rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
        match self {
            Init::Zeros => Tensor::zeros(rows, cols),
            Init::Ones => Tensor::filled(rows, cols, 1.0),
            Init::Xavier => {
                let a = (6.0 / (rows + cols) as f64).sqrt();
                Init::Uniform(a).sample(rows, cols, rng)
            }
            Init::Uniform(a) => {
                let data = (0..rows * cols).map(|_| rng.gen_range(-a..=a)).collect();
                Tensor::from_vec(rows, cols, data)
            }
            Init::Normal(std) => {
                // Irwin-Hall with 12 terms: mean 6, variance 1.
                let data = (0..rows * cols)
                    .map(|_| {
                        let s: f64 = (0..12).map(|_| rng.gen::<f64>()).sum();
                        (s - 6.0) * std
                    })
                    .collect();
                Tensor::from_vec(rows, cols, data)
            }
        }
    }
}

/// A named collection of parameters with per-parameter freeze flags.
///
/// Each store carries a process-unique id so a single [`crate::Graph`] can draw
/// parameters from several stores (a frozen base plus trainable adapters) and
/// route gradients back to the right one.
#[derive(Debug)]
pub struct ParamStore {
    uid: u64,
    params: Vec<Param>,
    index: HashMap<String, ParamId>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl Clone for ParamStore {
    fn clone(&self) -> Self {
        ParamStore {
            uid: fresh_uid(),
            params: self.params.clone(),
            index: self.index.clone(),
        }
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            uid: fresh_uid(),
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn uid(&self) -> u64 {
        self.uid
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "parameter `{}` registered twice",
            name
        );
        let id = ParamId(self.params.len());
        self.index.insert(name.clone(), id);
        self.params.push(Param {
            name,
            value,
            frozen: false,
        });
        id
    }

    pub fn add_init(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        init: Init,
        rng: &mut impl Rng,
    ) -> ParamId {
        let value = init.sample(rows, cols, rng);
        self.add(name, value)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.params[id.0].frozen
    }

    pub fn set_frozen(&mut self, id: ParamId, frozen: bool) {
        self.params[id.0].frozen = frozen;
    }

    pub fn freeze_all(&mut self) {
        for p in &mut self.params {
            p.frozen = true;
        }
    }

    pub fn unfreeze_all(&mut self) {
        for p in &mut self.params {
            p.frozen = false;
        }
    }

    /// Total number of scalar values.
    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn num_trainable_values(&self) -> usize {
        self.params
            .iter()
            .filter(|p| !p.frozen)
            .map(|p| p.value.len())
            .sum()
    }

    /// Named tensors in registration order.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect()
    }

    /// Overwrites values by name. Every parameter of the store must be present
    /// with a matching shape; extra entries in `named` are an error as well.
    pub fn load_named(&mut self, named: &[(String, Tensor)]) -> Result<(), NeuralError> {
        if named.len() != self.params.len() {
            return Err(NeuralError::Shape(format!(
                "expected {} tensors, got {}",
                self.params.len(),
                named.len()
            )));
        }
        for (name, tensor) in named {
            let id = self
                .id(name)
                .ok_or_else(|| NeuralError::UnknownParam(name.clone()))?;
            let slot = &mut self.params[id.0].value;
            if slot.shape() != tensor.shape() {
                return Err(NeuralError::Shape(format!(
                    "parameter `{}` has shape {:?}, file has {:?}",
                    name,
                    slot.shape(),
                    tensor.shape()
                )));
            }
            *slot = tensor.clone();
        }
        Ok(())
    }

    /// Little-endian bytes of every value in registration order.
    pub fn value_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.num_values() * 8);
        for p in &self.params {
            out.extend(p.value.to_le_bytes());
        }
        out
    }
}

/// Gradients produced by [`crate::Graph::backward`], keyed by store and parameter.
#[derive(Debug, Default, Clone)]
pub struct Gradients {
    map: HashMap<(u64, usize), Tensor>,
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, store: &ParamStore, id: ParamId) -> Option<&Tensor> {
        self.map.get(&(store.uid(), id.0))
    }

    pub(crate) fn accumulate(&mut self, key: (u64, usize), grad: Tensor) {
        match self.map.get_mut(&key) {
            Some(existing) => existing.add_assign(&grad),
            None => {
                self.map.insert(key, grad);
            }
        }
    }

    /// Adds every gradient of `other` into `self`.
    pub fn merge(&mut self, other: Gradients) {
        for (k, v) in other.map {
            self.accumulate(k, v);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.map.values_mut() {
            v.scale_assign(s);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Whether any gradient was recorded for a parameter of `store`.
    pub fn touches(&self, store: &ParamStore) -> bool {
        self.map.keys().any(|(uid, _)| *uid == store.uid())
    }

    pub fn global_norm(&self) -> f64 {
        let mut keys: Vec<_> = self.map.keys().copied().collect();
        keys.sort_unstable();
        keys.iter()
            .map(|k| self.map[k].data().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.map.values().all(Tensor::is_finite)
    }
}
