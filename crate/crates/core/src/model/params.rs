use std::collections::HashMap;

use crate::error::{config_err, shape_err, GrrnError, Result};
use crate::tensor::{Real, Tensor};

/// How a stored tensor participates in counting and optimization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamKind {
    /// Convolution, attention and PReLU parameters.
    Trainable,
    /// Batch-norm `gamma` and `beta`; stop updating once frozen.
    BatchNorm,
    /// Batch-norm moving statistics. Stored and checkpointed, never counted
    /// as learnable and never touched by the optimizer.
    Statistic,
}

impl ParamKind {
    pub fn tag(self) -> u8 {
        match self {
            ParamKind::Trainable => 0,
            ParamKind::BatchNorm => 1,
            ParamKind::Statistic => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(ParamKind::Trainable),
            1 => Some(ParamKind::BatchNorm),
            2 => Some(ParamKind::Statistic),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry<T: Real> {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor<T>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ParamCounts {
    pub trainable: usize,
    pub batchnorm: usize,
}

impl ParamCounts {
    pub fn total(&self) -> usize {
        self.trainable + self.batchnorm
    }
}

/// Ordered, uniquely named tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T: Real = f32> {
    entries: Vec<ParamEntry<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, kind: ParamKind, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(config_err!("duplicate parameter name {name:?}"));
        }
        let id = self.entries.len();
        self.index.insert(name.clone(), id);
        self.entries.push(ParamEntry { name, kind, value });
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry<T> {
        &self.entries[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    /// Replace a tensor, keeping its shape.
    pub fn set(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let e = &mut self.entries[id.0];
        if e.value.shape() != value.shape() {
            return Err(shape_err!(
                "parameter {}: shape {:?} cannot replace {:?}",
                e.name,
                value.shape(),
                e.value.shape()
            ));
        }
        e.value = value;
        Ok(())
    }

    /// Learnable scalars by kind; moving statistics are excluded.
    pub fn counts(&self) -> ParamCounts {
        let mut c = ParamCounts::default();
        for e in &self.entries {
            match e.kind {
                ParamKind::Trainable => c.trainable += e.value.len(),
                ParamKind::BatchNorm => c.batchnorm += e.value.len(),
                ParamKind::Statistic => {}
            }
        }
        c
    }

    /// Sum of element counts over entries whose name starts with `prefix`,
    /// excluding moving statistics.
    pub fn count_prefix(&self, prefix: &str) -> usize {
        self.entries
            .iter()
            .filter(|e| e.kind != ParamKind::Statistic && e.name.starts_with(prefix))
            .map(|e| e.value.len())
            .sum()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    kind: e.kind,
                    value: e.value.cast(),
                })
                .collect(),
            index: self.index.clone(),
        }
    }

    /// Name of the first tensor holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| !e.value.all_finite())
            .map(|e| e.name.as_str())
    }
}

/// One gradient tensor per store entry, in the same order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads<T: Real = f32> {
    tensors: Vec<Tensor<T>>,
}

impl<T: Real> ParamGrads<T> {
    pub fn zeros_like(store: &ParamStore<T>) -> Self {
        ParamGrads {
            tensors: store
                .entries
                .iter()
                .map(|e| Tensor::zeros(e.value.shape()))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn accumulate(&mut self, id: ParamId, g: &Tensor<T>) -> Result<()> {
        self.tensors[id.0].add_assign(g)
    }

    /// Global L2 norm over all gradients, in f64.
    pub fn global_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data())
            .map(|v| v.as_f64() * v.as_f64())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, k: T) {
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|v| *v *= k);
        }
    }

    /// Error naming the first non-finite gradient, if any.
    pub fn check_finite(&self, store: &ParamStore<T>) -> Result<()> {
        match self.tensors.iter().position(|t| !t.all_finite()) {
            Some(i) => Err(GrrnError::Numeric(format!(
                "non-finite gradient for parameter {}",
                store.entries[i].name
            ))),
            None => Ok(()),
        }
    }
}
