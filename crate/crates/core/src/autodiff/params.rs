use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::Array;
use crate::math::Real;
use crate::{Error, Result};

/// Handle into a [`ParameterStore`]; stable for the store's lifetime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named learnable arrays, each with a gradient accumulator of the same shape.
/// Iteration order is declaration order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterStore<T = f32> {
    names: Vec<String>,
    values: Vec<Array<T>>,
    grads: Vec<Array<T>>,
    index: BTreeMap<String, usize>,
}

impl<T: Real> Default for ParameterStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParameterStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, value: Array<T>) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::DuplicateParameter(name.to_string()));
        }
        let id = self.names.len();
        self.grads.push(Array::zeros(value.shape()));
        self.values.push(value);
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.index
            .get(name)
            .map(|&i| ParamId(i))
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Array<T> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array<T> {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Array<T> {
        &self.grads[id.0]
    }

    pub(crate) fn grad_mut(&mut self, id: ParamId) -> &mut Array<T> {
        &mut self.grads[id.0]
    }

    /// Replaces a value; the shape must not change.
    pub fn set_value(&mut self, id: ParamId, value: Array<T>) -> Result<()> {
        if value.shape() != self.values[id.0].shape() {
            return Err(Error::ShapeMismatch {
                op: "set_value",
                node: id.0,
                detail: alloc::format!(
                    "{} expects {:?}, got {:?}",
                    self.names[id.0],
                    self.values[id.0].shape(),
                    value.shape()
                ),
            });
        }
        self.values[id.0] = value;
        Ok(())
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.names.len()).map(ParamId)
    }

    pub fn ids_with_prefix(&self, prefix: &str) -> Vec<ParamId> {
        self.ids()
            .filter(|&id| self.names[id.0].starts_with(prefix))
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Array<T>)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(T::ZERO));
    }

    pub fn zero_grad_of(&mut self, ids: &[ParamId]) {
        for id in ids {
            self.grads[id.0].fill(T::ZERO);
        }
    }

    /// Same names and values in another float type, gradients zeroed.
    pub fn cast<U: Real>(&self) -> ParameterStore<U> {
        ParameterStore {
            names: self.names.clone(),
            values: self.values.iter().map(Array::cast).collect(),
            grads: self.grads.iter().map(|g| Array::zeros(g.shape())).collect(),
            index: self.index.clone(),
        }
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Array::len).sum()
    }

    /// Copies values of every parameter whose name starts with `prefix` from
    /// `other`, matching by name. Fails if a name or shape is missing.
    pub fn copy_values_from(&mut self, other: &ParameterStore<T>, prefix: &str) -> Result<usize> {
        let mut copied = 0;
        for id in self.ids_with_prefix(prefix) {
            let src = other.id(self.name(id))?;
            self.set_value(id, other.value(src).clone())?;
            copied += 1;
        }
        Ok(copied)
    }
}
