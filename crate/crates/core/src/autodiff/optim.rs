use alloc::vec::Vec;

use super::{Array, ParamId, ParameterStore};
use crate::math;

/// Adam over a fixed subset of a [`ParameterStore`].
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    step: u32,
    ids: Vec<ParamId>,
    m: Vec<Array>,
    v: Vec<Array>,
}

impl Adam {
    pub fn new(store: &ParameterStore, ids: Vec<ParamId>, lr: f32) -> Self {
        let m: Vec<Array> = ids
            .iter()
            .map(|&id| Array::zeros(store.value(id).shape()))
            .collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            v: m.clone(),
            m,
            ids,
        }
    }

    pub fn ids(&self) -> &[ParamId] {
        &self.ids
    }

    pub fn steps_taken(&self) -> u32 {
        self.step
    }

    /// Applies one update from the gradients currently in `store`.
    pub fn step(&mut self, store: &mut ParameterStore) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::powf(self.beta1, t as f32);
        let bc2 = 1.0 - libm::powf(self.beta2, t as f32);
        for (k, &id) in self.ids.iter().enumerate() {
            let grad = store.grad(id).data().to_vec();
            let (m, v) = (self.m[k].data_mut(), self.v[k].data_mut());
            let value = store.value_mut(id).data_mut();
            for i in 0..grad.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                value[i] -= self.lr * mhat / (math::sqrt(vhat) + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Graph, Inputs};

    #[test]
    fn zero_lr_leaves_parameters_untouched() {
        let mut store = ParameterStore::new();
        let id = store
            .insert("w", Array::from_vec(alloc::vec![1.0, -2.0, 0.5]))
            .unwrap();
        let before = store.clone();
        let mut g = Graph::new();
        let w = g.param(id);
        let sq = g.square(w);
        let l = g.sum(sq);
        g.forward(&store, &Inputs::new()).unwrap();
        g.backward(l, Array::scalar(1.0), &mut store).unwrap();
        let mut adam = Adam::new(&store, alloc::vec![id], 0.0);
        adam.step(&mut store);
        assert_eq!(store.value(id), before.value(id));
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut store = ParameterStore::new();
        let id = store
            .insert("w", Array::from_vec(alloc::vec![3.0, -4.0]))
            .unwrap();
        let mut adam = Adam::new(&store, alloc::vec![id], 0.1);
        let mut g = Graph::new();
        let w = g.param(id);
        let sq = g.square(w);
        let l = g.sum(sq);
        for _ in 0..300 {
            store.zero_grad();
            g.forward(&store, &Inputs::new()).unwrap();
            g.backward(l, Array::scalar(1.0), &mut store).unwrap();
            adam.step(&mut store);
        }
        assert!(store.value(id).data().iter().all(|v| v.abs() < 0.05));
    }
}
