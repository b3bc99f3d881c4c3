use serde::{Deserialize, Serialize};

use super::params::{ParamStore, Tensor};
use super::tape::Gradients;

/// Adam with L2 weight decay folded into the gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamSettings {
    pub lr: f64,
    pub weight_decay: f64,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Tensor> = store
            .ids()
            .map(|id| Tensor::zeros(store.get(id).dim()))
            .collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, store: &mut ParamStore, grads: &Gradients) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let Some(g) = grads.get(id) else { continue };
            let i = id.0;
            let p = store.get_mut(id);
            let (b1, b2, wd) = (self.beta1, self.beta2, self.weight_decay);
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            ndarray::Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    let g = g + wd * *p;
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let mh = *m / bc1;
                    let vh = *v / bc2;
                    *p -= self.lr * mh / (vh.sqrt() + self.eps);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tape::Tape;

    #[test]
    fn adam_minimizes_quadratic() {
        let mut store = ParamStore::new();
        let id = store.insert("x", Tensor::from_elem((1, 2), 3.0));
        let mut opt = Adam::new(&store, 0.1, 0.0);
        for _ in 0..500 {
            let grads = {
                let mut t = Tape::new(&store);
                let x = t.param(id);
                let s = t.square(x);
                let l = t.sum(s);
                t.backward(l)
            };
            opt.update(&mut store, &grads);
        }
        assert!(store.get(id).iter().all(|v| v.abs() < 1e-2));
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut store = ParamStore::new();
        let id = store.insert("x", Tensor::from_elem((1, 1), 1.0));
        let mut opt = Adam::new(&store, 0.01, 0.0);
        let grads = {
            let mut t = Tape::new(&store);
            let x = t.param(id);
            let l = t.sum(x);
            t.backward(l)
        };
        opt.update(&mut store, &grads);
        assert!((store.get(id)[[0, 0]] - 0.99).abs() < 1e-9);
    }
}
