use crate::autodiff::{ParamId, ParamStore};
use crate::models::TrainState;

/// Adam with L2 regularization folded into the gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub l2: f64,
}

impl Adam {
    pub fn fresh_state(&self, ps: &ParamStore) -> TrainState {
        let zeros: Vec<Vec<f64>> = ps.iter().map(|(_, p)| vec![0.0; p.len()]).collect();
        TrainState { step: 0, epochs_done: 0, m: zeros.clone(), v: zeros }
    }

    /// One update of the listed parameters from their accumulated
    /// gradients. Gradients are left in place.
    pub fn step(&self, ps: &mut ParamStore, state: &mut TrainState, ids: &[ParamId]) {
        state.step += 1;
        let t = state.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for &id in ids {
            let p = ps.get_mut(id);
            let (m, v) = (&mut state.m[id.0], &mut state.v[id.0]);
            for k in 0..p.value.len() {
                let g = p.grad[k] + self.l2 * p.value[k];
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g * g;
                let mhat = m[k] / c1;
                let vhat = v[k] / c2;
                p.value[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}
