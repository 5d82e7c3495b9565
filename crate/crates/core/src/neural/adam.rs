use serde::{Deserialize, Serialize};

use super::{ParamGrads, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Rows of embedding tables only move when they
/// receive a gradient.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        Adam {
            config,
            step: 0,
            m: store.iter().map(|p| vec![0.0; p.value.len()]).collect(),
            v: store.iter().map(|p| vec![0.0; p.value.len()]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update and consumes the gradients.
    pub fn update(&mut self, store: &mut ParamStore, grads: ParamGrads) {
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let lr_t = lr * (1.0 - beta2.powi(t)).sqrt() / (1.0 - beta1.powi(t));
        let apply = |m: &mut [f64], v: &mut [f64], w: &mut [f64], g: &[f64]| {
            for k in 0..g.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                w[k] -= lr_t * m[k] / (v[k].sqrt() + eps);
            }
        };
        for id in store.ids().collect::<Vec<_>>() {
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            let sparse = store.param(id).sparse;
            let rows = grads.row_grads(id);
            if sparse && grads.dense_grad(id).is_none() {
                let w = store.get_mut(id);
                let cols = w.cols;
                for (&r, g) in rows {
                    let span = r * cols..(r + 1) * cols;
                    apply(&mut m[span.clone()], &mut v[span.clone()], &mut w.data[span], g);
                }
            } else if grads.dense_grad(id).is_some() || !rows.is_empty() {
                let g = grads.full(id);
                apply(m, v, &mut store.get_mut(id).data, &g);
            }
        }
    }
}
