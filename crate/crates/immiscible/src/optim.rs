//! Adam optimizer over the denoiser's weights and biases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DenoiserModel, Gradients};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    /// First/second moments, aligned with [weights..., biases...].
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl Adam {
    pub fn new(model: &DenoiserModel, config: AdamConfig) -> Self {
        let zeros_like = |ts: &[Tensor]| -> Vec<Tensor> {
            ts.iter().map(|t| Tensor::zeros(t.shape().to_vec()).unwrap()).collect()
        };
        let mut m = zeros_like(model.weights());
        m.extend(zeros_like(model.biases()));
        let v = m.clone();
        Self { config, m, v, t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.m, &self.v)
    }

    pub fn restore(&mut self, m_flat: &[f64], v_flat: &[f64], t: u64) -> Result<()> {
        let total: usize = self.m.iter().map(Tensor::numel).sum();
        if m_flat.len() != total || v_flat.len() != total {
            return Err(Error::ShapeMismatch(format!(
                "moment buffers have {}/{} values, expected {total}",
                m_flat.len(),
                v_flat.len()
            )));
        }
        let mut off = 0;
        for (mt, vt) in self.m.iter_mut().zip(&mut self.v) {
            let n = mt.numel();
            mt.data_mut().copy_from_slice(&m_flat[off..off + n]);
            vt.data_mut().copy_from_slice(&v_flat[off..off + n]);
            off += n;
        }
        self.t = t;
        Ok(())
    }

    pub fn step(&mut self, model: &mut DenoiserModel, grads: &Gradients) -> Result<()> {
        let n_layers = model.n_layers();
        if grads.weights.len() != n_layers || grads.biases.len() != n_layers {
            return Err(Error::ShapeMismatch("gradient layer count mismatch".into()));
        }
        self.t += 1;
        let bc1 = 1.0 - self.config.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.config.beta2.powi(self.t as i32);
        let AdamConfig { lr, beta1, beta2, eps } = self.config;

        let mut update = |param: &mut Tensor, grad: &Tensor, slot: usize| {
            let m = self.m[slot].data_mut();
            let v = self.v[slot].data_mut();
            for (((p, &g), mv), vv) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mv = beta1 * *mv + (1.0 - beta1) * g;
                *vv = beta2 * *vv + (1.0 - beta2) * g * g;
                let mh = *mv / bc1;
                let vh = *vv / bc2;
                *p -= lr * mh / (vh.sqrt() + eps);
            }
        };
        for (l, gw) in grads.weights.iter().enumerate() {
            update(&mut model.weights_mut()[l], gw, l);
        }
        for (l, gb) in grads.biases.iter().enumerate() {
            update(&mut model.biases_mut()[l], gb, n_layers + l);
        }
        Ok(())
    }
}
