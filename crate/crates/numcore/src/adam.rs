//! Bias-corrected Adam.

use crate::error::{shape_err, Result};
use crate::module::Module;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Default for Adam {
    fn default() -> Self {
        Self::new(0.9, 0.999, 1e-8)
    }
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn timestep(&self) -> u64 {
        self.t
    }

    /// Apply one update. Moments are allocated on the first call from the
    /// gradient shapes; later calls must present identical shapes.
    pub fn step<M: Module + ?Sized>(&mut self, params: &mut M, grads: &M, lr: f64) -> Result<()> {
        let mut gs: Vec<Tensor> = Vec::new();
        grads.visit(&mut |_, g| gs.push(g.clone()));
        if self.m.is_empty() {
            self.m = gs.iter().map(Tensor::zeros_like).collect();
            self.v = gs.iter().map(Tensor::zeros_like).collect();
        }
        if self.m.len() != gs.len() {
            return shape_err(format!(
                "optimizer tracks {} tensors, got {}",
                self.m.len(),
                gs.len()
            ));
        }
        let mut shapes_ok = true;
        let mut count = 0;
        params.visit(&mut |_, p| {
            shapes_ok &= count < gs.len() && p.shape() == gs[count].shape();
            count += 1;
        });
        if !shapes_ok || count != gs.len() {
            return shape_err("parameter and gradient shapes differ");
        }
        for (g, m) in gs.iter().zip(&self.m) {
            if g.shape() != m.shape() {
                return shape_err("gradient shape changed between steps");
            }
        }

        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let mut idx = 0;
        let (ms, vs) = (&mut self.m, &mut self.v);
        params.visit_mut(&mut |_, p| {
            let g = &gs[idx];
            let m = ms[idx].data_mut();
            let v = vs[idx].data_mut();
            for (k, w) in p.data_mut().iter_mut().enumerate() {
                let gk = g.data()[k];
                m[k] = b1 * m[k] + (1.0 - b1) * gk;
                v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            idx += 1;
        });
        Ok(())
    }
}
