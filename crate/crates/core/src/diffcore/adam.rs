use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
    step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl AdamState {
    pub fn new(params: &[&Tensor], learning_rate: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::InvalidShape(format!(
                "adam: {} params, {} grads, {} moments",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first_moment[i].shape() {
                return Err(Error::InvalidShape(format!("adam: tensor {i} shape mismatch")));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let lr = self.learning_rate;
        for ((p, g), (m, v)) in
            params.into_iter().zip(grads).zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            for (((pv, &gv), mv), vv) in
                p.values_mut().iter_mut().zip(g.values()).zip(m.values_mut()).zip(v.values_mut())
            {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                let decay = lr * self.weight_decay * *pv;
                *pv -= lr * mhat / (vhat.sqrt() + self.epsilon) + decay;
            }
        }
        Ok(())
    }
}
