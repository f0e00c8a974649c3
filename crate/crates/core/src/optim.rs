//! AMSGrad optimizer shared by the generator and the discriminator.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmsgradConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AmsgradConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmsgradState {
    pub config: AmsgradConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Running elementwise maximum of `v`.
    pub v_max: Vec<f64>,
    pub t: u64,
}

impl AmsgradState {
    pub fn new(config: AmsgradConfig, n: usize) -> Self {
        Self {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            v_max: vec![0.0; n],
            t: 0,
        }
    }

    /// One update in place:
    ///
    /// ```text
    /// m <- b1 m + (1 - b1) g
    /// v <- b2 v + (1 - b2) g^2
    /// v_max <- max(v_max, v)
    /// p <- p - lr * (m / (1 - b1^t)) / (sqrt(v_max / (1 - b2^t)) + eps)
    /// ```
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape {
                expected: self.m.len(),
                got: if params.len() != self.m.len() {
                    params.len()
                } else {
                    grads.len()
                },
            });
        }
        if let Some(g) = grads.iter().find(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient {g}")));
        }
        let AmsgradConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            self.v_max[i] = self.v_max[i].max(self.v[i]);
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v_max[i] / bc2;
            params[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

/// Free-function form of [`AmsgradState::step`].
pub fn amsgrad_step(state: &mut AmsgradState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    state.step(params, grads)
}
