use serde::{Deserialize, Serialize};

use super::DpError;
use crate::nn::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first: ParamSet,
    second: ParamSet,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        Self {
            config,
            first: ParamSet::zeros_like(params),
            second: ParamSet::zeros_like(params),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `params` along `grad`.
    pub fn step(
        &mut self,
        params: &mut ParamSet,
        grad: &ParamSet,
        learning_rate: f64,
    ) -> Result<(), DpError> {
        if !params.same_shape(grad) || !params.same_shape(&self.first) {
            return Err(DpError::Shape(
                "optimizer state, parameters and gradient differ in shape".into(),
            ));
        }
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);
        let tensors = params
            .tensors_mut()
            .iter_mut()
            .zip(grad.tensors())
            .zip(self.first.tensors_mut().iter_mut())
            .zip(self.second.tensors_mut().iter_mut());
        for (((p, g), m), v) in tensors {
            let values = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut());
            for (((p, &g), m), v) in values {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / correction1;
                let v_hat = *v / correction2;
                *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// Functional form: returns the updated state and parameters.
pub fn adam_step(
    mut state: AdamState,
    mut params: ParamSet,
    grad: &ParamSet,
    learning_rate: f64,
) -> Result<(AdamState, ParamSet), DpError> {
    state.step(&mut params, grad, learning_rate)?;
    Ok((state, params))
}
