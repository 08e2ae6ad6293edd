use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter Adam moments for one matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Matrix,
    pub second_moment: Matrix,
    pub step_count: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize, config: AdamConfig) -> Result<Self> {
        if !config.lr.is_finite() || config.lr <= 0.0 {
            return Err(Error::Argument(format!("learning rate must be > 0, got {}", config.lr)));
        }
        Ok(AdamState {
            first_moment: Matrix::zeros(rows, cols),
            second_moment: Matrix::zeros(rows, cols),
            step_count: 0,
            config,
        })
    }

    pub fn for_param(param: &Matrix, config: AdamConfig) -> Result<Self> {
        AdamState::new(param.rows(), param.cols(), config)
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut Matrix, grads: &Matrix, state: &mut AdamState) -> Result<()> {
    if params.shape() != grads.shape() || params.shape() != state.first_moment.shape() {
        return Err(Error::shape(
            "adam_step",
            format!("{:?}", params.shape()),
            format!("grads {:?}, state {:?}", grads.shape(), state.first_moment.shape()),
        ));
    }
    let AdamConfig {
        lr,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    state.step_count += 1;
    let t = state.step_count as i32;
    let bias1 = 1.0 - beta1.powi(t);
    let bias2 = 1.0 - beta2.powi(t);

    let m = state.first_moment.as_mut_slice();
    let v = state.second_moment.as_mut_slice();
    for (((p, &g), m), v) in params.as_mut_slice().iter_mut().zip(grads.as_slice()).zip(m).zip(v) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
    }
    Ok(())
}
