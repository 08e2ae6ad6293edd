use rand::Rng;

use super::AdaptedFfn;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// tanh-approximated GELU.
#[inline]
pub fn gelu(h: f64) -> f64 {
    0.5 * h * (1.0 + (GELU_C * (h + GELU_K * h * h * h)).tanh())
}

#[inline]
pub fn gelu_grad(h: f64) -> f64 {
    let t = (GELU_C * (h + GELU_K * h * h * h)).tanh();
    0.5 * (1.0 + t) + 0.5 * h * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * h * h)
}

/// Two-layer feed-forward block `W2 · gelu(W1 · x)`, never trained.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenFfn {
    w1: Matrix,
    w2: Matrix,
}

impl FrozenFfn {
    pub fn new(w1: Matrix, w2: Matrix) -> Result<Self> {
        if w1.rows() != w2.cols() || w1.cols() != w2.rows() {
            return Err(Error::shape(
                "FrozenFfn",
                format!("w1 d_ff×d_m, w2 d_m×d_ff (w1 is {:?})", w1.shape()),
                format!("w2 is {:?}", w2.shape()),
            ));
        }
        if w1.is_empty() {
            return Err(Error::Argument("FFN dims must be >= 1".into()));
        }
        Ok(FrozenFfn { w1, w2 })
    }

    pub fn random<R: Rng + ?Sized>(d_m: usize, d_ff: usize, rng: &mut R) -> Result<Self> {
        let w1 = Matrix::random_uniform(d_ff, d_m, 1.0 / (d_m as f64).sqrt(), rng);
        let w2 = Matrix::random_uniform(d_m, d_ff, 1.0 / (d_ff as f64).sqrt(), rng);
        FrozenFfn::new(w1, w2)
    }

    pub fn d_m(&self) -> usize {
        self.w1.cols()
    }

    pub fn d_ff(&self) -> usize {
        self.w1.rows()
    }

    pub fn w1(&self) -> &Matrix {
        &self.w1
    }

    pub fn w2(&self) -> &Matrix {
        &self.w2
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d_m() {
            return Err(Error::shape("ffn_forward", self.d_m(), x.len()));
        }
        let hidden: Vec<f64> = self.w1.matvec_unchecked(x).into_iter().map(gelu).collect();
        Ok(self.w2.matvec_unchecked(&hidden))
    }
}

/// The undecorated block has no trainable parameters.
impl AdaptedFfn for FrozenFfn {
    type Cache = (Vec<f64>, Vec<f64>);

    fn base(&self) -> &FrozenFfn {
        self
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        FrozenFfn::forward(self, x)
    }

    fn forward_cached(&self, x: &[f64]) -> Result<(Vec<f64>, Self::Cache)> {
        let y = FrozenFfn::forward(self, x)?;
        Ok((y, (x.to_vec(), self.w1.matvec_unchecked(x))))
    }

    fn backward(&self, cache: &Self::Cache, grad_y: &[f64], _grads: &mut [Matrix]) -> Result<Vec<f64>> {
        let grad_act = self.w2.matvec_t(grad_y)?;
        let grad_pre: Vec<f64> = grad_act.iter().zip(&cache.1).map(|(g, &h)| g * gelu_grad(h)).collect();
        self.w1.matvec_t(&grad_pre)
    }

    fn trainable(&self) -> Vec<&Matrix> {
        Vec::new()
    }

    fn trainable_mut(&mut self) -> Vec<&mut Matrix> {
        Vec::new()
    }

    fn trainable_names(&self) -> Vec<String> {
        Vec::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_grad_matches_central_difference() {
        for &h in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let eps = 1e-6;
            let fd = (gelu(h + eps) - gelu(h - eps)) / (2.0 * eps);
            assert!((fd - gelu_grad(h)).abs() < 1e-9, "h = {h}");
        }
    }

    #[test]
    fn rejects_mismatched_weights() {
        assert!(FrozenFfn::new(Matrix::zeros(4, 2), Matrix::zeros(3, 4)).is_err());
    }
}
