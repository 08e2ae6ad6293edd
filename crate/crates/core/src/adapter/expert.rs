use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// One low-rank expert: `delta(x) = (alpha / rank) · up · (down · x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraExpert {
    down: Matrix,
    up: Matrix,
    alpha: f64,
}

impl LoraExpert {
    pub fn from_parts(down: Matrix, up: Matrix, alpha: f64) -> Result<Self> {
        if down.rows() == 0 || down.rows() != up.cols() {
            return Err(Error::shape(
                "LoraExpert",
                format!("down.rows = up.cols >= 1 (down.rows = {})", down.rows()),
                format!("up.cols = {}", up.cols()),
            ));
        }
        if !alpha.is_finite() {
            return Err(Error::Argument("alpha must be finite".into()));
        }
        Ok(LoraExpert { down, up, alpha })
    }

    /// `down ~ uniform(-1/sqrt(d_in), 1/sqrt(d_in))`, `up = 0`, so a fresh
    /// expert contributes exactly nothing.
    pub fn initialized<R: Rng + ?Sized>(
        d_in: usize,
        d_out: usize,
        rank: usize,
        alpha: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if rank == 0 || d_in == 0 || d_out == 0 {
            return Err(Error::Argument("expert dims and rank must be >= 1".into()));
        }
        let bound = 1.0 / (d_in as f64).sqrt();
        let down = Matrix::random_uniform(rank, d_in, bound, rng);
        LoraExpert::from_parts(down, Matrix::zeros(d_out, rank), alpha)
    }

    pub fn rank(&self) -> usize {
        self.down.rows()
    }

    pub fn d_in(&self) -> usize {
        self.down.cols()
    }

    pub fn d_out(&self) -> usize {
        self.up.rows()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn scale(&self) -> f64 {
        self.alpha / self.rank() as f64
    }

    pub fn down(&self) -> &Matrix {
        &self.down
    }

    pub fn up(&self) -> &Matrix {
        &self.up
    }

    pub(crate) fn factors_mut(&mut self) -> (&mut Matrix, &mut Matrix) {
        (&mut self.down, &mut self.up)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d_in() {
            return Err(Error::shape("expert_forward", self.d_in(), x.len()));
        }
        Ok(self.forward_parts(x).1)
    }

    /// Returns the rank-space projection `down · x` alongside the delta.
    pub(crate) fn forward_parts(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hidden = self.down.matvec_unchecked(x);
        let scale = self.scale();
        let delta = self
            .up
            .matvec_unchecked(&hidden)
            .into_iter()
            .map(|v| v * scale)
            .collect();
        (hidden, delta)
    }

    /// Backprop of a gradient on the delta. Accumulates factor gradients and
    /// returns the gradient with respect to `x`.
    pub(crate) fn backward(
        &self,
        x: &[f64],
        hidden: &[f64],
        grad_delta: &[f64],
        grad_down: &mut Matrix,
        grad_up: &mut Matrix,
    ) -> Vec<f64> {
        let scale = self.scale();
        let scaled: Vec<f64> = grad_delta.iter().map(|g| g * scale).collect();
        grad_up.add_outer(&scaled, hidden);
        let grad_hidden = self.up.matvec_t_unchecked(&scaled);
        grad_down.add_outer(&grad_hidden, x);
        self.down.matvec_t_unchecked(&grad_hidden)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_up_gives_zero_delta() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = LoraExpert::initialized(4, 6, 2, 16.0, &mut rng).unwrap();
        assert_eq!(e.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0; 6]);
    }

    #[test]
    fn hand_computed_rank_one() {
        // down·x = 1 + 2 = 3; up·[3] = [6, 0]; alpha/rank = 1
        let down = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let up = Matrix::from_rows(&[vec![2.0], vec![0.0]]).unwrap();
        let e = LoraExpert::from_parts(down, up, 1.0).unwrap();
        assert_eq!(e.forward(&[1.0, 2.0]).unwrap(), vec![6.0, 0.0]);
    }

    #[test]
    fn alpha_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let down = Matrix::random_uniform(3, 4, 1.0, &mut rng);
        let up = Matrix::random_uniform(5, 3, 1.0, &mut rng);
        let base = LoraExpert::from_parts(down.clone(), up.clone(), 3.0).unwrap();
        let doubled = LoraExpert::from_parts(down, up, 6.0).unwrap();
        let x = [0.1, 0.2, -0.3, 0.4];
        for (a, b) in base.forward(&x).unwrap().iter().zip(doubled.forward(&x).unwrap()) {
            assert!((2.0 * a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn shape_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = LoraExpert::initialized(4, 6, 2, 16.0, &mut rng).unwrap();
        assert!(matches!(e.forward(&[1.0]), Err(Error::Shape { .. })));
        assert!(LoraExpert::from_parts(Matrix::zeros(2, 3), Matrix::zeros(3, 1), 1.0).is_err());
    }
}
