use super::ffn::{gelu, gelu_grad, FrozenFfn};
use super::AdaptedFfn;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::rng;

/// Frozen FFN with a single low-rank update on its first projection and no
/// router: `y = W2 · gelu(W1·x + (alpha/rank) · B·A·x)`.
///
/// This is the plain LoRA baseline; a [`super::MoralLayer`] with one expert
/// and `top_k = 1` must train identically to it.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraLayer {
    base: FrozenFfn,
    down: Matrix,
    up: Matrix,
    alpha: f64,
}

#[derive(Debug, Clone)]
pub struct LoraCache {
    x: Vec<f64>,
    hidden: Vec<f64>,
    pre_activation: Vec<f64>,
}

impl LoraLayer {
    pub fn new(base: FrozenFfn, down: Matrix, up: Matrix, alpha: f64) -> Result<Self> {
        if down.rows() == 0 || down.rows() != up.cols() || down.cols() != base.d_m() || up.rows() != base.d_ff() {
            return Err(Error::shape(
                "LoraLayer",
                format!("down r×{}, up {}×r", base.d_m(), base.d_ff()),
                format!("down {:?}, up {:?}", down.shape(), up.shape()),
            ));
        }
        Ok(LoraLayer { base, down, up, alpha })
    }

    /// Same seeded stream as expert 0 of a MoRAL layer at this position.
    pub fn initialized(base: FrozenFfn, rank: usize, alpha: f64, seed: u64, layer: usize) -> Result<Self> {
        if rank == 0 {
            return Err(Error::Argument("rank must be >= 1".into()));
        }
        let mut rng = rng::stream(seed, &[rng::EXPERT, layer as u64, 0]);
        let bound = 1.0 / (base.d_m() as f64).sqrt();
        let down = Matrix::random_uniform(rank, base.d_m(), bound, &mut rng);
        let up = Matrix::zeros(base.d_ff(), rank);
        LoraLayer::new(base, down, up, alpha)
    }

    pub fn rank(&self) -> usize {
        self.down.rows()
    }

    fn scale(&self) -> f64 {
        self.alpha / self.rank() as f64
    }
}

impl AdaptedFfn for LoraLayer {
    type Cache = LoraCache;

    fn base(&self) -> &FrozenFfn {
        &self.base
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward_cached(x).map(|(y, _)| y)
    }

    fn forward_cached(&self, x: &[f64]) -> Result<(Vec<f64>, LoraCache)> {
        let hidden = self.down.matvec(x)?;
        let update = self.up.matvec(&hidden)?;
        let scale = self.scale();
        let mut pre_activation = self.base.w1().matvec(x)?;
        for (p, u) in pre_activation.iter_mut().zip(&update) {
            *p += u * scale;
        }
        let act: Vec<f64> = pre_activation.iter().map(|&h| gelu(h)).collect();
        let y = self.base.w2().matvec(&act)?;
        Ok((
            y,
            LoraCache {
                x: x.to_vec(),
                hidden,
                pre_activation,
            },
        ))
    }

    fn backward(&self, cache: &LoraCache, grad_y: &[f64], grads: &mut [Matrix]) -> Result<Vec<f64>> {
        if grads.len() != 2 {
            return Err(Error::shape("LoraLayer::backward buffers", 2, grads.len()));
        }
        let grad_act = self.base.w2().matvec_t(grad_y)?;
        let grad_pre: Vec<f64> = grad_act
            .iter()
            .zip(&cache.pre_activation)
            .map(|(g, &h)| g * gelu_grad(h))
            .collect();
        let mut grad_x = self.base.w1().matvec_t(&grad_pre)?;

        let scale = self.scale();
        let scaled: Vec<f64> = grad_pre.iter().map(|g| g * scale).collect();
        grads[1].add_outer(&scaled, &cache.hidden);
        let grad_hidden = self.up.matvec_t(&scaled)?;
        grads[0].add_outer(&grad_hidden, &cache.x);
        for (a, b) in grad_x.iter_mut().zip(self.down.matvec_t(&grad_hidden)?) {
            *a += b;
        }
        Ok(grad_x)
    }

    fn trainable(&self) -> Vec<&Matrix> {
        vec![&self.down, &self.up]
    }

    fn trainable_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.down, &mut self.up]
    }

    fn trainable_names(&self) -> Vec<String> {
        vec!["lora.down".into(), "lora.up".into()]
    }
}
