//! Low-rank experts, the softmax router with top-k selection, and the
//! composed MoRAL layer over a frozen feed-forward block.

mod checkpoint;
mod expert;
mod ffn;
mod layer;
mod lora;
mod router;

pub use checkpoint::{AdapterCheckpoint, ExpertJson, LayerJson, RouterJson};
pub use expert::LoraExpert;
pub use ffn::{gelu, gelu_grad, FrozenFfn};
pub use layer::{ExpertGradients, GradientSession, MoralCache, MoralGradients, MoralLayer};
pub use lora::{LoraCache, LoraLayer};
pub use router::{select_top_k, GatingDecision, RouterNetwork};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Hyper-parameters of the expert mixture attached to each FFN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdapterConfig {
    pub n_experts: usize,
    pub top_k: usize,
    pub rank: usize,
    pub alpha: f64,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        AdapterConfig {
            n_experts: 8,
            top_k: 2,
            rank: 8,
            alpha: 16.0,
        }
    }
}

impl AdapterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_experts == 0 || self.rank == 0 {
            return Err(Error::Config("n_experts and rank must be >= 1".into()));
        }
        if self.top_k == 0 || self.top_k > self.n_experts {
            return Err(Error::Config(format!(
                "top_k must be in 1..={}, got {}",
                self.n_experts, self.top_k
            )));
        }
        if !self.alpha.is_finite() {
            return Err(Error::Config("alpha must be finite".into()));
        }
        Ok(())
    }
}

/// A frozen FFN decorated with trainable parameters.
///
/// `trainable()`, `trainable_mut()` and the gradient buffers passed to
/// `backward` all share one ordering.
pub trait AdaptedFfn: Clone + Send + Sync {
    type Cache: Send;

    fn base(&self) -> &FrozenFfn;

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn forward_cached(&self, x: &[f64]) -> Result<(Vec<f64>, Self::Cache)>;

    /// Accumulates parameter gradients into `grads` and returns `∂L/∂x`.
    fn backward(&self, cache: &Self::Cache, grad_y: &[f64], grads: &mut [Matrix]) -> Result<Vec<f64>>;

    fn trainable(&self) -> Vec<&Matrix>;

    fn trainable_mut(&mut self) -> Vec<&mut Matrix>;

    fn trainable_names(&self) -> Vec<String>;

    fn zero_grads(&self) -> Vec<Matrix> {
        self.trainable()
            .iter()
            .map(|m| Matrix::zeros(m.rows(), m.cols()))
            .collect()
    }

    fn trainable_count(&self) -> usize {
        self.trainable().iter().map(|m| m.len()).sum()
    }
}
