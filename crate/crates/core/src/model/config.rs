use serde::{Deserialize, Serialize};

use crate::adapter::AdapterConfig;
use crate::error::{Error, Result};

/// Shape of the frozen toy language model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub seed: u64,
}

impl Default for ToyModelConfig {
    fn default() -> Self {
        ToyModelConfig {
            vocab_size: 256,
            d_model: 64,
            n_layers: 2,
            n_heads: 2,
            d_ff: 128,
            max_seq_len: 256,
            seed: 0,
        }
    }
}

impl ToyModelConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("max_seq_len", self.max_seq_len),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be >= 1")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model ({}) must be divisible by n_heads ({})",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Optimizer and adapter settings for a fine-tuning run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub n_experts: usize,
    pub top_k: usize,
    pub rank: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            batch_size: 16,
            epochs: 2,
            n_experts: 8,
            top_k: 2,
            rank: 8,
            alpha: 16.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        self.adapter().validate()
    }

    pub fn adapter(&self) -> AdapterConfig {
        AdapterConfig {
            n_experts: self.n_experts,
            top_k: self.top_k,
            rank: self.rank,
            alpha: self.alpha,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let t = TrainConfig::default();
        assert_eq!(
            (t.lr, t.batch_size, t.epochs, t.n_experts, t.top_k),
            (1e-4, 16, 2, 8, 2)
        );
        let m = ToyModelConfig::default();
        assert_eq!(
            (m.d_model, m.n_layers, m.n_heads, m.d_ff, m.max_seq_len),
            (64, 2, 2, 128, 256)
        );
        assert!(m.validate().is_ok());
    }

    #[test]
    fn rejects_indivisible_heads() {
        let c = ToyModelConfig {
            d_model: 6,
            n_heads: 4,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let t = TrainConfig {
            top_k: 9,
            ..Default::default()
        };
        assert!(t.validate().is_err());
    }
}
