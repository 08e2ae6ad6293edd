use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{softmax, Matrix};

/// Linear router `W_g` (d_m × n); column `i` scores expert `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RouterNetwork {
    w_g: Matrix,
}

impl RouterNetwork {
    pub fn new(w_g: Matrix) -> Result<Self> {
        if w_g.cols() == 0 || w_g.rows() == 0 {
            return Err(Error::Argument("router needs d_m >= 1 and n >= 1".into()));
        }
        Ok(RouterNetwork { w_g })
    }

    pub fn initialized<R: Rng + ?Sized>(d_m: usize, n: usize, rng: &mut R) -> Result<Self> {
        let bound = 1.0 / (d_m.max(1) as f64).sqrt();
        RouterNetwork::new(Matrix::random_uniform(d_m, n, bound, rng))
    }

    pub fn d_m(&self) -> usize {
        self.w_g.rows()
    }

    pub fn n_experts(&self) -> usize {
        self.w_g.cols()
    }

    pub fn weights(&self) -> &Matrix {
        &self.w_g
    }

    pub(crate) fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.w_g
    }

    /// Router logits `W_gᵀ x`.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.w_g
            .matvec_t(x)
            .map_err(|_| Error::shape("gate", self.d_m(), x.len()))
    }

    /// Gating scores `softmax(W_gᵀ x)` over all experts.
    pub fn gate(&self, x: &[f64]) -> Result<Vec<f64>> {
        softmax(&self.logits(x)?)
    }
}

/// Result of top-k truncation of the gating scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatingDecision {
    /// `(expert index, renormalized weight)`, highest weight first.
    pub selected: Vec<(usize, f64)>,
    pub full_scores: Vec<f64>,
}

impl GatingDecision {
    pub fn weight_of(&self, expert: usize) -> f64 {
        self.selected
            .iter()
            .find(|(i, _)| *i == expert)
            .map_or(0.0, |(_, w)| *w)
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.selected.iter().map(|(i, _)| *i)
    }
}

/// Keeps the `k` largest scores and renormalizes them to sum to one.
/// Ties go to the lower expert index.
pub fn select_top_k(scores: &[f64], k: usize) -> Result<GatingDecision> {
    let n = scores.len();
    if k == 0 || k > n {
        return Err(Error::Argument(format!(
            "top-k needs 1 <= k <= n, got k = {k}, n = {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps lower indices first among equal scores
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    order.truncate(k);

    let selected = if k == n {
        order.into_iter().map(|i| (i, scores[i])).collect()
    } else {
        let kept: f64 = order.iter().map(|&i| scores[i]).sum();
        order.into_iter().map(|i| (i, scores[i] / kept)).collect()
    };
    Ok(GatingDecision {
        selected,
        full_scores: scores.to_vec(),
    })
}
