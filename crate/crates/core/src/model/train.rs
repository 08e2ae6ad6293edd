use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::tokenizer::render_example;
use super::transformer::ToyModel;
use crate::adapter::AdaptedFfn;
use crate::error::{Error, Result};
use crate::numerics::{adam_step, AdamConfig, AdamState};
use crate::rng;

/// One supervised example; only answer tokens contribute to the loss.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
}

impl QaPair {
    pub fn new(question: impl Into<String>, answer: impl Into<String>) -> Self {
        QaPair {
            question: question.into(),
            answer: answer.into(),
        }
    }

    pub fn encode(&self) -> (Vec<usize>, usize) {
        render_example(&self.question, &self.answer)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Mean answer-token loss of each mini-batch, before its update.
    pub step_losses: Vec<f64>,
    /// Mean answer-token loss over the whole training set after each epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainOutcome {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (i, l) in self.step_losses.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, l));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Fine-tunes the adapters of `model` with Adam; frozen weights are never
/// touched. Mini-batches are drawn from a seeded permutation per epoch.
pub fn train<F: AdaptedFfn>(model: &mut ToyModel<F>, data: &[QaPair], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::Argument("training set is empty".into()));
    }
    if !cfg.lr.is_finite() || cfg.lr <= 0.0 || cfg.batch_size == 0 {
        return Err(Error::Config("train config needs lr > 0 and batch_size >= 1".into()));
    }
    let limit = model.config().max_seq_len;
    let examples: Vec<(Vec<usize>, usize)> = data
        .iter()
        .map(|pair| {
            let (tokens, start) = pair.encode();
            if tokens.len() - 1 > limit {
                return Err(Error::Input(format!(
                    "example of {} tokens exceeds max_seq_len {limit}: {:?}",
                    tokens.len() - 1,
                    pair.question
                )));
            }
            Ok((tokens, start))
        })
        .collect::<Result<_>>()?;

    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut states: Vec<Vec<AdamState>> = model
        .ffns()
        .iter()
        .map(|f| f.trainable().iter().map(|m| AdamState::for_param(m, adam)).collect())
        .collect::<Result<_>>()?;

    let mut outcome = TrainOutcome::default();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::stream(cfg.seed, &[rng::SHUFFLE, epoch as u64]));
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(Vec<usize>, usize)> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let (loss, grads) = model.batch_loss_and_grads(&batch)?;
            for ((ffn, layer_grads), layer_states) in model.ffns_mut().iter_mut().zip(&grads).zip(&mut states) {
                for ((param, grad), state) in ffn
                    .trainable_mut()
                    .into_iter()
                    .zip(layer_grads)
                    .zip(layer_states.iter_mut())
                {
                    adam_step(param, grad, state)?;
                }
            }
            outcome.step_losses.push(loss);
        }
        outcome.epoch_losses.push(dataset_loss(model, &examples)?);
    }
    Ok(outcome)
}

/// Mean answer-token loss over a dataset, without updating anything.
pub fn mean_loss<F: AdaptedFfn>(model: &ToyModel<F>, data: &[QaPair]) -> Result<f64> {
    let examples: Vec<(Vec<usize>, usize)> = data.iter().map(QaPair::encode).collect();
    dataset_loss(model, &examples)
}

fn dataset_loss<F: AdaptedFfn>(model: &ToyModel<F>, examples: &[(Vec<usize>, usize)]) -> Result<f64> {
    let parts: Vec<(f64, usize)> = examples
        .par_iter()
        .map(|(tokens, start)| model.answer_loss(tokens, *start))
        .collect::<Result<_>>()?;
    let (total, count) = parts.iter().fold((0.0, 0), |(t, c), (l, n)| (t + l, c + n));
    if count == 0 {
        return Err(Error::Argument("no answer tokens to score".into()));
    }
    Ok(total / count as f64)
}
