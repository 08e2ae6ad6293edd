use serde::Serialize;

use super::train::QaPair;
use super::transformer::ToyModel;
use crate::adapter::AdaptedFfn;
use crate::error::{Error, Result};
use crate::numerics::relative_error;
use crate::rng;

use rand::Rng;

/// Refuse audits above this many trainable scalars (two forward passes each).
pub const MAX_GRADCHECK_PARAMS: usize = 5_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradEntry {
    pub layer: usize,
    pub parameter: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub parameters_checked: usize,
    pub worst: Option<GradEntry>,
    /// Largest analytic gradient magnitude seen on any `up` factor.
    pub max_abs_up_gradient: f64,
}

/// Overwrites every trainable scalar with a seeded draw from
/// `U(-scale, scale)`, so audits see nonzero `up` factors.
pub fn randomize_adapters<F: AdaptedFfn>(model: &mut ToyModel<F>, scale: f64, seed: u64) {
    let mut r = rng::stream(seed, &[rng::PERTURB]);
    for ffn in model.ffns_mut() {
        for m in ffn.trainable_mut() {
            for v in m.as_mut_slice() {
                *v = if scale > 0.0 {
                    r.random_range(-scale..scale)
                } else {
                    0.0
                };
            }
        }
    }
}

/// Compares the analytic gradient of the mean answer-token loss against
/// central differences for every trainable scalar.
pub fn gradient_check<F: AdaptedFfn>(model: &ToyModel<F>, sample: &QaPair, epsilon: f64) -> Result<GradCheckReport> {
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(Error::Argument(format!("epsilon must be > 0, got {epsilon}")));
    }
    let total = model.trainable_count();
    if total > MAX_GRADCHECK_PARAMS {
        return Err(Error::Argument(format!(
            "model has {total} trainable parameters; gradient check is limited to {MAX_GRADCHECK_PARAMS}"
        )));
    }
    let (tokens, start) = sample.encode();
    let mut analytic = model.zero_grads();
    let (_, count) = model.answer_loss_and_grads(&tokens, start, &mut analytic)?;
    let inv = 1.0 / count as f64;

    let mut probe = model.clone();
    let loss_at = |probe: &ToyModel<F>| -> Result<f64> {
        let (l, c) = probe.answer_loss(&tokens, start)?;
        Ok(l / c as f64)
    };

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        parameters_checked: 0,
        worst: None,
        max_abs_up_gradient: 0.0,
    };
    for (layer, layer_grads) in analytic.iter().enumerate() {
        let names = model.ffns()[layer].trainable_names();
        for (p, name) in names.iter().enumerate() {
            let len = layer_grads[p].len();
            for idx in 0..len {
                let original = probe.ffns()[layer].trainable()[p].as_slice()[idx];
                probe.ffns_mut()[layer].trainable_mut()[p].as_mut_slice()[idx] = original + epsilon;
                let plus = loss_at(&probe)?;
                probe.ffns_mut()[layer].trainable_mut()[p].as_mut_slice()[idx] = original - epsilon;
                let minus = loss_at(&probe)?;
                probe.ffns_mut()[layer].trainable_mut()[p].as_mut_slice()[idx] = original;

                let numeric = (plus - minus) / (2.0 * epsilon);
                let a = layer_grads[p].as_slice()[idx] * inv;
                if name.ends_with(".up") {
                    report.max_abs_up_gradient = report.max_abs_up_gradient.max(a.abs());
                }
                let err = relative_error(a, numeric);
                report.parameters_checked += 1;
                if err > report.max_relative_error || report.worst.is_none() {
                    report.max_relative_error = report.max_relative_error.max(err);
                    report.worst = Some(GradEntry {
                        layer,
                        parameter: name.clone(),
                        index: idx,
                        analytic: a,
                        numeric,
                        relative_error: err,
                    });
                }
            }
        }
    }
    Ok(report)
}
