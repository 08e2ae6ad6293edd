//! Dense linear algebra, stable softmax, cosine similarity and Adam.
//!
//! Everything is 64-bit and row-major. Vectors are plain `[f64]` slices.

mod adam;
mod matrix;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use matrix::{matmul, Matrix};

use crate::error::{Error, Result};

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Scales `v` to unit L2 norm.
pub fn normalize(v: &[f64]) -> Result<Vec<f64>> {
    let norm = l2_norm(v);
    if !norm.is_finite() || norm <= 0.0 {
        return Err(Error::Degenerate(format!("cannot normalize vector with norm {norm}")));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// Gradients below this magnitude are compared in absolute terms: central
/// differences carry roughly `1e-16 / eps` of round-off, which swamps a true
/// relative comparison near zero.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-4;

/// `|a - b| / max(|a|, |b|, RELATIVE_ERROR_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::Argument("softmax of an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Argument("softmax input must be finite".into()));
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Cosine of the angle between `u` and `v`, clamped to [-1, 1].
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::shape("cosine_similarity", u.len(), v.len()));
    }
    let nu = l2_norm(u);
    let nv = l2_norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Degenerate("cosine similarity of a zero-norm vector".into()));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_examples() {
        let u = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for p in &u {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(softmax(&[42.0]).unwrap(), vec![1.0]);

        // exp-normalize by hand: e^-2, e^-1, 1 over their sum
        let s = 1.0 + (-1.0f64).exp() + (-2.0f64).exp();
        let expected = [(-2.0f64).exp() / s, (-1.0f64).exp() / s, 1.0 / s];
        let got = softmax(&[1.0, 2.0, 3.0]).unwrap();
        for (g, e) in got.iter().zip(expected) {
            assert!((g - e).abs() < 1e-15);
        }
        assert!((got[0] - 0.0900).abs() < 1e-4);
        assert!((got[1] - 0.2447).abs() < 1e-4);
        assert!((got[2] - 0.6652).abs() < 1e-4);
    }

    #[test]
    fn softmax_rejects_empty() {
        assert!(matches!(softmax(&[]), Err(Error::Argument(_))));
    }

    #[test]
    fn cosine_examples() {
        let u = [0.3, -1.2, 4.0];
        assert!((cosine_similarity(&u, &u).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 0.0]),
            Err(Error::Shape { .. })
        ));
    }

    fn finite_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-50.0f64..50.0, len)
    }

    proptest! {
        #[test]
        fn softmax_lies_on_simplex(v in prop::collection::vec(-700.0f64..700.0, 1..12)) {
            let p = softmax(&v).unwrap();
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(p.iter().all(|x| *x >= 0.0 && *x <= 1.0));
        }

        #[test]
        fn softmax_is_shift_invariant(v in finite_vec(6), c in -100.0f64..100.0) {
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let a = softmax(&v).unwrap();
            let b = softmax(&shifted).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn cosine_symmetric_and_scale_invariant(
            u in finite_vec(5),
            v in finite_vec(5),
            alpha in 0.01f64..100.0,
            beta in 0.01f64..100.0,
        ) {
            prop_assume!(l2_norm(&u) > 1e-3 && l2_norm(&v) > 1e-3);
            let c = cosine_similarity(&u, &v).unwrap();
            prop_assert!((-1.0..=1.0).contains(&c));
            prop_assert!((c - cosine_similarity(&v, &u).unwrap()).abs() <= 1e-12);
            let su: Vec<f64> = u.iter().map(|x| x * alpha).collect();
            let sv: Vec<f64> = v.iter().map(|x| x * beta).collect();
            prop_assert!((c - cosine_similarity(&su, &sv).unwrap()).abs() <= 1e-12);
        }
    }
}
