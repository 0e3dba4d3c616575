//! Central finite differences against the analytic head gradients.

use std::collections::BTreeMap;

use super::encoder::Encoder;
use super::head::HeadParams;
use super::loss::{LossConfig, Triplet};
use super::train::{Encoded, Regressor};
use super::RegressorError;

/// Per-tensor relative error between analytic and numeric gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub errors: BTreeMap<String, f64>,
}

impl GradCheck {
    pub fn max_error(&self) -> f64 {
        self.errors.values().copied().fold(0.0, f64::max)
    }
}

/// `‖a − n‖ / max(‖a‖, ‖n‖)`; zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale < 1e-300 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn slot<'a>(head: &'a mut HeadParams, name: &str) -> &'a mut [f64] {
    match name {
        "pool.w" => &mut head.pool.w,
        "head.valence.weight" => &mut head.heads.w_v,
        "head.valence.bias" => std::slice::from_mut(&mut head.heads.b_v),
        "head.arousal.weight" => &mut head.heads.w_a,
        "head.arousal.bias" => std::slice::from_mut(&mut head.heads.b_a),
        _ => unreachable!("unknown head tensor {name}"),
    }
}

/// Compares the head gradients of one batch with central differences of step
/// `h`. Dropout is off, and the detached embeddings and triplet set of the
/// unperturbed forward pass are held fixed, matching what the analytic
/// gradient differentiates.
pub fn check_head_gradients<E: Encoder>(
    model: &mut Regressor<E>,
    batch: &[Encoded],
    cfg: &LossConfig,
    triplets: &[Triplet],
    h: f64,
) -> Result<GradCheck, RegressorError> {
    let (_, grads) = model.batch_gradients(batch, cfg, triplets, None)?;
    let (_, detached) = model.batch_loss(batch, cfg, triplets, None)?;

    let mut names = Vec::new();
    grads.head.for_each(|n, _| names.push(n.to_string()));
    let mut errors = BTreeMap::new();
    for name in names {
        let mut analytic = Vec::new();
        grads.head.for_each(|n, g| {
            if n == name {
                analytic = g.to_vec();
            }
        });
        let mut numeric = vec![0.0; analytic.len()];
        for (i, out) in numeric.iter_mut().enumerate() {
            let orig = slot(&mut model.head, &name)[i];
            slot(&mut model.head, &name)[i] = orig + h;
            let plus = model
                .batch_loss(batch, cfg, triplets, Some(&detached))?
                .0
                .total;
            slot(&mut model.head, &name)[i] = orig - h;
            let minus = model
                .batch_loss(batch, cfg, triplets, Some(&detached))?
                .0
                .total;
            slot(&mut model.head, &name)[i] = orig;
            *out = (plus - minus) / (2.0 * h);
        }
        errors.insert(name, relative_error(&analytic, &numeric));
    }
    Ok(GradCheck { errors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_basics() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((relative_error(&[1.0, 0.0], &[0.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!(relative_error(&[3.0, 4.0], &[3.0, 4.0 + 1e-9]) < 1e-9);
    }
}
