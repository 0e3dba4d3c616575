//! Composite training objective:
//! `(1-β)·[γ·MSE + (1-γ)·(1 - CCC)] + β·triplet`, all in normalized VA space.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RegressorError;
use crate::metrics::{ccc_from_moments, weighted_ccc, MomentStats};
use crate::model::NormalizedVA;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// MSE share of the base loss.
    pub gamma: f64,
    /// Triplet share of the final objective.
    pub beta: f64,
    pub lambda_v: f64,
    pub lambda_a: f64,
    pub margin: f64,
    /// Normalized-VA distance at or below which a sample is a positive.
    pub pos_radius: f64,
    /// Distance strictly above which a sample is a negative.
    pub neg_radius: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            gamma: 0.3,
            beta: 0.05,
            lambda_v: 0.3,
            lambda_a: 0.7,
            margin: 0.2,
            pos_radius: 0.1,
            neg_radius: 0.4,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), RegressorError> {
        let unit = |name: &str, x: f64| {
            if (0.0..=1.0).contains(&x) {
                Ok(())
            } else {
                Err(RegressorError::Config(format!(
                    "{name} = {x} must lie in [0, 1]"
                )))
            }
        };
        unit("gamma", self.gamma)?;
        unit("beta", self.beta)?;
        if !(self.lambda_v >= 0.0 && self.lambda_a >= 0.0) {
            return Err(RegressorError::Config(
                "lambda weights must be non-negative".into(),
            ));
        }
        if !(self.margin > 0.0 && self.pos_radius > 0.0 && self.neg_radius > 0.0) {
            return Err(RegressorError::Config(
                "margin and radii must be positive".into(),
            ));
        }
        if self.pos_radius >= self.neg_radius {
            return Err(RegressorError::Config(
                "pos_radius must be below neg_radius".into(),
            ));
        }
        Ok(())
    }
}

fn check_batch(
    preds: &[NormalizedVA],
    targets: &[NormalizedVA],
    min: usize,
) -> Result<(), RegressorError> {
    if preds.len() != targets.len() {
        return Err(RegressorError::Shape(format!(
            "{} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    if preds.len() < min {
        return Err(RegressorError::BatchTooSmall {
            needed: min,
            got: preds.len(),
        });
    }
    Ok(())
}

/// Batch mean of the squared L2 norm of the 2-d residual.
pub fn mse_loss(preds: &[NormalizedVA], targets: &[NormalizedVA]) -> Result<f64, RegressorError> {
    check_batch(preds, targets, 1)?;
    let total: f64 = preds
        .iter()
        .zip(targets)
        .map(|(p, y)| (p.v - y.v).powi(2) + (p.a - y.a).powi(2))
        .sum();
    Ok(total / preds.len() as f64)
}

fn dims(xs: &[NormalizedVA]) -> (Vec<f64>, Vec<f64>) {
    xs.iter().map(|x| (x.v, x.a)).unzip()
}

/// `1 - (λ_v·CCC_v + λ_a·CCC_a)` over the minibatch.
pub fn ccc_loss(
    preds: &[NormalizedVA],
    targets: &[NormalizedVA],
    cfg: &LossConfig,
) -> Result<f64, RegressorError> {
    check_batch(preds, targets, 2)?;
    let (pv, pa) = dims(preds);
    let (tv, ta) = dims(targets);
    let cv = ccc_from_moments(&MomentStats::compute(&pv, &tv)?);
    let ca = ccc_from_moments(&MomentStats::compute(&pa, &ta)?);
    Ok(1.0 - weighted_ccc(cv, ca, cfg.lambda_v, cfg.lambda_a))
}

/// d CCC / d prediction_i for one dimension.
fn ccc_grad(preds: &[f64], targets: &[f64]) -> Vec<f64> {
    let n = preds.len() as f64;
    let m = MomentStats::compute(preds, targets).expect("lengths checked");
    let shift = m.mean_x - m.mean_y;
    let denom = m.var_x + m.var_y + shift * shift;
    if denom == 0.0 {
        return vec![0.0; preds.len()];
    }
    let numer = 2.0 * m.cov;
    preds
        .iter()
        .zip(targets)
        .map(|(&x, &y)| {
            let d_numer = 2.0 * (y - m.mean_y) / n;
            let d_denom = 2.0 * (x - m.mean_x) / n + 2.0 * shift / n;
            (d_numer * denom - numer * d_denom) / (denom * denom)
        })
        .collect()
}

pub type Triplet = (usize, usize, usize);

fn l2(a: &NormalizedVA, b: &NormalizedVA) -> f64 {
    ((a.v - b.v).powi(2) + (a.a - b.a).powi(2)).sqrt()
}

/// For every anchor with at least one positive (distance ≤ `pos_radius`) and
/// one negative (distance > `neg_radius`) in gold VA space, draws one of
/// each uniformly.
pub fn sample_triplets(targets: &[NormalizedVA], cfg: &LossConfig, seed: u64) -> Vec<Triplet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    if targets.len() < 3 {
        return out;
    }
    for (i, anchor) in targets.iter().enumerate() {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (j, other) in targets.iter().enumerate() {
            if j == i {
                continue;
            }
            let dist = l2(anchor, other);
            if dist <= cfg.pos_radius {
                pos.push(j);
            } else if dist > cfg.neg_radius {
                neg.push(j);
            }
        }
        if let (Some(&p), Some(&n)) = (pos.choose(&mut rng), neg.choose(&mut rng)) {
            out.push((i, p, n));
        }
    }
    out
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Mean hinge `max(0, ‖z_i − z_p‖ − ‖z_i − z_n‖ + m)`; zero for no triplets.
pub fn triplet_loss(embeddings: &[Vec<f64>], triplets: &[Triplet], margin: f64) -> f64 {
    if triplets.is_empty() {
        return 0.0;
    }
    let total: f64 = triplets
        .iter()
        .map(|&(i, p, n)| {
            let d_pos = euclid(&embeddings[i], &embeddings[p]);
            let d_neg = euclid(&embeddings[i], &embeddings[n]);
            (d_pos - d_neg + margin).max(0.0)
        })
        .sum();
    total / triplets.len() as f64
}

/// Loss value split into its parts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub mse: f64,
    pub ccc: f64,
    pub triplet: f64,
}

pub fn combine(mse: f64, ccc: f64, triplet: f64, cfg: &LossConfig) -> f64 {
    (1.0 - cfg.beta) * (cfg.gamma * mse + (1.0 - cfg.gamma) * ccc) + cfg.beta * triplet
}

/// Full objective. `detached` are the pooled embeddings used by the triplet
/// term; they are treated as constants, so [`total_loss_grad`] ignores them.
pub fn total_loss(
    preds: &[NormalizedVA],
    targets: &[NormalizedVA],
    detached: &[Vec<f64>],
    triplets: &[Triplet],
    cfg: &LossConfig,
) -> Result<LossBreakdown, RegressorError> {
    let mse = mse_loss(preds, targets)?;
    let ccc = ccc_loss(preds, targets, cfg)?;
    let triplet = triplet_loss(detached, triplets, cfg.margin);
    Ok(LossBreakdown {
        total: combine(mse, ccc, triplet, cfg),
        mse,
        ccc,
        triplet,
    })
}

/// Gradient of [`total_loss`] with respect to each prediction.
pub fn total_loss_grad(
    preds: &[NormalizedVA],
    targets: &[NormalizedVA],
    cfg: &LossConfig,
) -> Result<Vec<NormalizedVA>, RegressorError> {
    check_batch(preds, targets, 2)?;
    let n = preds.len() as f64;
    let (pv, pa) = dims(preds);
    let (tv, ta) = dims(targets);
    let gv = ccc_grad(&pv, &tv);
    let ga = ccc_grad(&pa, &ta);
    let base = 1.0 - cfg.beta;
    Ok((0..preds.len())
        .map(|i| {
            let mse_v = 2.0 * (pv[i] - tv[i]) / n;
            let mse_a = 2.0 * (pa[i] - ta[i]) / n;
            NormalizedVA::new(
                base * (cfg.gamma * mse_v - (1.0 - cfg.gamma) * cfg.lambda_v * gv[i]),
                base * (cfg.gamma * mse_a - (1.0 - cfg.gamma) * cfg.lambda_a * ga[i]),
            )
        })
        .collect())
}
