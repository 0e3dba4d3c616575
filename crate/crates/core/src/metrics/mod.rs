//! Evaluation statistics: RMSE over VA, Pearson and concordance
//! correlation, and continuous F1 for tuple extraction.

use std::fmt;

use thiserror::Error;

use crate::model::VAPair;

mod matching;

pub use matching::{
    continuous_f1, continuous_f1_with, match_tuples, match_tuples_with, va_similarity, CfScore,
    MatchMode, MatchResult, ReviewTuples,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("length mismatch: {0} predictions vs {1} gold values")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("correlation undefined: input is constant")]
    ConstantInput,
    #[error("tuple {index} ({side}): {message}")]
    ModeMismatch {
        side: &'static str,
        index: usize,
        message: &'static str,
    },
}

/// Population (1/N) moments of a pair of equal-length samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentStats {
    pub mean_x: f64,
    pub mean_y: f64,
    pub var_x: f64,
    pub var_y: f64,
    pub cov: f64,
}

impl MomentStats {
    pub fn compute(xs: &[f64], ys: &[f64]) -> Result<Self, MetricError> {
        check_lengths(xs, ys)?;
        if xs.is_empty() {
            return Err(MetricError::Empty);
        }
        let n = xs.len() as f64;
        let mean_x = xs.iter().sum::<f64>() / n;
        let mean_y = ys.iter().sum::<f64>() / n;
        let (mut var_x, mut var_y, mut cov) = (0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(ys) {
            let (dx, dy) = (x - mean_x, y - mean_y);
            var_x += dx * dx;
            var_y += dy * dy;
            cov += dx * dy;
        }
        Ok(MomentStats {
            mean_x,
            mean_y,
            var_x: var_x / n,
            var_y: var_y / n,
            cov: cov / n,
        })
    }
}

fn check_lengths<T>(xs: &[T], ys: &[T]) -> Result<(), MetricError> {
    if xs.len() != ys.len() {
        return Err(MetricError::LengthMismatch(xs.len(), ys.len()));
    }
    Ok(())
}

/// Root mean squared error pooled over both dimensions (divides by 2N).
pub fn rmse_va(preds: &[VAPair], golds: &[VAPair]) -> Result<f64, MetricError> {
    check_lengths(preds, golds)?;
    if preds.is_empty() {
        return Err(MetricError::Empty);
    }
    let sse: f64 = preds
        .iter()
        .zip(golds)
        .map(|(p, g)| {
            let dv = p.valence() - g.valence();
            let da = p.arousal() - g.arousal();
            dv * dv + da * da
        })
        .sum();
    Ok((sse / (2.0 * preds.len() as f64)).sqrt())
}

pub fn rmse(xs: &[f64], ys: &[f64]) -> Result<f64, MetricError> {
    check_lengths(xs, ys)?;
    if xs.is_empty() {
        return Err(MetricError::Empty);
    }
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sse / xs.len() as f64).sqrt())
}

/// Pearson correlation. A constant vector on either side is an error.
pub fn pcc(xs: &[f64], ys: &[f64]) -> Result<f64, MetricError> {
    check_lengths(xs, ys)?;
    if xs.len() < 2 {
        return Err(MetricError::TooShort {
            needed: 2,
            got: xs.len(),
        });
    }
    let m = MomentStats::compute(xs, ys)?;
    if m.var_x == 0.0 || m.var_y == 0.0 {
        return Err(MetricError::ConstantInput);
    }
    Ok((m.cov / (m.var_x.sqrt() * m.var_y.sqrt())).clamp(-1.0, 1.0))
}

/// Lin's concordance correlation with population moments.
pub fn ccc(preds: &[f64], golds: &[f64]) -> Result<f64, MetricError> {
    check_lengths(preds, golds)?;
    if preds.len() < 2 {
        return Err(MetricError::TooShort {
            needed: 2,
            got: preds.len(),
        });
    }
    let m = MomentStats::compute(preds, golds)?;
    Ok(ccc_from_moments(&m))
}

pub(crate) fn ccc_from_moments(m: &MomentStats) -> f64 {
    let shift = m.mean_x - m.mean_y;
    let denom = m.var_x + m.var_y + shift * shift;
    if denom == 0.0 {
        // Both samples constant and equal: numerator is zero as well.
        0.0
    } else {
        2.0 * m.cov / denom
    }
}

pub fn weighted_ccc(ccc_v: f64, ccc_a: f64, lambda_v: f64, lambda_a: f64) -> f64 {
    lambda_v * ccc_v + lambda_a * ccc_a
}

/// Regression scores in the reporting columns RMSE_VA / PCC_V / PCC_A.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct AsrScore {
    pub n: usize,
    pub rmse_va: f64,
    pub rmse_v: f64,
    pub rmse_a: f64,
    /// `None` when one side is constant.
    pub pcc_v: Option<f64>,
    pub pcc_a: Option<f64>,
}

pub fn score_asr(preds: &[VAPair], golds: &[VAPair]) -> Result<AsrScore, MetricError> {
    let rmse_va = rmse_va(preds, golds)?;
    let split = |xs: &[VAPair]| -> (Vec<f64>, Vec<f64>) {
        xs.iter().map(|p| (p.valence(), p.arousal())).unzip()
    };
    let (pv, pa) = split(preds);
    let (gv, ga) = split(golds);
    let defined = |r: Result<f64, MetricError>| match r {
        Ok(x) => Ok(Some(x)),
        Err(MetricError::ConstantInput | MetricError::TooShort { .. }) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(AsrScore {
        n: preds.len(),
        rmse_va,
        rmse_v: rmse(&pv, &gv)?,
        rmse_a: rmse(&pa, &ga)?,
        pcc_v: defined(pcc(&pv, &gv))?,
        pcc_a: defined(pcc(&pa, &ga))?,
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.4}"))
        .unwrap_or_else(|| "undefined".into())
}

impl fmt::Display for AsrScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "RMSE_VA\tPCC_V\tPCC_A")?;
        writeln!(
            f,
            "{:.4}\t{}\t{}",
            self.rmse_va,
            fmt_opt(self.pcc_v),
            fmt_opt(self.pcc_a)
        )?;
        write!(
            f,
            "# per-dimension RMSE_V={:.4} RMSE_A={:.4} N={}",
            self.rmse_v, self.rmse_a, self.n
        )
    }
}
