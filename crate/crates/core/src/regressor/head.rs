//! Input construction, attention pooling and the two VA heads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::EncoderOutput;
use super::params::{axpy, dot};
use super::RegressorError;
use crate::model::{NormalizedVA, Term};

pub const DEFAULT_TEMPLATE: &str = "Aspect: {aspect}. Sentence: {sentence}.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputTemplate {
    /// Must contain `{aspect}` and `{sentence}`.
    pub template: String,
    /// Rendering of an implicit (NULL) aspect.
    pub null_surface: String,
}

impl Default for InputTemplate {
    fn default() -> Self {
        InputTemplate {
            template: DEFAULT_TEMPLATE.to_string(),
            null_surface: "NULL".to_string(),
        }
    }
}

impl InputTemplate {
    pub fn render(&self, aspect: &Term, sentence: &str) -> Result<String, RegressorError> {
        build_input(aspect.surface(&self.null_surface), sentence, &self.template)
    }
}

/// Substitutes aspect and sentence into the template.
pub fn build_input(aspect: &str, sentence: &str, template: &str) -> Result<String, RegressorError> {
    for placeholder in ["{aspect}", "{sentence}"] {
        if !template.contains(placeholder) {
            return Err(RegressorError::Template(format!(
                "template lacks {placeholder}"
            )));
        }
    }
    if sentence.trim().is_empty() {
        return Err(RegressorError::Template("sentence is empty".into()));
    }
    if aspect.is_empty() {
        return Err(RegressorError::Template("aspect is empty".into()));
    }
    // Single pass so that braces inside the review text are never re-expanded.
    let mut out = String::with_capacity(template.len() + aspect.len() + sentence.len());
    let mut rest = template;
    while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(after) = tail.strip_prefix("{aspect}") {
            out.push_str(aspect);
            rest = after;
        } else if let Some(after) = tail.strip_prefix("{sentence}") {
            out.push_str(sentence);
            rest = after;
        } else {
            out.push('{');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Trainable scoring vector of the attention pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolingParams {
    pub w: Vec<f64>,
}

/// Two affine maps `d → 1` for valence and arousal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionHeads {
    pub w_v: Vec<f64>,
    pub b_v: f64,
    pub w_a: Vec<f64>,
    pub b_a: f64,
}

/// Pooling plus heads, i.e. everything trained on top of the encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub pool: PoolingParams,
    pub heads: RegressionHeads,
}

impl HeadParams {
    /// Zero scoring vector (uniform pooling), small random head weights and
    /// biases at the centre of the normalized range.
    pub fn init(width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (width as f64).sqrt();
        let mut draw = || {
            (0..width)
                .map(|_| rng.gen_range(-scale..scale))
                .collect::<Vec<_>>()
        };
        let w_v = draw();
        let w_a = draw();
        HeadParams {
            pool: PoolingParams {
                w: vec![0.0; width],
            },
            heads: RegressionHeads {
                w_v,
                b_v: 0.5,
                w_a,
                b_a: 0.5,
            },
        }
    }

    pub fn zeros(width: usize) -> Self {
        HeadParams {
            pool: PoolingParams {
                w: vec![0.0; width],
            },
            heads: RegressionHeads {
                w_v: vec![0.0; width],
                b_v: 0.0,
                w_a: vec![0.0; width],
                b_a: 0.0,
            },
        }
    }

    pub fn width(&self) -> usize {
        self.pool.w.len()
    }

    /// Visits every tensor as `(name, values)`; biases are length-1 slices.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&str, &mut [f64])) {
        f("pool.w", &mut self.pool.w);
        f("head.valence.weight", &mut self.heads.w_v);
        f(
            "head.valence.bias",
            std::slice::from_mut(&mut self.heads.b_v),
        );
        f("head.arousal.weight", &mut self.heads.w_a);
        f(
            "head.arousal.bias",
            std::slice::from_mut(&mut self.heads.b_a),
        );
    }

    pub fn for_each(&self, mut f: impl FnMut(&str, &[f64])) {
        f("pool.w", &self.pool.w);
        f("head.valence.weight", &self.heads.w_v);
        f("head.valence.bias", std::slice::from_ref(&self.heads.b_v));
        f("head.arousal.weight", &self.heads.w_a);
        f("head.arousal.bias", std::slice::from_ref(&self.heads.b_a));
    }
}

/// Attention weights and pooled vector of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub alpha: Vec<f64>,
    pub z: Vec<f64>,
}

/// `z = Σ α_t h_t` with `α = softmax(w·h_t)` over unmasked positions only.
pub fn attention_pool(out: &EncoderOutput, p: &PoolingParams) -> Result<Pooled, RegressorError> {
    let d = out.width;
    if p.w.len() != d {
        return Err(RegressorError::Shape(format!(
            "scoring vector has {} entries, encoder width is {d}",
            p.w.len()
        )));
    }
    let live: Vec<usize> = (0..out.len()).filter(|&t| out.mask[t]).collect();
    if live.is_empty() {
        return Err(RegressorError::AllMasked);
    }
    let scores: Vec<f64> = live.iter().map(|&t| dot(&p.w, out.row(t))).collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let mut alpha = vec![0.0; out.len()];
    let mut z = vec![0.0; d];
    for (&t, e) in live.iter().zip(&exps) {
        alpha[t] = e / total;
        axpy(&mut z, alpha[t], out.row(t));
    }
    Ok(Pooled { alpha, z })
}

/// Backward pass of [`attention_pool`]. Accumulates into `d_w` and returns
/// the gradient with respect to the hidden states (zero on masked rows).
pub fn attention_pool_backward(
    out: &EncoderOutput,
    p: &PoolingParams,
    pooled: &Pooled,
    d_z: &[f64],
    d_w: &mut [f64],
) -> Vec<f64> {
    let d = out.width;
    let mut d_hidden = vec![0.0; out.hidden.len()];
    let d_alpha: Vec<f64> = (0..out.len())
        .map(|t| {
            if out.mask[t] {
                dot(d_z, out.row(t))
            } else {
                0.0
            }
        })
        .collect();
    let mean: f64 = pooled.alpha.iter().zip(&d_alpha).map(|(a, g)| a * g).sum();
    for t in (0..out.len()).filter(|&t| out.mask[t]) {
        let a = pooled.alpha[t];
        let d_score = a * (d_alpha[t] - mean);
        axpy(d_w, d_score, out.row(t));
        let row = &mut d_hidden[t * d..(t + 1) * d];
        axpy(row, a, d_z);
        axpy(row, d_score, &p.w);
    }
    d_hidden
}

/// Unclipped normalized outputs of the two heads.
pub fn predict_va(z: &[f64], heads: &RegressionHeads) -> Result<NormalizedVA, RegressorError> {
    if z.len() != heads.w_v.len() || z.len() != heads.w_a.len() {
        return Err(RegressorError::Shape(format!(
            "pooled vector has {} entries, heads expect {}",
            z.len(),
            heads.w_v.len()
        )));
    }
    Ok(NormalizedVA::new(
        dot(&heads.w_v, z) + heads.b_v,
        dot(&heads.w_a, z) + heads.b_a,
    ))
}
