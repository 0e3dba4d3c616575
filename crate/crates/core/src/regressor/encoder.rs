//! The encoder seam and the small trainable encoder used at desk scale.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{axpy, matmul, matmul_nt, matmul_tn, ParamSet, Tensor};
use super::RegressorError;

/// Token representations `T × d` (row-major) plus a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub hidden: Vec<f64>,
    pub mask: Vec<bool>,
    pub width: usize,
}

impl EncoderOutput {
    pub fn new(hidden: Vec<f64>, mask: Vec<bool>, width: usize) -> Result<Self, RegressorError> {
        if mask.is_empty() {
            return Err(RegressorError::Shape(
                "encoder output needs at least one token".into(),
            ));
        }
        if hidden.len() != mask.len() * width {
            return Err(RegressorError::Shape(format!(
                "hidden has {} values, expected {} × {}",
                hidden.len(),
                mask.len(),
                width
            )));
        }
        Ok(EncoderOutput {
            hidden,
            mask,
            width,
        })
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.hidden[t * self.width..(t + 1) * self.width]
    }
}

/// Anything that maps text to token representations.
///
/// Frozen backbones only implement the forward direction; trainable ones
/// also expose their parameters and a backward pass that accumulates into a
/// gradient set laid out like [`Encoder::params`].
pub trait Encoder {
    /// Whatever the backward pass needs from the forward pass.
    type Tape;

    fn width(&self) -> usize;

    fn tokenize(&self, text: &str, max_len: usize) -> Vec<u32>;

    fn forward(&self, ids: &[u32]) -> Result<(EncoderOutput, Self::Tape), RegressorError>;

    fn encode(&self, ids: &[u32]) -> Result<EncoderOutput, RegressorError> {
        self.forward(ids).map(|(out, _)| out)
    }

    fn backward(&self, _tape: &Self::Tape, _d_hidden: &[f64], _grads: &mut ParamSet) {}

    /// Trainable parameters; empty for frozen encoders.
    fn params(&self) -> &ParamSet;

    fn params_mut(&mut self) -> &mut ParamSet;
}

/// Whitespace tokenizer that splits CJK/kana and punctuation into single
/// codepoints, hashing every token into a fixed number of buckets (FNV-1a).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HashTokenizer {
    pub buckets: u32,
    pub lowercase: bool,
}

impl Default for HashTokenizer {
    fn default() -> Self {
        HashTokenizer {
            buckets: 4096,
            lowercase: true,
        }
    }
}

fn is_ideographic(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF      // hiragana, katakana
        | 0x3400..=0x4DBF    // CJK ext A
        | 0x4E00..=0x9FFF    // CJK unified
        | 0xF900..=0xFAFF    // compatibility ideographs
        | 0xFF66..=0xFF9F    // half-width katakana
        | 0x20000..=0x2FFFF)
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl HashTokenizer {
    pub fn pieces(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut word = String::new();
        let flush = |word: &mut String, out: &mut Vec<String>| {
            if !word.is_empty() {
                out.push(std::mem::take(word));
            }
        };
        for c in text.chars() {
            if c.is_whitespace() {
                flush(&mut word, &mut out);
            } else if is_ideographic(c) || (!c.is_alphanumeric() && c != '\'' && c != '-') {
                flush(&mut word, &mut out);
                out.push(c.to_string());
            } else if self.lowercase {
                word.extend(c.to_lowercase());
            } else {
                word.push(c);
            }
        }
        flush(&mut word, &mut out);
        out
    }

    pub fn id(&self, piece: &str) -> u32 {
        (fnv1a(piece.as_bytes()) % self.buckets as u64) as u32
    }

    pub fn encode(&self, text: &str, max_len: usize) -> Vec<u32> {
        self.pieces(text)
            .iter()
            .take(max_len)
            .map(|p| self.id(p))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyEncoderConfig {
    pub width: usize,
    pub tokenizer: HashTokenizer,
    pub seed: u64,
}

impl Default for ToyEncoderConfig {
    fn default() -> Self {
        ToyEncoderConfig {
            width: 32,
            tokenizer: HashTokenizer::default(),
            seed: 7,
        }
    }
}

/// Hashed embedding table followed by one single-head self-attention block
/// with a residual connection: `H = X + softmax(X Wq (X Wk)ᵀ / √d) X Wv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoder {
    pub config: ToyEncoderConfig,
    params: ParamSet,
}

pub struct ToyTape {
    ids: Vec<u32>,
    x: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    attn: Vec<f64>,
}

pub(crate) const EMBED: &str = "encoder.embed";
pub(crate) const W_QUERY: &str = "encoder.attn.query";
pub(crate) const W_KEY: &str = "encoder.attn.key";
pub(crate) const W_VALUE: &str = "encoder.attn.value";

impl ToyEncoder {
    pub fn new(config: ToyEncoderConfig) -> Self {
        let d = config.width;
        let vocab = config.tokenizer.buckets as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut init = |name: &str, shape: &[usize], scale: f64| {
            let n = shape.iter().product();
            let data = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
            Tensor::from_data(name, shape, data)
        };
        let proj = 1.0 / (d as f64).sqrt();
        let params = ParamSet::new(vec![
            init(EMBED, &[vocab, d], 0.5),
            init(W_QUERY, &[d, d], proj),
            init(W_KEY, &[d, d], proj),
            init(W_VALUE, &[d, d], proj),
        ]);
        ToyEncoder { config, params }
    }

    /// Rebuilds an encoder from stored tensors.
    pub fn from_params(config: ToyEncoderConfig, params: ParamSet) -> Result<Self, RegressorError> {
        let expected = ToyEncoder::new(config).params;
        if !expected.same_layout(&params) {
            return Err(RegressorError::Shape(
                "stored encoder tensors do not match the encoder configuration".into(),
            ));
        }
        Ok(ToyEncoder { config, params })
    }
}

impl Encoder for ToyEncoder {
    type Tape = ToyTape;

    fn width(&self) -> usize {
        self.config.width
    }

    fn tokenize(&self, text: &str, max_len: usize) -> Vec<u32> {
        self.config.tokenizer.encode(text, max_len)
    }

    fn forward(&self, ids: &[u32]) -> Result<(EncoderOutput, ToyTape), RegressorError> {
        let d = self.config.width;
        let t = ids.len();
        if t == 0 {
            return Err(RegressorError::Shape("empty token sequence".into()));
        }
        let embed = self.params.data(EMBED);
        let mut x = Vec::with_capacity(t * d);
        for &id in ids {
            let id = id as usize;
            if id >= self.config.tokenizer.buckets as usize {
                return Err(RegressorError::Shape(format!(
                    "token id {id} out of vocabulary"
                )));
            }
            x.extend_from_slice(&embed[id * d..(id + 1) * d]);
        }
        let q = matmul(&x, self.params.data(W_QUERY), t, d, d);
        let k = matmul(&x, self.params.data(W_KEY), t, d, d);
        let v = matmul(&x, self.params.data(W_VALUE), t, d, d);
        let scale = 1.0 / (d as f64).sqrt();
        let mut attn = matmul_nt(&q, &k, t, d, t);
        for row in attn.chunks_mut(t) {
            row.iter_mut().for_each(|s| *s *= scale);
            softmax_in_place(row);
        }
        let ctx = matmul(&attn, &v, t, t, d);
        let hidden: Vec<f64> = x.iter().zip(&ctx).map(|(a, b)| a + b).collect();
        let out = EncoderOutput::new(hidden, vec![true; t], d)?;
        Ok((
            out,
            ToyTape {
                ids: ids.to_vec(),
                x,
                q,
                k,
                v,
                attn,
            },
        ))
    }

    fn backward(&self, tape: &ToyTape, d_hidden: &[f64], grads: &mut ParamSet) {
        let d = self.config.width;
        let t = tape.ids.len();
        let scale = 1.0 / (d as f64).sqrt();

        // residual branch
        let mut dx = d_hidden.to_vec();
        // ctx = attn · v
        let d_attn = matmul_nt(d_hidden, &tape.v, t, d, t);
        let dv = matmul_tn(&tape.attn, d_hidden, t, t, d);
        // softmax rows, then the 1/√d scaling
        let mut d_scores = vec![0.0; t * t];
        for i in 0..t {
            let a = &tape.attn[i * t..(i + 1) * t];
            let g = &d_attn[i * t..(i + 1) * t];
            let inner: f64 = a.iter().zip(g).map(|(x, y)| x * y).sum();
            for j in 0..t {
                d_scores[i * t + j] = a[j] * (g[j] - inner) * scale;
            }
        }
        let dq = matmul(&d_scores, &tape.k, t, t, d);
        let dk = matmul_tn(&d_scores, &tape.q, t, t, d);

        for (name, dproj) in [(W_QUERY, &dq), (W_KEY, &dk), (W_VALUE, &dv)] {
            let dw = matmul_tn(&tape.x, dproj, t, d, d);
            axpy(grads.data_mut(name), 1.0, &dw);
            let back = matmul_nt(dproj, self.params.data(name), t, d, d);
            axpy(&mut dx, 1.0, &back);
        }

        let d_embed = grads.data_mut(EMBED);
        for (pos, &id) in tape.ids.iter().enumerate() {
            let id = id as usize;
            axpy(
                &mut d_embed[id * d..(id + 1) * d],
                1.0,
                &dx[pos * d..(pos + 1) * d],
            );
        }
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in row.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    row.iter_mut().for_each(|s| *s /= total);
}

/// Adapter for an external, frozen backbone: any closure producing token
/// representations, paired with its own tokenizer.
pub struct FrozenEncoder<T, F> {
    width: usize,
    tokenizer: T,
    forward: F,
    empty: ParamSet,
}

impl<T, F> FrozenEncoder<T, F>
where
    T: Fn(&str, usize) -> Vec<u32>,
    F: Fn(&[u32]) -> Result<EncoderOutput, RegressorError>,
{
    pub fn new(width: usize, tokenizer: T, forward: F) -> Self {
        FrozenEncoder {
            width,
            tokenizer,
            forward,
            empty: ParamSet::default(),
        }
    }
}

impl<T, F> Encoder for FrozenEncoder<T, F>
where
    T: Fn(&str, usize) -> Vec<u32>,
    F: Fn(&[u32]) -> Result<EncoderOutput, RegressorError>,
{
    type Tape = ();

    fn width(&self) -> usize {
        self.width
    }

    fn tokenize(&self, text: &str, max_len: usize) -> Vec<u32> {
        (self.tokenizer)(text, max_len)
    }

    fn forward(&self, ids: &[u32]) -> Result<(EncoderOutput, ()), RegressorError> {
        let out = (self.forward)(ids)?;
        if out.width != self.width {
            return Err(RegressorError::Shape(format!(
                "backbone returned width {}, expected {}",
                out.width, self.width
            )));
        }
        Ok((out, ()))
    }

    fn params(&self) -> &ParamSet {
        &self.empty
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.empty
    }
}
