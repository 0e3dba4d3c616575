//! The regression model, its batch objective with gradients, and the
//! training loop (AdamW, warmup + plateau schedule, early stopping).

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::Encoder;
use super::head::{
    attention_pool, attention_pool_backward, predict_va, HeadParams, InputTemplate, Pooled,
};
use super::loss::{
    sample_triplets, total_loss, total_loss_grad, LossBreakdown, LossConfig, Triplet,
};
use super::optim::AdamW;
use super::params::{axpy, ParamSet};
use super::schedule::{LrSchedule, ScheduleConfig};
use super::RegressorError;
use crate::dataio::RegressionExample;
use crate::metrics::rmse_va;
use crate::model::{denormalize_clip, NormalizedVA, VAPair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub warmup_ratio: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub max_seq_len: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 2e-5,
            batch_size: 16,
            dropout: 0.3,
            warmup_ratio: 0.1,
            plateau_factor: 0.5,
            plateau_patience: 2,
            early_stop_patience: 5,
            max_epochs: 30,
            max_seq_len: 128,
            weight_decay: 0.01,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> ScheduleConfig {
        ScheduleConfig {
            warmup_ratio: self.warmup_ratio,
            plateau_factor: self.plateau_factor,
            plateau_patience: self.plateau_patience,
        }
    }

    pub fn validate(&self) -> Result<(), RegressorError> {
        let fail = |m: &str| Err(RegressorError::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if self.batch_size < 2 {
            return fail("batch_size must be at least 2 (CCC needs two samples)");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return fail("warmup_ratio must lie in [0, 1]");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor <= 1.0) {
            return fail("plateau_factor must lie in (0, 1]");
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return fail("patience values must be positive");
        }
        if self.max_seq_len == 0 {
            return fail("max_seq_len must be positive");
        }
        Ok(())
    }
}

/// Tokenized input with its normalized target.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub ids: Vec<u32>,
    pub target: NormalizedVA,
}

/// Gradients laid out like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub head: HeadParams,
    pub encoder: ParamSet,
}

pub struct Regressor<E: Encoder> {
    pub encoder: E,
    pub head: HeadParams,
    pub input: InputTemplate,
    pub max_seq_len: usize,
}

struct Forward<T> {
    tape: T,
    out: super::encoder::EncoderOutput,
    pooled: Pooled,
    /// `z` after dropout, fed to the heads.
    z_used: Vec<f64>,
    /// Inverted-dropout scale per coordinate (1 when dropout is off).
    keep: Vec<f64>,
    pred: NormalizedVA,
}

impl<E: Encoder> Regressor<E> {
    pub fn new(encoder: E, head_seed: u64) -> Self {
        let head = HeadParams::init(encoder.width(), head_seed);
        Regressor {
            encoder,
            head,
            input: InputTemplate::default(),
            max_seq_len: TrainConfig::default().max_seq_len,
        }
    }

    pub fn token_ids(&self, example: &RegressionExample) -> Result<Vec<u32>, RegressorError> {
        let text = self.input.render(&example.aspect, &example.review_text)?;
        let ids = self.encoder.tokenize(&text, self.max_seq_len);
        if ids.is_empty() {
            return Err(RegressorError::Shape(format!(
                "no tokens for review {}",
                example.review_id
            )));
        }
        Ok(ids)
    }

    pub fn encode_examples(
        &self,
        examples: &[RegressionExample],
    ) -> Result<Vec<Encoded>, RegressorError> {
        examples
            .iter()
            .map(|ex| {
                let target = ex.target.ok_or_else(|| {
                    RegressorError::Data(format!("example {} has no VA target", ex.review_id))
                })?;
                Ok(Encoded {
                    ids: self.token_ids(ex)?,
                    target,
                })
            })
            .collect()
    }

    fn forward(
        &self,
        ids: &[u32],
        dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> Result<Forward<E::Tape>, RegressorError> {
        let (out, tape) = self.encoder.forward(ids)?;
        let pooled = attention_pool(&out, &self.head.pool)?;
        let keep: Vec<f64> = match dropout {
            Some((p, rng)) if p > 0.0 => (0..pooled.z.len())
                .map(|_| {
                    if rng.gen::<f64>() < p {
                        0.0
                    } else {
                        1.0 / (1.0 - p)
                    }
                })
                .collect(),
            _ => vec![1.0; pooled.z.len()],
        };
        let z_used: Vec<f64> = pooled.z.iter().zip(&keep).map(|(z, k)| z * k).collect();
        let pred = predict_va(&z_used, &self.head.heads)?;
        Ok(Forward {
            tape,
            out,
            pooled,
            z_used,
            keep,
            pred,
        })
    }

    /// Pooled representation and unclipped normalized output (no dropout).
    pub fn infer_ids(&self, ids: &[u32]) -> Result<(Vec<f64>, NormalizedVA), RegressorError> {
        let f = self.forward(ids, None)?;
        Ok((f.pooled.z, f.pred))
    }

    /// Loss of a batch without dropout. When `detached` is given, the triplet
    /// term uses those embeddings instead of the current ones.
    pub fn batch_loss(
        &self,
        batch: &[Encoded],
        cfg: &LossConfig,
        triplets: &[Triplet],
        detached: Option<&[Vec<f64>]>,
    ) -> Result<(LossBreakdown, Vec<Vec<f64>>), RegressorError> {
        let mut preds = Vec::with_capacity(batch.len());
        let mut zs = Vec::with_capacity(batch.len());
        for ex in batch {
            let (z, pred) = self.infer_ids(&ex.ids)?;
            preds.push(pred);
            zs.push(z);
        }
        let targets: Vec<NormalizedVA> = batch.iter().map(|e| e.target).collect();
        let loss = total_loss(&preds, &targets, detached.unwrap_or(&zs), triplets, cfg)?;
        Ok((loss, zs))
    }

    /// Loss and gradients of one batch. The triplet term only contributes its
    /// value: its embeddings are detached.
    pub fn batch_gradients(
        &self,
        batch: &[Encoded],
        cfg: &LossConfig,
        triplets: &[Triplet],
        dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> Result<(LossBreakdown, Gradients), RegressorError> {
        let mut rng_slot = dropout;
        let mut fwd = Vec::with_capacity(batch.len());
        for ex in batch {
            let d = rng_slot.as_mut().map(|(p, rng)| (*p, &mut **rng));
            fwd.push(self.forward(&ex.ids, d)?);
        }
        let preds: Vec<NormalizedVA> = fwd.iter().map(|f| f.pred).collect();
        let targets: Vec<NormalizedVA> = batch.iter().map(|e| e.target).collect();
        let detached: Vec<Vec<f64>> = fwd.iter().map(|f| f.pooled.z.clone()).collect();
        let loss = total_loss(&preds, &targets, &detached, triplets, cfg)?;
        let d_preds = total_loss_grad(&preds, &targets, cfg)?;

        let width = self.head.width();
        let mut grads = Gradients {
            head: HeadParams::zeros(width),
            encoder: self.encoder.params().zeros_like(),
        };
        let heads = &self.head.heads;
        for (f, g) in fwd.iter().zip(&d_preds) {
            let gh = &mut grads.head.heads;
            axpy(&mut gh.w_v, g.v, &f.z_used);
            axpy(&mut gh.w_a, g.a, &f.z_used);
            gh.b_v += g.v;
            gh.b_a += g.a;
            let d_z: Vec<f64> = (0..width)
                .map(|k| (g.v * heads.w_v[k] + g.a * heads.w_a[k]) * f.keep[k])
                .collect();
            let d_hidden = attention_pool_backward(
                &f.out,
                &self.head.pool,
                &f.pooled,
                &d_z,
                &mut grads.head.pool.w,
            );
            self.encoder
                .backward(&f.tape, &d_hidden, &mut grads.encoder);
        }
        Ok((loss, grads))
    }

    pub fn predict_example(&self, example: &RegressionExample) -> Result<VAPair, RegressorError> {
        let ids = self.token_ids(example)?;
        let (_, pred) = self.infer_ids(&ids)?;
        Ok(denormalize_clip(pred))
    }

    /// Input → encoder → pool → heads → rescale and clip, per example.
    pub fn predict(&self, examples: &[RegressionExample]) -> Result<Vec<VAPair>, RegressorError> {
        examples.iter().map(|ex| self.predict_example(ex)).collect()
    }

    fn predict_encoded(&self, data: &[Encoded]) -> Result<Vec<VAPair>, RegressorError> {
        data.iter()
            .map(|e| self.infer_ids(&e.ids).map(|(_, p)| denormalize_clip(p)))
            .collect()
    }

    /// RMSE_VA on the [1, 9] scale.
    pub fn evaluate(&self, data: &[Encoded]) -> Result<f64, RegressorError> {
        let preds = self.predict_encoded(data)?;
        let golds: Vec<VAPair> = data.iter().map(|e| denormalize_clip(e.target)).collect();
        Ok(rmse_va(&preds, &golds)?)
    }

    fn apply(&mut self, opt: &mut AdamW, grads: &Gradients, lr: f64) {
        opt.begin_step();
        let mut flat: Vec<(String, Vec<f64>)> = Vec::new();
        grads
            .head
            .for_each(|name, g| flat.push((name.to_string(), g.to_vec())));
        let mut i = 0;
        self.head.for_each_mut(|name, p| {
            debug_assert_eq!(flat[i].0, name);
            opt.update(name, p, &flat[i].1, lr);
            i += 1;
        });
        for (t, g) in self
            .encoder
            .params_mut()
            .iter_mut()
            .zip(grads.encoder.iter())
        {
            opt.update(&t.name, &mut t.data, &g.data, lr);
        }
    }

    fn snapshot(&self) -> (HeadParams, ParamSet) {
        (self.head.clone(), self.encoder.params().clone())
    }

    fn restore(&mut self, snap: (HeadParams, ParamSet)) {
        self.head = snap.0;
        *self.encoder.params_mut() = snap.1;
    }
}

/// One row of the training history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_rmse_va: f64,
    /// Multiplier in effect after this epoch's schedule update.
    pub lr_multiplier: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept; 0 when no epoch ran.
    pub best_epoch: usize,
    pub best_val_rmse: Option<f64>,
    pub stopped_early: bool,
}

/// Renders the history as CSV with a header row.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_rmse_va,lr_multiplier\n");
    for r in history {
        out.push_str(&format!(
            "{},{:.10},{:.10},{:.10}\n",
            r.epoch, r.train_loss, r.val_rmse_va, r.lr_multiplier
        ));
    }
    out
}

/// Splits shuffled indices into batches, folding a trailing singleton into
/// the previous batch since CCC needs two samples.
fn make_batches(order: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let tail = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(tail);
    }
    batches
}

/// Trains in place and leaves the best-on-validation parameters in `model`.
pub fn train<E: Encoder>(
    model: &mut Regressor<E>,
    train_data: &[RegressionExample],
    val_data: &[RegressionExample],
    cfg: &TrainConfig,
    loss_cfg: &LossConfig,
) -> Result<TrainReport, RegressorError> {
    cfg.validate()?;
    loss_cfg.validate()?;
    if train_data.len() < 2 {
        return Err(RegressorError::Data(
            "training needs at least two examples".into(),
        ));
    }
    if val_data.is_empty() {
        return Err(RegressorError::Data("validation set is empty".into()));
    }
    model.max_seq_len = cfg.max_seq_len;
    let train_set = model.encode_examples(train_data)?;
    let val_set = model.encode_examples(val_data)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let steps_per_epoch =
        make_batches(&(0..train_set.len()).collect::<Vec<_>>(), cfg.batch_size).len();
    let mut sched = LrSchedule::new(cfg.schedule(), steps_per_epoch * cfg.max_epochs);
    let mut opt = AdamW::new(cfg.weight_decay);

    let mut history = Vec::new();
    let mut best: Option<(f64, usize, (HeadParams, ParamSet))> = None;
    let mut bad_epochs = 0;
    let mut stopped_early = false;
    let mut step = 0usize;

    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let batches = make_batches(&order, cfg.batch_size);
        for idx in &batches {
            let batch: Vec<Encoded> = idx.iter().map(|&i| train_set[i].clone()).collect();
            let targets: Vec<NormalizedVA> = batch.iter().map(|e| e.target).collect();
            let triplets = sample_triplets(&targets, loss_cfg, rng.next_u64());
            let lr = cfg.learning_rate * sched.multiplier(step);
            let (loss, grads) = model.batch_gradients(
                &batch,
                loss_cfg,
                &triplets,
                Some((cfg.dropout, &mut rng)),
            )?;
            if !loss.total.is_finite() {
                return Err(RegressorError::Diverged {
                    epoch,
                    step,
                    loss: loss.total,
                });
            }
            model.apply(&mut opt, &grads, lr);
            loss_sum += loss.total;
            step += 1;
        }
        let val_rmse = model.evaluate(&val_set)?;
        if !val_rmse.is_finite() {
            return Err(RegressorError::Diverged {
                epoch,
                step,
                loss: val_rmse,
            });
        }
        sched.end_epoch(val_rmse, step);
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches.len() as f64,
            val_rmse_va: val_rmse,
            lr_multiplier: sched.multiplier(step),
        });
        log::debug!("epoch {epoch}: val RMSE_VA {val_rmse:.4}");

        if best.as_ref().is_none_or(|(b, _, _)| val_rmse < *b) {
            best = Some((val_rmse, epoch, model.snapshot()));
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= cfg.early_stop_patience {
                stopped_early = true;
                break;
            }
        }
    }

    let (best_val_rmse, best_epoch) = match best {
        Some((rmse, epoch, snap)) => {
            model.restore(snap);
            (Some(rmse), epoch)
        }
        None => (None, 0),
    };
    Ok(TrainReport {
        history,
        best_epoch,
        best_val_rmse,
        stopped_early,
    })
}

/// RMSE_VA of always predicting the training-set mean VA.
pub fn mean_predictor_rmse(
    train_data: &[RegressionExample],
    val_data: &[RegressionExample],
) -> Result<f64, RegressorError> {
    let targets: Vec<NormalizedVA> = train_data.iter().filter_map(|e| e.target).collect();
    if targets.is_empty() {
        return Err(RegressorError::Data("no labelled training examples".into()));
    }
    let n = targets.len() as f64;
    let mean = NormalizedVA::new(
        targets.iter().map(|t| t.v).sum::<f64>() / n,
        targets.iter().map(|t| t.a).sum::<f64>() / n,
    );
    let golds: Vec<VAPair> = val_data
        .iter()
        .map(|e| {
            e.target.map(denormalize_clip).ok_or_else(|| {
                RegressorError::Data(format!("example {} has no VA target", e.review_id))
            })
        })
        .collect::<Result<_, _>>()?;
    let preds = vec![denormalize_clip(mean); golds.len()];
    Ok(rmse_va(&preds, &golds)?)
}
