//! Self-describing JSON checkpoints for the toy-encoder regressor.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::encoder::{ToyEncoder, ToyEncoderConfig};
use super::head::{HeadParams, InputTemplate};
use super::loss::LossConfig;
use super::params::ParamSet;
use super::train::{Regressor, TrainConfig};
use super::RegressorError;

pub const CHECKPOINT_FORMAT: &str = "dimabsa-regressor";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderRecord {
    pub kind: String,
    pub hash: String,
    pub config: ToyEncoderConfig,
    pub params: ParamSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub input: InputTemplate,
    pub max_seq_len: usize,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub encoder: EncoderRecord,
    pub head: HeadParams,
}

impl Checkpoint {
    pub fn capture(model: &Regressor<ToyEncoder>, train: &TrainConfig, loss: &LossConfig) -> Self {
        use super::encoder::Encoder;
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            input: model.input.clone(),
            max_seq_len: model.max_seq_len,
            train: *train,
            loss: *loss,
            encoder: EncoderRecord {
                kind: "toy".into(),
                hash: "fnv1a-64".into(),
                config: model.encoder.config,
                params: model.encoder.params().clone(),
            },
            head: model.head.clone(),
        }
    }

    pub fn into_model(self) -> Result<Regressor<ToyEncoder>, RegressorError> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(RegressorError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        if self.encoder.kind != "toy" || self.encoder.hash != "fnv1a-64" {
            return Err(RegressorError::Checkpoint(format!(
                "unknown encoder kind {} / hash {}",
                self.encoder.kind, self.encoder.hash
            )));
        }
        if self.head.width() != self.encoder.config.width
            || self.head.heads.w_v.len() != self.head.width()
            || self.head.heads.w_a.len() != self.head.width()
        {
            return Err(RegressorError::Checkpoint(
                "head width does not match encoder".into(),
            ));
        }
        let encoder = ToyEncoder::from_params(self.encoder.config, self.encoder.params)?;
        Ok(Regressor {
            encoder,
            head: self.head,
            input: self.input,
            max_seq_len: self.max_seq_len,
        })
    }
}

pub fn save_checkpoint<W: Write>(
    writer: W,
    model: &Regressor<ToyEncoder>,
    train: &TrainConfig,
    loss: &LossConfig,
) -> Result<(), RegressorError> {
    serde_json::to_writer(writer, &Checkpoint::capture(model, train, loss))
        .map_err(|e| RegressorError::Checkpoint(e.to_string()))
}

pub fn load_checkpoint<R: Read>(
    reader: R,
) -> Result<(Regressor<ToyEncoder>, Checkpoint), RegressorError> {
    let ck: Checkpoint =
        serde_json::from_reader(reader).map_err(|e| RegressorError::Checkpoint(e.to_string()))?;
    let model = ck.clone().into_model()?;
    Ok((model, ck))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let enc = ToyEncoder::new(ToyEncoderConfig {
            width: 4,
            tokenizer: super::super::encoder::HashTokenizer {
                buckets: 16,
                lowercase: true,
            },
            seed: 3,
        });
        let model = Regressor::new(enc, 9);
        let mut buf = Vec::new();
        save_checkpoint(
            &mut buf,
            &model,
            &TrainConfig::default(),
            &LossConfig::default(),
        )
        .unwrap();
        let (back, ck) = load_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back.head, model.head);
        assert_eq!(back.encoder, model.encoder);
        assert_eq!(ck.version, CHECKPOINT_VERSION);

        let mut bad = ck.clone();
        bad.format = "other".into();
        assert!(bad.into_model().is_err());
    }
}
