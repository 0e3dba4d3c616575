use serde::{Deserialize, Serialize};

use super::GenError;

/// Low-rank adapter fine-tuning settings, written as a TOML document that an
/// external training harness consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterTuneConfig {
    pub training: TrainingArgs,
    pub lora: LoraArgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingArgs {
    pub num_train_epochs: u32,
    pub per_device_train_batch_size: u32,
    pub gradient_accumulation_steps: u32,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub warmup_ratio: f64,
    pub lr_scheduler_type: String,
    pub optim: String,
    pub max_seq_length: u32,
    pub load_in_4bit: bool,
    pub bf16: bool,
    pub max_grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoraArgs {
    pub r: u32,
    pub lora_alpha: u32,
    pub lora_dropout: f64,
    pub target_modules: Vec<String>,
}

impl Default for AdapterTuneConfig {
    fn default() -> Self {
        AdapterTuneConfig {
            training: TrainingArgs {
                num_train_epochs: 1,
                per_device_train_batch_size: 2,
                gradient_accumulation_steps: 4,
                learning_rate: 2e-4,
                weight_decay: 1e-4,
                warmup_ratio: 0.03,
                lr_scheduler_type: "linear".into(),
                optim: "paged_adamw_32bit".into(),
                max_seq_length: 2048,
                load_in_4bit: true,
                bf16: true,
                max_grad_norm: 0.3,
            },
            lora: LoraArgs {
                r: 16,
                lora_alpha: 32,
                lora_dropout: 0.2,
                target_modules: [
                    "q_proj",
                    "k_proj",
                    "v_proj",
                    "o_proj",
                    "gate_proj",
                    "up_proj",
                    "down_proj",
                ]
                .map(String::from)
                .to_vec(),
            },
        }
    }
}

impl AdapterTuneConfig {
    pub fn effective_batch_size(&self) -> u32 {
        self.training.per_device_train_batch_size * self.training.gradient_accumulation_steps
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let fail = |m: &str| Err(GenError::AdapterConfig(m.to_string()));
        let (t, l) = (&self.training, &self.lora);
        if l.r == 0 {
            return fail("LoRA rank must be positive");
        }
        if l.lora_alpha == 0 {
            return fail("LoRA alpha must be positive");
        }
        if !(0.0..1.0).contains(&l.lora_dropout) {
            return fail("LoRA dropout must lie in [0, 1)");
        }
        if l.target_modules.is_empty() || l.target_modules.iter().any(|m| m.trim().is_empty()) {
            return fail("target modules must be a nonempty list of names");
        }
        if t.num_train_epochs == 0
            || t.per_device_train_batch_size == 0
            || t.gradient_accumulation_steps == 0
        {
            return fail("epochs, batch size and accumulation steps must be positive");
        }
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            return fail("learning rate must be positive");
        }
        if !(t.weight_decay >= 0.0 && t.weight_decay.is_finite()) {
            return fail("weight decay must be non-negative");
        }
        if !(0.0..=1.0).contains(&t.warmup_ratio) {
            return fail("warmup ratio must lie in [0, 1]");
        }
        if t.max_seq_length == 0 {
            return fail("max sequence length must be positive");
        }
        if !(t.max_grad_norm > 0.0 && t.max_grad_norm.is_finite()) {
            return fail("max grad norm must be positive");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, GenError> {
        self.validate()?;
        toml::to_string(self).map_err(|e| GenError::AdapterConfig(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, GenError> {
        let cfg: AdapterTuneConfig =
            toml::from_str(text).map_err(|e| GenError::AdapterConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_document() {
        let cfg = AdapterTuneConfig::default();
        assert_eq!(cfg.effective_batch_size(), 8);
        let text = cfg.to_toml().unwrap();
        assert!(text.contains("r = 16"));
        assert!(text.contains("lora_alpha = 32"));
        assert!(text.contains("optim = \"paged_adamw_32bit\""));
        assert_eq!(AdapterTuneConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn invalid_values_rejected() {
        let mut cfg = AdapterTuneConfig::default();
        cfg.lora.r = 0;
        assert!(cfg.to_toml().is_err());
        let text = AdapterTuneConfig::default()
            .to_toml()
            .unwrap()
            .replace("r = 16", "r = 0");
        assert!(AdapterTuneConfig::from_toml(&text).is_err());
        let text = AdapterTuneConfig::default()
            .to_toml()
            .unwrap()
            .replace("bf16 = true", "bf16 = true\nfp8 = true");
        assert!(AdapterTuneConfig::from_toml(&text).is_err());
    }
}
