use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use dimabsa::dataio::SplitMeta;
use dimabsa::genio::ModelFamily;
use dimabsa::regressor::{InputTemplate, LossConfig, ToyEncoderConfig, TrainConfig};
use dimabsa::{Domain, Language, SplitKind, Subtask};

/// Environment variable naming the root for run outputs when `--out` is not
/// given.
pub const CACHE_DIR_ENV: &str = "DIMABSA_CACHE_DIR";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptSettings {
    pub profile: ModelFamily,
    pub demos: usize,
    pub templates: Option<PathBuf>,
    /// Forces the NULL policy on or off; by default it follows the train split.
    pub null_policy: Option<bool>,
}

impl Default for PromptSettings {
    fn default() -> Self {
        PromptSettings {
            profile: ModelFamily::Qwen,
            demos: dimabsa::genio::DEFAULT_DEMOS,
            templates: None,
            null_policy: None,
        }
    }
}

/// Effective settings of one run: the config file with flags applied on top.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub subtask: Option<Subtask>,
    pub language: Option<Language>,
    pub domain: Option<Domain>,
    pub seed: Option<u64>,
    pub paths: Paths,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub encoder: ToyEncoderConfig,
    pub input: InputTemplate,
    pub prompt: PromptSettings,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn subtask(&self) -> Result<Subtask> {
        self.subtask
            .context("--subtask is required (asr, aste or asqp)")
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.context("--seed is required for this command")
    }

    pub fn language(&self) -> Result<Language> {
        self.language.context("--lang is required for this command")
    }

    pub fn domain(&self) -> Result<Domain> {
        self.domain.context("--domain is required for this command")
    }

    pub fn meta(&self, split: SplitKind) -> SplitMeta {
        let d = SplitMeta::default();
        SplitMeta {
            language: self.language.unwrap_or(d.language),
            domain: self.domain.unwrap_or(d.domain),
            split,
        }
    }

    /// The path for a split, checked to exist.
    pub fn split_path(&self, split: SplitKind) -> Result<&Path> {
        let (p, flag) = match split {
            SplitKind::Train => (&self.paths.train, "--train"),
            SplitKind::Dev => (&self.paths.dev, "--dev"),
            SplitKind::Test => (&self.paths.test, "--test"),
        };
        let p = p
            .as_deref()
            .with_context(|| format!("{flag} is required for this command"))?;
        if !p.exists() {
            bail!("{flag} path {} does not exist", p.display());
        }
        Ok(p)
    }

    /// Output directory: `--out`, else `$DIMABSA_CACHE_DIR/<command>`, else
    /// `runs/<command>`. Created if missing.
    pub fn output_dir(&self, command: &str) -> Result<PathBuf> {
        let dir = match &self.paths.output {
            Some(p) => p.clone(),
            None => match std::env::var_os(CACHE_DIR_ENV) {
                Some(root) => PathBuf::from(root).join(command),
                None => PathBuf::from("runs").join(command),
            },
        };
        std::fs::create_dir_all(&dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(dir)
    }
}
