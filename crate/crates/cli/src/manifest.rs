use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::RunConfig;

/// Written next to every artifact a command produces.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: Option<u64>,
    pub config: RunConfig,
    pub extra: serde_json::Value,
    pub outputs: Vec<PathBuf>,
    pub hard_errors: usize,
    pub created_unix: u64,
}

impl Manifest {
    pub fn new(
        command: &str,
        cfg: &RunConfig,
        extra: serde_json::Value,
        outputs: &[PathBuf],
        hard_errors: usize,
    ) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed: cfg.seed,
            config: cfg.clone(),
            extra,
            outputs: outputs.to_vec(),
            hard_errors,
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}
