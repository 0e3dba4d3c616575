//! Linear warmup per mini-batch, then reduce-on-plateau per validation epoch.
//! The learning-rate multiplier is the product of the two stages.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub warmup_ratio: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            warmup_ratio: 0.1,
            plateau_factor: 0.5,
            plateau_patience: 2,
        }
    }
}

/// Stateful schedule driven by the training loop.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    cfg: ScheduleConfig,
    warmup_steps: usize,
    plateau_scale: f64,
    best: Option<f64>,
    bad_epochs: usize,
}

impl LrSchedule {
    pub fn new(cfg: ScheduleConfig, total_steps: usize) -> Self {
        let warmup_steps = (cfg.warmup_ratio * total_steps as f64).round() as usize;
        LrSchedule {
            cfg,
            warmup_steps,
            plateau_scale: 1.0,
            best: None,
            bad_epochs: 0,
        }
    }

    pub fn warmup_steps(&self) -> usize {
        self.warmup_steps
    }

    /// Ramp factor for the 0-based optimizer step about to be taken.
    pub fn warmup_factor(&self, step: usize) -> f64 {
        if self.warmup_steps == 0 || step >= self.warmup_steps {
            1.0
        } else {
            step as f64 / self.warmup_steps as f64
        }
    }

    pub fn multiplier(&self, step: usize) -> f64 {
        self.warmup_factor(step) * self.plateau_scale
    }

    pub fn plateau_scale(&self) -> f64 {
        self.plateau_scale
    }

    /// Records a validation metric (lower is better) after an epoch that
    /// ended with `steps_done` optimizer steps. Epochs that end inside the
    /// warmup are ignored. Returns true when the rate was reduced.
    pub fn end_epoch(&mut self, metric: f64, steps_done: usize) -> bool {
        if steps_done < self.warmup_steps {
            return false;
        }
        match self.best {
            Some(best) if metric >= best => {
                self.bad_epochs += 1;
                if self.bad_epochs >= self.cfg.plateau_patience {
                    self.plateau_scale *= self.cfg.plateau_factor;
                    self.bad_epochs = 0;
                    return true;
                }
            }
            _ => {
                self.best = Some(metric);
                self.bad_epochs = 0;
            }
        }
        false
    }
}

/// Validation result of one finished epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMark {
    /// Optimizer steps completed when the epoch ended.
    pub end_step: usize,
    pub metric: f64,
}

/// Pure form of the schedule: the multiplier at `step` given every epoch
/// that finished at or before it.
pub fn lr_multiplier(
    step: usize,
    total_steps: usize,
    history: &[EpochMark],
    cfg: &ScheduleConfig,
) -> f64 {
    let mut sched = LrSchedule::new(*cfg, total_steps);
    for mark in history.iter().filter(|m| m.end_step <= step) {
        sched.end_epoch(mark.metric, mark.end_step);
    }
    sched.multiplier(step)
}
