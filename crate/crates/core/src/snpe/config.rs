use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::ScheduleKind;

/// Training protocol. Field defaults follow the usual 20 x 1000 budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub rounds: usize,
    pub simulations: usize,
    /// Defensive mixture fraction.
    pub alpha: f64,
    /// Effective ratio for the adaptive kernel bandwidth.
    pub beta: f64,
    pub schedule: ScheduleKind,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    /// Adaptive calibration kernel.
    pub ack: bool,
    /// Defensive sampling.
    pub ds: bool,
    /// Multiple importance sampling with recycling.
    pub misr: bool,
    /// Parameter space transformation.
    pub pst: bool,
    pub components: usize,
    pub hidden: Vec<usize>,
    /// Covariance shrinkage toward its diagonal.
    pub shrinkage: f64,
    /// Redraws allowed per sample when the simulator overflows.
    pub max_resimulations: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            rounds: 20,
            simulations: 1000,
            alpha: 0.2,
            beta: 0.5,
            schedule: ScheduleKind::Log,
            batch_size: 100,
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            patience: 20,
            max_epochs: 500,
            validation_fraction: 0.05,
            ack: true,
            ds: true,
            misr: true,
            pst: true,
            components: 8,
            hidden: vec![50, 50],
            shrinkage: 0.0,
            max_resimulations: 1000,
        }
    }
}

impl TrainConfig {
    /// Weighted SNPE baseline: every strategy switched off.
    pub fn baseline() -> Self {
        TrainConfig { ack: false, ds: false, misr: false, pst: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.rounds == 0 {
            return bad("rounds must be >= 1");
        }
        if self.simulations < 2 {
            return bad("simulations must be >= 2");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad("beta must lie in (0, 1]");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must lie in (0, 1)");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch_size, max_epochs and patience must be >= 1");
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("learning_rate must be > 0 and weight_decay >= 0");
        }
        if self.components == 0 || self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("components and hidden widths must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.shrinkage) {
            return bad("shrinkage must lie in [0, 1]");
        }
        Ok(())
    }
}
