use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step schedule: the rate is halved once a quarter of the epochs have run
/// and halved again at the halfway point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub total_epochs: usize,
}

impl LrSchedule {
    pub fn new(base_lr: f64, total_epochs: usize) -> Result<Self> {
        if !base_lr.is_finite() || base_lr <= 0.0 {
            return Err(Error::Config(format!("base learning rate {base_lr} must be positive")));
        }
        if total_epochs == 0 {
            return Err(Error::Config("schedule needs at least one epoch".into()));
        }
        Ok(Self {
            base_lr,
            total_epochs,
        })
    }

    /// `0.1 × network adjustment × dataset factor`.
    pub fn from_factors(network_adjustment: f64, dataset_factor: f64, total_epochs: usize) -> Result<Self> {
        Self::new(0.1 * network_adjustment * dataset_factor, total_epochs)
    }

    pub fn multiplier(&self, epoch: usize) -> Result<f64> {
        if epoch >= self.total_epochs {
            return Err(Error::EpochOutOfRange {
                epoch,
                total: self.total_epochs,
            });
        }
        let quarter = self.total_epochs.div_ceil(4);
        let half = self.total_epochs.div_ceil(2);
        Ok(if epoch < quarter {
            1.0
        } else if epoch < half {
            0.5
        } else {
            0.25
        })
    }

    pub fn lr_at(&self, epoch: usize) -> Result<f64> {
        Ok(self.base_lr * self.multiplier(epoch)?)
    }
}
