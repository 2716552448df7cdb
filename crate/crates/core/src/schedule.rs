//! Dissipation-time schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `K` blur widths spaced evenly on a log axis, with `t_k = σ_B,k² / 2`.
///
/// Index `k-1` of each list holds level `k`; level 0 (the clean image,
/// `t_0 = 0`) is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlurSchedule {
    pub sigma_b: Vec<f64>,
    pub times: Vec<f64>,
}

impl BlurSchedule {
    pub fn new(k_steps: usize, sigma_min: f64, sigma_max: f64) -> Result<Self> {
        if k_steps < 2 {
            return Err(Error::InvalidArgument(format!(
                "schedule needs at least 2 steps, got {k_steps}"
            )));
        }
        if !(sigma_min > 0.0 && sigma_min < sigma_max && sigma_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < sigma_min < sigma_max, got {sigma_min} and {sigma_max}"
            )));
        }
        let (lo, hi) = (sigma_min.ln(), sigma_max.ln());
        let denom = (k_steps - 1) as f64;
        let mut sigma_b: Vec<f64> = (1..=k_steps)
            .map(|k| {
                let a = (k_steps - k) as f64 / denom;
                let b = (k - 1) as f64 / denom;
                (lo * a + hi * b).exp()
            })
            .collect();
        // exp(ln x) is not always x; pin the endpoints.
        sigma_b[0] = sigma_min;
        sigma_b[k_steps - 1] = sigma_max;
        let times = sigma_b.iter().map(|s| s * s / 2.0).collect();
        Ok(Self { sigma_b, times })
    }

    /// Number of steps `K`.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `t_k` for `k ∈ 0..=K`, with `t_0 = 0`.
    pub fn time(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.times[k - 1]
        }
    }

    pub fn sigma_b(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.sigma_b[k - 1]
        }
    }

    pub fn terminal_time(&self) -> f64 {
        *self.times.last().expect("schedule is never empty")
    }
}

pub fn build_schedule(k_steps: usize, sigma_min: f64, sigma_max: f64) -> Result<BlurSchedule> {
    BlurSchedule::new(k_steps, sigma_min, sigma_max)
}
