use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Review queue `B_t = max(0, B_{t-1} + A_t - R_t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BacklogState {
    pub level: f64,
    /// Breach when the level exceeds this (`β · C`).
    pub breach_threshold: f64,
    pub breached: bool,
}

impl BacklogState {
    pub fn new(initial: f64, breach_threshold: f64) -> Self {
        BacklogState {
            level: initial.max(0.0),
            breach_threshold,
            breached: initial > breach_threshold,
        }
    }

    pub fn step(&mut self, arrivals: f64, reviewed: f64) -> Result<f64> {
        if !(arrivals >= 0.0) || !(reviewed >= 0.0) {
            return Err(Error::Domain {
                value: if arrivals >= 0.0 { reviewed } else { arrivals },
                domain: "[0, inf)",
            });
        }
        self.level = (self.level + arrivals - reviewed).max(0.0);
        self.breached = self.level > self.breach_threshold;
        Ok(self.level)
    }
}
