//! Retention-threshold schedule and per-sample gradient participation.

use serde::{Deserialize, Serialize};

use crate::error::{CecError, Result};
use crate::taxonomy::SampleClass;

/// Piecewise-linear ramp for the hard-sample retention threshold.
///
/// Zero through the warm-up epoch `e1`, rising linearly to `s1` at `e2`,
/// then to `s2` at `e3`, and flat at `s2` afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSchedule {
    pub e1: u32,
    pub e2: u32,
    pub e3: u32,
    pub s1: f64,
    pub s2: f64,
}

impl Default for CurriculumSchedule {
    fn default() -> Self {
        Self {
            e1: 6,
            e2: 10,
            e3: 100,
            s1: 0.6,
            s2: 1.0,
        }
    }
}

impl CurriculumSchedule {
    pub fn new(e1: u32, e2: u32, e3: u32, s1: f64, s2: f64) -> Result<Self> {
        let s = Self { e1, e2, e3, s1, s2 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e1 < self.e2 && self.e2 < self.e3) {
            return Err(CecError::InvalidConfig(format!(
                "schedule epochs must satisfy e1 < e2 < e3 (got e1={} e2={} e3={})",
                self.e1, self.e2, self.e3
            )));
        }
        if !(self.s1.is_finite() && self.s2.is_finite() && 0.0 <= self.s1 && self.s1 <= self.s2 && self.s2 <= 2.0) {
            return Err(CecError::InvalidConfig(format!(
                "schedule bounds must satisfy 0 <= s1 <= s2 <= 2 (got s1={} s2={})",
                self.s1, self.s2
            )));
        }
        Ok(())
    }

    pub fn in_warmup(&self, epoch: u32) -> bool {
        epoch <= self.e1
    }
}

pub fn retention_threshold(epoch: u32, schedule: &CurriculumSchedule) -> f64 {
    let CurriculumSchedule { e1, e2, e3, s1, s2 } = *schedule;
    if epoch <= e1 {
        0.0
    } else if epoch <= e2 {
        s1 * f64::from(epoch - e1) / f64::from(e2 - e1)
    } else if epoch <= e3 {
        s1 + (s2 - s1) * f64::from(epoch - e2) / f64::from(e3 - e2)
    } else {
        s2
    }
}

/// `1 - s_p`; ranges over `[0, 2]`.
pub fn difficulty(s_p: f64) -> f64 {
    1.0 - s_p
}

/// Whether a sample backpropagates at `epoch`.
///
/// Everything trains during warm-up. Afterwards easy samples always train,
/// inconsistent samples never do, and hard samples train only while their
/// difficulty is strictly below the retention threshold.
pub fn gradient_mask(cls: SampleClass, s_p: f64, epoch: u32, schedule: &CurriculumSchedule) -> bool {
    if schedule.in_warmup(epoch) {
        return true;
    }
    match cls {
        SampleClass::Easy => true,
        SampleClass::Inconsistent => false,
        SampleClass::Hard => difficulty(s_p) < retention_threshold(epoch, schedule),
    }
}
