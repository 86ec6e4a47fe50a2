//! Per-epoch three-way sample taxonomy.
//!
//! Every live sample is read out once per epoch as an [`EpochObservation`]
//! (labeled class, predicted class, positive cosine `s_p` and strongest
//! negative cosine `s_n`) and sorted into [`SampleClass::Easy`],
//! [`SampleClass::Hard`] or [`SampleClass::Inconsistent`].
//!
//! All cosines are similarities: larger means closer.

use serde::{Deserialize, Serialize};

use crate::error::{CecError, Result};

/// Model readout for one sample at one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochObservation {
    pub sample_id: usize,
    pub epoch: u32,
    pub true_label: usize,
    pub predicted_label: usize,
    pub s_p: f64,
    pub s_n: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierThresholds {
    pub tau_p: f64,
    pub tau_n: f64,
}

impl Default for ClassifierThresholds {
    fn default() -> Self {
        Self {
            tau_p: 0.6,
            tau_n: 0.4,
        }
    }
}

impl ClassifierThresholds {
    pub fn new(tau_p: f64, tau_n: f64) -> Result<Self> {
        let t = Self { tau_p, tau_n };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tau_p", self.tau_p), ("tau_n", self.tau_n)] {
            if !v.is_finite() || !(-1.0..=1.0).contains(&v) {
                return Err(CecError::InvalidConfig(format!(
                    "{name} must be a finite cosine in [-1, 1], got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Integer codes follow the usual convention: easy 0, hard 1, inconsistent 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum SampleClass {
    Easy = 0,
    Hard = 1,
    Inconsistent = 2,
}

impl SampleClass {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(SampleClass::Easy),
            1 => Some(SampleClass::Hard),
            2 => Some(SampleClass::Inconsistent),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SampleClass::Easy => "easy",
            SampleClass::Hard => "hard",
            SampleClass::Inconsistent => "inconsistent",
        }
    }
}

/// Builds an observation from a margin-free cosine row.
///
/// The prediction is the cosine argmax with ties going to the lowest class
/// index; `s_n` is the largest cosine among the non-labeled classes.
pub fn derive_observation(
    cosine_row: &[f64],
    true_label: usize,
    sample_id: usize,
    epoch: u32,
) -> Result<EpochObservation> {
    let k = cosine_row.len();
    if k < 2 {
        return Err(CecError::InvalidInput(format!(
            "cosine row needs at least 2 classes, got {k}"
        )));
    }
    if true_label >= k {
        return Err(CecError::InvalidInput(format!(
            "true label {true_label} out of range for {k} classes"
        )));
    }
    if let Some((j, c)) = cosine_row.iter().enumerate().find(|(_, c)| !c.is_finite()) {
        return Err(CecError::InvalidInput(format!(
            "non-finite cosine {c} at class {j}"
        )));
    }

    let mut predicted = 0;
    for (j, &c) in cosine_row.iter().enumerate().skip(1) {
        if c > cosine_row[predicted] {
            predicted = j;
        }
    }
    let (s_p, s_n) = positive_negative(cosine_row, true_label);

    Ok(EpochObservation {
        sample_id,
        epoch,
        true_label,
        predicted_label: predicted,
        s_p,
        s_n,
    })
}

/// `(cos to labeled class, max cos to any other class)`. Caller guarantees
/// `k >= 2` and `label < k`.
pub(crate) fn positive_negative(cosine_row: &[f64], label: usize) -> (f64, f64) {
    let s_n = cosine_row
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label)
        .map(|(_, &c)| c)
        .fold(f64::NEG_INFINITY, f64::max);
    (cosine_row[label], s_n)
}

pub fn classify_sample(obs: &EpochObservation, thresholds: &ClassifierThresholds) -> SampleClass {
    if obs.true_label != obs.predicted_label {
        SampleClass::Inconsistent
    } else if obs.s_p < thresholds.tau_p || obs.s_n > thresholds.tau_n {
        SampleClass::Hard
    } else {
        SampleClass::Easy
    }
}
