//! Noisy-label detection by cross-epoch counting.
//!
//! Samples are classified every epoch as easy, hard or inconsistent from the
//! cosine readout of an angular-margin classifier. Inconsistent epochs are
//! counted two ways (the current consecutive run and the running total) and a
//! sample whose count passes either threshold is dropped from training.
//! A retention schedule gates which hard samples may backpropagate.
//!
//! The crate ships a self-contained trainer over synthetic clustered data
//! with injected open-set label noise, so detection quality can be measured
//! against ground truth.

pub mod aam_loss;
pub mod curriculum;
pub mod detector;
pub mod error;
pub mod metrics;
pub mod model;
pub mod synth_data;
pub mod taxonomy;
pub mod trainer;

pub use aam_loss::{aam_backward, aam_forward, cosine_logits, HeadWeights, LossConfig, LossOutput, MarginForm};
pub use curriculum::{difficulty, gradient_mask, retention_threshold, CurriculumSchedule};
pub use detector::{
    end_of_epoch, is_noisy, update_counter, CounterToggles, Detector, DetectorConfig, RemovalEvent, SampleCounter,
    Trigger,
};
pub use error::{CecError, Result};
pub use metrics::{detection_metrics, eer, verification_trials, DetectionReport, Trial, TrialSet};
pub use model::{ModelKind, Network, Sgd, SgdConfig};
pub use synth_data::{generate, ncr_to_p, LabeledDataset, SyntheticSpec};
pub use taxonomy::{classify_sample, derive_observation, ClassifierThresholds, EpochObservation, SampleClass};
pub use trainer::{run, run_to_dir, EpochReport, RunLog, RunSummary, Toggles, TrainConfig, Trainer};
