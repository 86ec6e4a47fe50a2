//! The training loop with cross-epoch counting and curriculum masking.
//!
//! Each epoch every live sample is forwarded once. The cosine readout from
//! that pass classifies the sample, the class (plus the retention schedule)
//! decides whether its loss reaches the optimizer, and after the epoch the
//! counters are advanced and flagged samples are dropped from the live set.
//!
//! A run directory holds:
//!
//! | file | content |
//! |------|---------|
//! | `config.json` | fully resolved [`TrainConfig`] |
//! | `epochs.jsonl` | one [`EpochReport`] per line, flushed per epoch |
//! | `removals.csv` | `sample_id,epoch,trigger,cic,tic`, flushed per epoch |
//! | `weights.json` | final [`Network`] |
//! | `summary.json` | [`RunSummary`] |
//! | `metrics.csv` | header plus one row of detection and verification metrics |

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aam_loss::{aam_forward, LossConfig};
use crate::curriculum::{gradient_mask, retention_threshold, CurriculumSchedule};
use crate::detector::{CounterToggles, Detector, DetectorConfig, RemovalEvent, SampleCounter};
use crate::error::{CecError, Result};
use crate::metrics::{detection_metrics, eer, verification_trials, DetectionReport};
use crate::model::{ForwardPass, ModelKind, Network, Sgd, SgdConfig};
use crate::synth_data::{ncr_to_p, LabeledDataset, SyntheticSpec};
use crate::taxonomy::{classify_sample, derive_observation, ClassifierThresholds, SampleClass};

/// Independent random streams derived from one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RngStream {
    Init = 0,
    Shuffle = 1,
    Trials = 2,
}

pub fn seeded_rng(seed: u64, stream: RngStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Toggles {
    pub enable_cic: bool,
    pub enable_tic: bool,
    pub enable_curriculum: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Self {
            enable_cic: true,
            enable_tic: true,
            enable_curriculum: true,
        }
    }
}

impl Toggles {
    pub fn baseline() -> Self {
        Self {
            enable_cic: false,
            enable_tic: false,
            enable_curriculum: false,
        }
    }
}

/// Where the per-epoch classification readout comes from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationPass {
    /// The same forward pass that computes the training loss.
    #[default]
    TrainingForward,
    /// A separate pass over all live samples before any update in the epoch.
    EvaluationPass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: u32,
    pub batch_size: usize,
    pub optimizer: SgdConfig,
    pub model: ModelKind,
    pub seed: u64,
    pub thresholds: ClassifierThresholds,
    pub detector: DetectorConfig,
    pub schedule: CurriculumSchedule,
    pub loss: LossConfig,
    pub toggles: Toggles,
    pub observation_pass: ObservationPass,
    /// Target and non-target pairs each, drawn from held-out samples.
    pub trial_pairs: usize,
    /// Attach per-sample traces to every epoch report.
    pub record_samples: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            batch_size: 128,
            optimizer: SgdConfig::default(),
            model: ModelKind::default(),
            seed: 0,
            thresholds: ClassifierThresholds::default(),
            detector: DetectorConfig::default(),
            schedule: CurriculumSchedule::default(),
            loss: LossConfig::default(),
            toggles: Toggles::default(),
            observation_pass: ObservationPass::default(),
            trial_pairs: 10000,
            record_samples: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(CecError::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(CecError::InvalidConfig("batch_size must be >= 1".into()));
        }
        self.optimizer.validate()?;
        self.thresholds.validate()?;
        self.detector.validate()?;
        self.schedule.validate()?;
        self.loss.validate()
    }

    /// Every effective hyperparameter as `key=value` pairs.
    pub fn echo(&self) -> String {
        let (model, hidden, embedding) = match self.model {
            ModelKind::LinearHead => ("linear_head", 0, 0),
            ModelKind::Mlp { hidden, embedding_dim } => ("mlp", hidden, embedding_dim),
        };
        let margin_form = serde_json::to_value(self.loss.margin_form)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        let pass = serde_json::to_value(self.observation_pass)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        format!(
            "tau_p={:?} tau_n={:?} s1={:?} s2={:?} e1={} e2={} e3={} tau_cic={} tau_tic={} \
             margin={:?} scale={:?} margin_form={} epochs={} batch_size={} lr={:?} momentum={:?} \
             lr_decay={:?} model={} hidden={} embedding_dim={} seed={} enable_cic={} enable_tic={} \
             enable_curriculum={} observation_pass={} trial_pairs={}",
            self.thresholds.tau_p,
            self.thresholds.tau_n,
            self.schedule.s1,
            self.schedule.s2,
            self.schedule.e1,
            self.schedule.e2,
            self.schedule.e3,
            self.detector.tau_cic,
            self.detector.tau_tic,
            self.loss.margin,
            self.loss.scale,
            margin_form,
            self.epochs,
            self.batch_size,
            self.optimizer.learning_rate,
            self.optimizer.momentum,
            self.optimizer.lr_decay,
            model,
            hidden,
            embedding,
            self.seed,
            self.toggles.enable_cic,
            self.toggles.enable_tic,
            self.toggles.enable_curriculum,
            pass,
            self.trial_pairs,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTrace {
    pub sample_id: usize,
    pub class: SampleClass,
    pub predicted_label: usize,
    pub s_p: f64,
    pub s_n: f64,
    pub loss: f64,
    /// Whether this sample's loss reached the optimizer this epoch.
    pub participated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: u32,
    pub live: usize,
    pub easy: usize,
    pub hard: usize,
    pub inconsistent: usize,
    pub tau_m: f64,
    pub learning_rate: f64,
    pub participating: usize,
    pub mean_loss: f64,
    /// Mean loss over participating samples; 0 when none participated.
    pub mean_masked_loss: f64,
    pub removals: Vec<RemovalEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<SampleTrace>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterRecord {
    pub sample_id: usize,
    #[serde(flatten)]
    pub counter: SampleCounter,
}

/// End-of-run digest persisted as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: TrainConfig,
    pub dataset: SyntheticSpec,
    pub ncr: f64,
    pub p: f64,
    pub samples: usize,
    pub noisy: usize,
    pub epochs_completed: u32,
    pub live_final: usize,
    pub noisy_live_final: usize,
    pub removals: Vec<RemovalEvent>,
    pub detection: DetectionReport,
    pub eer: Option<f64>,
    pub weights_file: Option<String>,
    pub counters: Vec<CounterRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub config: TrainConfig,
    pub epochs: Vec<EpochReport>,
    pub summary: RunSummary,
    pub network: Network,
}

impl RunLog {
    /// Fraction of live samples at the end of training that are noisy.
    pub fn residual_noise_fraction(&self) -> f64 {
        if self.summary.live_final == 0 {
            0.0
        } else {
            self.summary.noisy_live_final as f64 / self.summary.live_final as f64
        }
    }
}

/// Training state for one run over one dataset.
pub struct Trainer<'a> {
    config: TrainConfig,
    dataset: &'a LabeledDataset,
    inputs: Vec<Vec<f64>>,
    network: Network,
    optimizer: Sgd,
    detector: Detector,
    removals: Vec<RemovalEvent>,
    shuffle: ChaCha8Rng,
}

struct Readout {
    class: SampleClass,
    predicted_label: usize,
    s_p: f64,
    s_n: f64,
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig, dataset: &'a LabeledDataset) -> Result<Self> {
        config.validate()?;
        dataset.validate()?;
        if dataset.is_empty() {
            return Err(CecError::InvalidInput("dataset has no training samples".into()));
        }
        let mut init = seeded_rng(config.seed, RngStream::Init);
        let network = Network::new(config.model, dataset.dim(), dataset.classes(), &mut init)?;
        let optimizer = Sgd::new(&network, config.optimizer.momentum);
        let toggles = CounterToggles {
            cic: config.toggles.enable_cic,
            tic: config.toggles.enable_tic,
        };
        let detector = Detector::new(config.detector, toggles, 0..dataset.len())?;
        Ok(Self {
            inputs: (0..dataset.len()).map(|i| dataset.row_f64(i)).collect(),
            shuffle: seeded_rng(config.seed, RngStream::Shuffle),
            config,
            dataset,
            network,
            optimizer,
            detector,
            removals: Vec::new(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn detector(&self) -> &Detector {
        &self.detector
    }

    fn readout(&self, id: usize, cosines: &[f64], epoch: u32) -> Result<Readout> {
        let obs = derive_observation(cosines, self.dataset.observed_labels[id], id, epoch)?;
        Ok(Readout {
            class: classify_sample(&obs, &self.config.thresholds),
            predicted_label: obs.predicted_label,
            s_p: obs.s_p,
            s_n: obs.s_n,
        })
    }

    fn forward(&self, id: usize, epoch: u32) -> Result<ForwardPass> {
        self.network.forward(&self.inputs[id]).map_err(|e| CecError::TrainingHalted {
            epoch,
            reason: format!("sample {id}: {e}"),
        })
    }

    fn participates(&self, r: &Readout, epoch: u32) -> bool {
        !self.config.toggles.enable_curriculum
            || gradient_mask(r.class, r.s_p, epoch, &self.config.schedule)
    }

    /// Runs epoch `epoch` (1-based) and returns its report.
    pub fn train_epoch(&mut self, epoch: u32) -> Result<EpochReport> {
        if epoch == 0 || epoch > self.config.epochs {
            return Err(CecError::InvalidInput(format!(
                "epoch {epoch} outside 1..={}",
                self.config.epochs
            )));
        }
        let mut order: Vec<usize> = self.detector.live_ids().collect();
        if order.is_empty() {
            return Err(CecError::TrainingHalted {
                epoch,
                reason: format!(
                    "no live samples remain ({} removed of {})",
                    self.dataset.len(),
                    self.dataset.len()
                ),
            });
        }
        let live = order.len();
        let tau_m = retention_threshold(epoch, &self.config.schedule);
        let lr = self.config.optimizer.rate_at(epoch);

        let mut pre_epoch: BTreeMap<usize, Readout> = BTreeMap::new();
        if self.config.observation_pass == ObservationPass::EvaluationPass {
            for &id in &order {
                let pass = self.forward(id, epoch)?;
                pre_epoch.insert(id, self.readout(id, &pass.cosines, epoch)?);
            }
        }

        order.shuffle(&mut self.shuffle);
        let mut classes: Vec<(usize, SampleClass)> = Vec::with_capacity(live);
        let mut traces = Vec::new();
        let (mut loss_sum, mut masked_sum, mut participating) = (0.0, 0.0, 0usize);
        let mut grads = self.network.zero_gradients();

        for batch in order.chunks(self.config.batch_size) {
            grads.zero();
            let upstream = 1.0 / batch.len() as f64;
            for &id in batch {
                let label = self.dataset.observed_labels[id];
                let pass = self.forward(id, epoch)?;
                let out = aam_forward(&pass.cosines, label, &self.config.loss)?;
                let readout = match pre_epoch.remove(&id) {
                    Some(r) => r,
                    None => self.readout(id, &pass.cosines, epoch)?,
                };
                let used = self.participates(&readout, epoch);
                if used {
                    let g: Vec<f64> = out.grad_cosines.iter().map(|g| g * upstream).collect();
                    self.network.backward(&pass, &g, &mut grads);
                    masked_sum += out.loss;
                    participating += 1;
                }
                loss_sum += out.loss;
                classes.push((id, readout.class));
                if self.config.record_samples {
                    traces.push(SampleTrace {
                        sample_id: id,
                        class: readout.class,
                        predicted_label: readout.predicted_label,
                        s_p: readout.s_p,
                        s_n: readout.s_n,
                        loss: out.loss,
                        participated: used,
                    });
                }
            }
            self.optimizer.step(&mut self.network, &grads, lr);
        }

        let count = |c: SampleClass| classes.iter().filter(|(_, k)| *k == c).count();
        let (easy, hard, inconsistent) = (
            count(SampleClass::Easy),
            count(SampleClass::Hard),
            count(SampleClass::Inconsistent),
        );
        let removals = self.detector.end_of_epoch(classes, epoch)?;
        self.removals.extend_from_slice(&removals);
        if self.config.record_samples {
            traces.sort_by_key(|t| t.sample_id);
        }

        Ok(EpochReport {
            epoch,
            live,
            easy,
            hard,
            inconsistent,
            tau_m,
            learning_rate: lr,
            participating,
            mean_loss: loss_sum / live as f64,
            mean_masked_loss: if participating == 0 { 0.0 } else { masked_sum / participating as f64 },
            removals,
            samples: self.config.record_samples.then_some(traces),
        })
    }

    /// Scores the run against ground truth and the held-out trials.
    pub fn summarize(&self, epochs_completed: u32, weights_file: Option<String>) -> Result<RunSummary> {
        let ds = self.dataset;
        let removed = self.detector.removed_ids();
        let detection = detection_metrics(&removed, &ds.is_noise)?;

        let eer = if ds.heldout_len() > 0 && self.config.trial_pairs > 0 {
            let emb: Vec<Vec<f64>> = (0..ds.heldout_len())
                .map(|i| self.network.embed(&ds.heldout_row_f64(i)))
                .collect();
            let mut rng_seed = seeded_rng(self.config.seed, RngStream::Trials);
            let trial_seed = rand::Rng::random::<u64>(&mut rng_seed);
            match verification_trials(&emb, &ds.heldout_labels, self.config.trial_pairs, trial_seed) {
                Ok(trials) => Some(eer(&trials)?),
                Err(CecError::UndefinedMetric(_)) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };

        let live_ids: Vec<usize> = self.detector.live_ids().collect();
        Ok(RunSummary {
            config: self.config.clone(),
            dataset: ds.spec.clone(),
            ncr: ds.spec.ncr,
            p: ncr_to_p(ds.spec.ncr),
            samples: ds.len(),
            noisy: ds.noise_total(),
            epochs_completed,
            live_final: live_ids.len(),
            noisy_live_final: live_ids.iter().filter(|&&i| ds.is_noise[i]).count(),
            removals: self.removals.clone(),
            detection,
            eer,
            weights_file,
            counters: self
                .detector
                .registry()
                .iter()
                .map(|(&sample_id, &counter)| CounterRecord { sample_id, counter })
                .collect(),
        })
    }

    fn into_network(self) -> Network {
        self.network
    }
}

fn run_with<'a, F>(
    config: &TrainConfig,
    dataset: &'a LabeledDataset,
    mut on_epoch: F,
) -> Result<(Vec<EpochReport>, Trainer<'a>)>
where
    F: FnMut(&EpochReport) -> Result<()>,
{
    let mut trainer = Trainer::new(config.clone(), dataset)?;
    let mut reports = Vec::with_capacity(config.epochs as usize);
    for m in 1..=config.epochs {
        let report = trainer.train_epoch(m)?;
        log::debug!(
            "epoch {m}: live={} easy={} hard={} inconsistent={} removed={} tau_m={:.4}",
            report.live,
            report.easy,
            report.hard,
            report.inconsistent,
            report.removals.len(),
            report.tau_m
        );
        on_epoch(&report)?;
        reports.push(report);
    }
    Ok((reports, trainer))
}

/// Full run, in memory only.
pub fn run(config: &TrainConfig, dataset: &LabeledDataset) -> Result<RunLog> {
    let (epochs, trainer) = run_with(config, dataset, |_| Ok(()))?;
    let summary = trainer.summarize(config.epochs, None)?;
    Ok(RunLog {
        config: config.clone(),
        epochs,
        summary,
        network: trainer.into_network(),
    })
}

/// Full run, persisting the log to `dir` as it goes. A run that dies part
/// way leaves `config.json` plus a valid prefix of `epochs.jsonl` and
/// `removals.csv`.
pub fn run_to_dir(config: &TrainConfig, dataset: &LabeledDataset, dir: &Path) -> Result<RunLog> {
    run_to_dir_with(config, dataset, dir, |_| {})
}

/// Like [`run_to_dir`], calling `progress` after each epoch is persisted.
pub fn run_to_dir_with<P>(config: &TrainConfig, dataset: &LabeledDataset, dir: &Path, mut progress: P) -> Result<RunLog>
where
    P: FnMut(&EpochReport),
{
    config.validate()?;
    let at = |epoch: u32, path: PathBuf| move |e: std::io::Error| CecError::RunIo { epoch, path, source: e };
    fs::create_dir_all(dir).map_err(at(0, dir.to_path_buf()))?;

    let config_path = dir.join("config.json");
    write_json(&config_path, config).map_err(at(0, config_path.clone()))?;

    let epochs_path = dir.join("epochs.jsonl");
    let mut epochs_out = BufWriter::new(File::create(&epochs_path).map_err(at(0, epochs_path.clone()))?);
    let removals_path = dir.join("removals.csv");
    let mut removals_out = BufWriter::new(File::create(&removals_path).map_err(at(0, removals_path.clone()))?);
    writeln!(removals_out, "sample_id,epoch,trigger,cic,tic").map_err(at(0, removals_path.clone()))?;

    let (epochs, trainer) = run_with(config, dataset, |report| {
        let m = report.epoch;
        let line = serde_json::to_string(report).map_err(|e| CecError::format(&epochs_path, e))?;
        writeln!(epochs_out, "{line}")
            .and_then(|_| epochs_out.flush())
            .map_err(at(m, epochs_path.clone()))?;
        for ev in &report.removals {
            writeln!(removals_out, "{},{},{},{},{}", ev.sample_id, ev.epoch, ev.trigger, ev.cic, ev.tic)
                .map_err(at(m, removals_path.clone()))?;
        }
        removals_out.flush().map_err(at(m, removals_path.clone()))?;
        progress(report);
        Ok(())
    })?;

    let last = config.epochs;
    let weights_path = dir.join("weights.json");
    write_json(&weights_path, trainer.network()).map_err(at(last, weights_path.clone()))?;
    let summary = trainer.summarize(last, Some("weights.json".into()))?;
    let summary_path = dir.join("summary.json");
    write_json(&summary_path, &summary).map_err(at(last, summary_path.clone()))?;
    let metrics_path = dir.join("metrics.csv");
    fs::write(&metrics_path, format!("{}\n{}\n", METRICS_CSV_HEADER, metrics_csv_row(&summary)))
        .map_err(at(last, metrics_path.clone()))?;

    Ok(RunLog {
        config: config.clone(),
        epochs,
        summary,
        network: trainer.into_network(),
    })
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    fs::write(path, text + "\n")
}

pub const METRICS_CSV_HEADER: &str =
    "ncr,p,samples,noisy,removed,precision,recall,f1,accuracy,eer,first_removal_epoch,last_removal_epoch";

/// One CSV row matching [`METRICS_CSV_HEADER`]. A missing EER is left empty.
pub fn metrics_csv_row(s: &RunSummary) -> String {
    let first = s.removals.iter().map(|e| e.epoch).min();
    let last = s.removals.iter().map(|e| e.epoch).max();
    let opt = |v: Option<u32>| v.map(|x| x.to_string()).unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        s.ncr,
        s.p,
        s.samples,
        s.noisy,
        s.removals.len(),
        s.detection.precision,
        s.detection.recall,
        s.detection.f1,
        s.detection.accuracy,
        s.eer.map(|e| e.to_string()).unwrap_or_default(),
        opt(first),
        opt(last),
    )
}

/// Reads `summary.json` from a run directory (or the file itself).
pub fn load_summary(path: &Path) -> Result<RunSummary> {
    let file = if path.is_dir() { path.join("summary.json") } else { path.to_path_buf() };
    let text = fs::read_to_string(&file).map_err(|e| CecError::io(&file, e))?;
    serde_json::from_str(&text).map_err(|e| CecError::format(&file, e))
}

/// Reads the per-epoch reports of a (possibly interrupted) run.
pub fn load_epochs(dir: &Path) -> Result<Vec<EpochReport>> {
    let path = dir.join("epochs.jsonl");
    let text = fs::read_to_string(&path).map_err(|e| CecError::io(&path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CecError::format(&path, format!("line {}: {e}", i + 1))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth_data::generate;

    fn tiny_dataset() -> LabeledDataset {
        generate(&SyntheticSpec {
            clean_classes: 4,
            samples_per_class: 12,
            dim: 6,
            extra_classes: 2,
            ncr: 0.25,
            seed: 3,
            heldout_per_class: 4,
            ..Default::default()
        })
        .unwrap()
    }

    fn quick(toggles: Toggles) -> TrainConfig {
        TrainConfig {
            epochs: 12,
            batch_size: 8,
            detector: DetectorConfig::new(2, 5).unwrap(),
            schedule: CurriculumSchedule::new(2, 4, 8, 0.6, 1.0).unwrap(),
            model: ModelKind::Mlp { hidden: 8, embedding_dim: 6 },
            trial_pairs: 50,
            toggles,
            ..Default::default()
        }
    }

    #[test]
    fn defaults_echo_published_values() {
        let echo = TrainConfig::default().echo();
        for kv in [
            "tau_p=0.6", "tau_n=0.4", "s1=0.6", "s2=1.0", "e1=6", "e2=10", "e3=100", "tau_cic=25",
            "tau_tic=95", "margin=0.2", "scale=32", "epochs=150",
        ] {
            assert!(echo.split(' ').any(|t| t == kv || t.starts_with(&format!("{kv}."))), "missing {kv} in {echo}");
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let ds = tiny_dataset();
        let mut c = quick(Toggles::default());
        c.detector = DetectorConfig { tau_cic: 5, tau_tic: 2 };
        assert!(matches!(Trainer::new(c, &ds), Err(CecError::InvalidConfig(_))));
        let mut c = quick(Toggles::default());
        c.schedule.e2 = c.schedule.e1;
        assert!(Trainer::new(c, &ds).is_err());
        let mut c = quick(Toggles::default());
        c.epochs = 0;
        assert!(Trainer::new(c, &ds).is_err());
    }

    #[test]
    fn warmup_trains_everything() {
        let ds = tiny_dataset();
        let mut t = Trainer::new(quick(Toggles::default()), &ds).unwrap();
        for m in 1..=2 {
            let r = t.train_epoch(m).unwrap();
            assert_eq!(r.participating, r.live);
            assert_eq!(r.easy + r.hard + r.inconsistent, r.live);
        }
    }

    #[test]
    fn baseline_never_removes_or_masks() {
        let ds = tiny_dataset();
        let log = run(&quick(Toggles::baseline()), &ds).unwrap();
        for r in &log.epochs {
            assert!(r.removals.is_empty());
            assert_eq!(r.participating, r.live);
            assert_eq!(r.live, ds.len());
        }
    }

    #[test]
    fn removed_samples_disappear() {
        let ds = tiny_dataset();
        let mut cfg = quick(Toggles::default());
        cfg.record_samples = true;
        let log = run(&cfg, &ds).unwrap();
        let mut gone = std::collections::BTreeSet::new();
        for r in &log.epochs {
            let traces = r.samples.as_ref().unwrap();
            assert_eq!(traces.len(), r.live);
            for t in traces {
                assert!(!gone.contains(&t.sample_id));
            }
            for ev in &r.removals {
                assert!(gone.insert(ev.sample_id), "removed twice");
            }
        }
        assert_eq!(gone.len(), log.summary.removals.len());
    }

    #[test]
    fn evaluation_pass_mode_runs() {
        let ds = tiny_dataset();
        let mut cfg = quick(Toggles::default());
        cfg.observation_pass = ObservationPass::EvaluationPass;
        let log = run(&cfg, &ds).unwrap();
        assert_eq!(log.epochs.len(), 12);
    }

    #[test]
    fn epoch_out_of_range() {
        let ds = tiny_dataset();
        let mut t = Trainer::new(quick(Toggles::default()), &ds).unwrap();
        assert!(t.train_epoch(0).is_err());
        assert!(t.train_epoch(13).is_err());
    }

    #[test]
    fn empty_live_set_halts() {
        let ds = tiny_dataset();
        let mut t = Trainer::new(quick(Toggles::default()), &ds).unwrap();
        t.train_epoch(1).unwrap();
        for m in 2..=4 {
            let ids: Vec<usize> = t.detector.live_ids().collect();
            t.detector
                .end_of_epoch(ids.into_iter().map(|i| (i, SampleClass::Inconsistent)), m)
                .unwrap();
        }
        assert_eq!(t.detector.live_count(), 0);
        assert!(matches!(t.train_epoch(5), Err(CecError::TrainingHalted { epoch: 5, .. })));
    }
}
