//! Python bindings: the per-sample rules, the loss, metrics, and whole runs.

use std::collections::BTreeSet;
use std::path::PathBuf;

use cec_core::trainer::run_to_dir;
use cec_core::{
    CecError, ClassifierThresholds, CounterToggles, CurriculumSchedule, DetectorConfig, EpochObservation,
    LabeledDataset, LossConfig, MarginForm, SampleClass, SampleCounter, SyntheticSpec, TrainConfig, TrialSet,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: CecError) -> PyErr {
    match e {
        CecError::InvalidInput(_) | CecError::InvalidConfig(_) | CecError::ContractViolation(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_class(name: &str) -> PyResult<SampleClass> {
    match name {
        "easy" => Ok(SampleClass::Easy),
        "hard" => Ok(SampleClass::Hard),
        "inconsistent" => Ok(SampleClass::Inconsistent),
        other => Err(PyValueError::new_err(format!(
            "unknown sample class {other:?} (expected easy, hard or inconsistent)"
        ))),
    }
}

fn schedule(e1: u32, e2: u32, e3: u32, s1: f64, s2: f64) -> PyResult<CurriculumSchedule> {
    CurriculumSchedule::new(e1, e2, e3, s1, s2).map_err(to_py)
}

/// Parses a serde-serializable value into Python objects through JSON.
fn to_python<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Returns `(predicted_label, s_p, s_n)` for one row of cosines.
#[pyfunction]
fn derive_observation(cosines: Vec<f64>, label: usize) -> PyResult<(usize, f64, f64)> {
    let o = cec_core::derive_observation(&cosines, label, 0, 1).map_err(to_py)?;
    Ok((o.predicted_label, o.s_p, o.s_n))
}

#[pyfunction]
#[pyo3(signature = (true_label, predicted_label, s_p, s_n, tau_p=0.6, tau_n=0.4))]
fn classify_sample(
    true_label: usize,
    predicted_label: usize,
    s_p: f64,
    s_n: f64,
    tau_p: f64,
    tau_n: f64,
) -> PyResult<&'static str> {
    let th = ClassifierThresholds::new(tau_p, tau_n).map_err(to_py)?;
    let obs = EpochObservation { sample_id: 0, epoch: 1, true_label, predicted_label, s_p, s_n };
    Ok(cec_core::classify_sample(&obs, &th).as_str())
}

/// Advances `(cic, tic)` by one epoch's classification.
#[pyfunction]
fn update_counter(cic: u32, tic: u32, class_: &str) -> PyResult<(u32, u32)> {
    let c = SampleCounter { cic, tic, ..Default::default() };
    let next = cec_core::update_counter(c, parse_class(class_)?).map_err(to_py)?;
    Ok((next.cic, next.tic))
}

#[pyfunction]
#[pyo3(signature = (cic, tic, tau_cic=25, tau_tic=95))]
fn is_noisy(cic: u32, tic: u32, tau_cic: u32, tau_tic: u32) -> PyResult<bool> {
    let cfg = DetectorConfig::new(tau_cic, tau_tic).map_err(to_py)?;
    Ok(cec_core::is_noisy(&SampleCounter { cic, tic, ..Default::default() }, &cfg))
}

#[pyfunction]
#[pyo3(signature = (epoch, e1=6, e2=10, e3=100, s1=0.6, s2=1.0))]
fn retention_threshold(epoch: u32, e1: u32, e2: u32, e3: u32, s1: f64, s2: f64) -> PyResult<f64> {
    Ok(cec_core::retention_threshold(epoch, &schedule(e1, e2, e3, s1, s2)?))
}

#[pyfunction]
fn difficulty(s_p: f64) -> f64 {
    cec_core::difficulty(s_p)
}

#[pyfunction]
#[pyo3(signature = (class_, s_p, epoch, e1=6, e2=10, e3=100, s1=0.6, s2=1.0))]
#[allow(clippy::too_many_arguments)]
fn gradient_mask(class_: &str, s_p: f64, epoch: u32, e1: u32, e2: u32, e3: u32, s1: f64, s2: f64) -> PyResult<bool> {
    Ok(cec_core::gradient_mask(parse_class(class_)?, s_p, epoch, &schedule(e1, e2, e3, s1, s2)?))
}

#[pyfunction]
fn ncr_to_p(ncr: f64) -> f64 {
    cec_core::ncr_to_p(ncr)
}

/// Loss, cosine gradient, s_p and s_n for one sample.
#[pyfunction]
#[pyo3(signature = (cosines, label, scale=32.0, margin=0.2, angular=false))]
fn aam_forward<'py>(
    py: Python<'py>,
    cosines: Vec<f64>,
    label: usize,
    scale: f64,
    margin: f64,
    angular: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let margin_form = if angular { MarginForm::AdditiveAngular } else { MarginForm::AdditiveCosine };
    let cfg = LossConfig { scale, margin, margin_form };
    cfg.validate().map_err(to_py)?;
    let out = cec_core::aam_forward(&cosines, label, &cfg).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("loss", out.loss)?;
    d.set_item("grad", out.grad_cosines)?;
    d.set_item("s_p", out.s_p)?;
    d.set_item("s_n", out.s_n)?;
    Ok(d)
}

#[pyfunction]
fn eer(targets: Vec<f64>, nontargets: Vec<f64>) -> PyResult<f64> {
    cec_core::eer(&TrialSet::from_scores(&targets, &nontargets)).map_err(to_py)
}

/// Precision, recall, F1 and accuracy of a flagged set against truth flags.
#[pyfunction]
fn detection_metrics<'py>(py: Python<'py>, flagged: Vec<usize>, truth: Vec<bool>) -> PyResult<Bound<'py, PyAny>> {
    let set: BTreeSet<usize> = flagged.into_iter().collect();
    let report = cec_core::detection_metrics(&set, &truth).map_err(to_py)?;
    to_python(py, &report)
}

/// Counter registry over samples `0..n`.
#[pyclass]
struct Detector {
    inner: cec_core::Detector,
}

#[pymethods]
impl Detector {
    #[new]
    #[pyo3(signature = (n, tau_cic=25, tau_tic=95, cic=true, tic=true))]
    fn new(n: usize, tau_cic: u32, tau_tic: u32, cic: bool, tic: bool) -> PyResult<Self> {
        let cfg = DetectorConfig::new(tau_cic, tau_tic).map_err(to_py)?;
        let inner = cec_core::Detector::new(cfg, CounterToggles { cic, tic }, 0..n).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Applies one epoch of `(sample_id, class)` pairs; returns the ids removed.
    fn end_of_epoch(&mut self, classes: Vec<(usize, String)>, epoch: u32) -> PyResult<Vec<usize>> {
        let parsed = classes
            .into_iter()
            .map(|(id, c)| parse_class(&c).map(|k| (id, k)))
            .collect::<PyResult<Vec<_>>>()?;
        let events = self.inner.end_of_epoch(parsed, epoch).map_err(to_py)?;
        Ok(events.into_iter().map(|e| e.sample_id).collect())
    }

    /// `(cic, tic, removed)` for one sample.
    fn counter(&self, sample_id: usize) -> PyResult<(u32, u32, bool)> {
        self.inner
            .counter(sample_id)
            .map(|c| (c.cic, c.tic, c.removed))
            .ok_or_else(|| PyValueError::new_err(format!("unknown sample {sample_id}")))
    }

    fn live_count(&self) -> usize {
        self.inner.live_count()
    }

    fn removed_ids(&self) -> Vec<usize> {
        self.inner.removed_ids().into_iter().collect()
    }
}

/// Generates a dataset into `out` and returns `(samples, noisy)`.
#[pyfunction]
#[pyo3(signature = (out, classes=20, per_class=100, dim=16, ncr=0.0, seed=0, extra_classes=None, spread=None))]
#[allow(clippy::too_many_arguments)]
fn generate(
    out: PathBuf,
    classes: usize,
    per_class: usize,
    dim: usize,
    ncr: f64,
    seed: u64,
    extra_classes: Option<usize>,
    spread: Option<f64>,
) -> PyResult<(usize, usize)> {
    let mut spec = SyntheticSpec { clean_classes: classes, samples_per_class: per_class, dim, ncr, seed, ..Default::default() };
    if let Some(e) = extra_classes {
        spec.extra_classes = e;
    }
    if let Some(s) = spread {
        spec.cluster_spread = s;
    }
    spec.validate().map_err(to_py)?;
    let ds = cec_core::generate(&spec).map_err(to_py)?;
    ds.save(&out).map_err(to_py)?;
    Ok((ds.len(), ds.noise_total()))
}

/// Trains on a saved dataset, writes the run log to `out`, and returns the
/// summary as a dict. `config` is a JSON string of overrides.
#[pyfunction]
#[pyo3(signature = (dataset, out, config=None))]
fn train<'py>(py: Python<'py>, dataset: PathBuf, out: PathBuf, config: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
    let cfg: TrainConfig = match config {
        Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(format!("config: {e}")))?,
        None => TrainConfig::default(),
    };
    cfg.validate().map_err(to_py)?;
    let ds = LabeledDataset::load(&dataset).map_err(to_py)?;
    let log = py.detach(|| run_to_dir(&cfg, &ds, &out)).map_err(to_py)?;
    to_python(py, &log.summary)
}

#[pymodule]
fn cec(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(derive_observation, m)?)?;
    m.add_function(wrap_pyfunction!(classify_sample, m)?)?;
    m.add_function(wrap_pyfunction!(update_counter, m)?)?;
    m.add_function(wrap_pyfunction!(is_noisy, m)?)?;
    m.add_function(wrap_pyfunction!(retention_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(difficulty, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_mask, m)?)?;
    m.add_function(wrap_pyfunction!(ncr_to_p, m)?)?;
    m.add_function(wrap_pyfunction!(aam_forward, m)?)?;
    m.add_function(wrap_pyfunction!(eer, m)?)?;
    m.add_function(wrap_pyfunction!(detection_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_class::<Detector>()?;
    Ok(())
}
