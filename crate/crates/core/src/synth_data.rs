//! Synthetic clustered "speaker" data with injected open-set label noise.
//!
//! Clean samples are drawn around `clean_classes` unit-norm centroids. Noisy
//! samples come from `extra_classes` additional centroids that are not part
//! of the label set; each receives a clean-class label chosen uniformly at
//! random. Noise is appended, so the clean portion of a dataset does not
//! change as the noisy-to-clean ratio grows.
//!
//! On disk a dataset is a directory:
//!
//! | file | content |
//! |------|---------|
//! | `dataset.json` | header: generating spec and shape |
//! | `features.f32` | little-endian `f32`, row-major `N × D` |
//! | `labels.csv` | `sample_id,observed_label,is_noise,source_class` |
//! | `heldout.f32` | held-out clean features, same encoding |
//! | `heldout.csv` | `sample_id,label` for the held-out rows |

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CecError, Result};

const CENTROID_RETRIES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub clean_classes: usize,
    pub samples_per_class: usize,
    pub dim: usize,
    pub cluster_spread: f64,
    /// Minimum pairwise angle between centroids, in radians.
    pub class_separation: f64,
    pub extra_classes: usize,
    pub ncr: f64,
    pub seed: u64,
    /// Clean samples per class kept out of training for verification trials.
    #[serde(default = "default_heldout")]
    pub heldout_per_class: usize,
}

fn default_heldout() -> usize {
    30
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            clean_classes: 20,
            samples_per_class: 100,
            dim: 16,
            cluster_spread: 0.15,
            class_separation: 0.6,
            extra_classes: 2,
            ncr: 0.0,
            seed: 0,
            heldout_per_class: default_heldout(),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CecError::InvalidConfig(msg));
        if self.clean_classes < 2 {
            return bad(format!("clean_classes must be >= 2, got {}", self.clean_classes));
        }
        if self.samples_per_class < 1 {
            return bad("samples_per_class must be >= 1".into());
        }
        if self.dim < 2 {
            return bad(format!("dim must be >= 2, got {}", self.dim));
        }
        if !(self.ncr.is_finite() && self.ncr >= 0.0) {
            return bad(format!("ncr must be >= 0, got {}", self.ncr));
        }
        if self.ncr > 0.0 && self.extra_classes == 0 {
            return bad("extra_classes must be >= 1 when ncr > 0".into());
        }
        if !(self.cluster_spread.is_finite() && self.cluster_spread >= 0.0) {
            return bad(format!("cluster_spread must be >= 0, got {}", self.cluster_spread));
        }
        if !(self.class_separation.is_finite() && (0.0..=std::f64::consts::PI).contains(&self.class_separation)) {
            return bad(format!(
                "class_separation must be an angle in [0, pi], got {}",
                self.class_separation
            ));
        }
        Ok(())
    }

    pub fn clean_count(&self) -> usize {
        self.clean_classes * self.samples_per_class
    }

    pub fn noise_count(&self) -> usize {
        (self.ncr * self.clean_count() as f64).round() as usize
    }
}

/// Noise proportion for a given noisy-to-clean ratio: `ncr / (ncr + 1)`.
pub fn ncr_to_p(ncr: f64) -> f64 {
    ncr / (ncr + 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub spec: SyntheticSpec,
    /// Row-major `len() × dim`.
    pub features: Vec<f32>,
    pub observed_labels: Vec<usize>,
    pub is_noise: Vec<bool>,
    /// Generating centroid: `< clean_classes` for clean rows, otherwise
    /// `clean_classes + extra index`.
    pub source_class: Vec<usize>,
    pub heldout_features: Vec<f32>,
    pub heldout_labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.observed_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed_labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn classes(&self) -> usize {
        self.spec.clean_classes
    }

    pub fn noise_total(&self) -> usize {
        self.is_noise.iter().filter(|&&b| b).count()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.spec.dim..(i + 1) * self.spec.dim]
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| f64::from(v)).collect()
    }

    pub fn heldout_len(&self) -> usize {
        self.heldout_labels.len()
    }

    pub fn heldout_row_f64(&self, i: usize) -> Vec<f64> {
        let d = self.spec.dim;
        self.heldout_features[i * d..(i + 1) * d].iter().map(|&v| f64::from(v)).collect()
    }

    /// Checks the structural invariants; used after loading from disk.
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let n = self.len();
        let d = self.spec.dim;
        let k = self.spec.clean_classes;
        let fail = |m: String| Err(CecError::InvalidInput(m));
        if self.features.len() != n * d || self.is_noise.len() != n || self.source_class.len() != n {
            return fail("dataset columns have inconsistent lengths".into());
        }
        if self.heldout_features.len() != self.heldout_labels.len() * d {
            return fail("held-out columns have inconsistent lengths".into());
        }
        if let Some(l) = self.observed_labels.iter().chain(&self.heldout_labels).find(|&&l| l >= k) {
            return fail(format!("label {l} is not a clean class index"));
        }
        for i in 0..n {
            if self.is_noise[i] != (self.source_class[i] >= k) {
                return fail(format!("sample {i}: noise flag disagrees with source class"));
            }
            if self.source_class[i] >= k + self.spec.extra_classes {
                return fail(format!("sample {i}: source class out of range"));
            }
        }
        Ok(())
    }
}

fn gaussian_unit<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn draw_centroids<R: Rng>(rng: &mut R, count: usize, dim: usize, min_angle: f64) -> Result<Vec<Vec<f64>>> {
    let max_cos = min_angle.cos();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    for c in 0..count {
        let mut accepted = None;
        for _ in 0..CENTROID_RETRIES {
            let cand = gaussian_unit(rng, dim);
            let ok = out
                .iter()
                .all(|o| o.iter().zip(&cand).map(|(a, b)| a * b).sum::<f64>() <= max_cos);
            if ok {
                accepted = Some(cand);
                break;
            }
        }
        match accepted {
            Some(v) => out.push(v),
            None => {
                return Err(CecError::Generation(format!(
                    "could not place centroid {} of {count} with pairwise separation >= {min_angle} rad in {dim} dimensions after {CENTROID_RETRIES} draws",
                    c + 1
                )))
            }
        }
    }
    Ok(out)
}

fn push_sample<R: Rng>(rng: &mut R, centroid: &[f64], spread: f64, out: &mut Vec<f32>) {
    for &c in centroid {
        let z: f64 = rng.sample(StandardNormal);
        out.push((c + spread * z) as f32);
    }
}

/// Deterministic in `spec` (including the seed).
pub fn generate(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.clean_classes;
    let extra = spec.extra_classes;
    // All centroids are drawn up front and noise is generated last, so the
    // clean and held-out rows are identical across ncr values for one seed.
    let centroids = draw_centroids(&mut rng, k + extra, spec.dim, spec.class_separation)?;

    let clean = spec.clean_count();
    let noisy = spec.noise_count();
    let n = clean + noisy;
    let mut ds = LabeledDataset {
        spec: spec.clone(),
        features: Vec::with_capacity(n * spec.dim),
        observed_labels: Vec::with_capacity(n),
        is_noise: Vec::with_capacity(n),
        source_class: Vec::with_capacity(n),
        heldout_features: Vec::new(),
        heldout_labels: Vec::new(),
    };

    for class in 0..k {
        for _ in 0..spec.samples_per_class {
            push_sample(&mut rng, &centroids[class], spec.cluster_spread, &mut ds.features);
            ds.observed_labels.push(class);
            ds.is_noise.push(false);
            ds.source_class.push(class);
        }
    }
    for class in 0..k {
        for _ in 0..spec.heldout_per_class {
            push_sample(&mut rng, &centroids[class], spec.cluster_spread, &mut ds.heldout_features);
            ds.heldout_labels.push(class);
        }
    }
    for _ in 0..noisy {
        let source = k + rng.random_range(0..extra);
        let label = rng.random_range(0..k);
        push_sample(&mut rng, &centroids[source], spec.cluster_spread, &mut ds.features);
        ds.observed_labels.push(label);
        ds.is_noise.push(true);
        ds.source_class.push(source);
    }
    Ok(ds)
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    spec: SyntheticSpec,
    samples: usize,
    heldout: usize,
    dim: usize,
    classes: usize,
    noisy: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelRecord {
    sample_id: usize,
    observed_label: usize,
    is_noise: bool,
    source_class: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct HeldoutRecord {
    sample_id: usize,
    label: usize,
}

fn write_f32(path: &Path, values: &[f32]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| CecError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for v in values {
        w.write_all(&v.to_le_bytes()).map_err(|e| CecError::io(path, e))?;
    }
    w.flush().map_err(|e| CecError::io(path, e))
}

fn read_f32(path: &Path, expected: usize) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| CecError::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(CecError::format(
            path,
            format!("expected {} bytes, found {}", expected * 4, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CecError::format(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| CecError::format(path, e))?;
    }
    w.flush().map_err(|e| CecError::io(path, e))
}

fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CecError::format(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| CecError::format(path, e))
}

impl LabeledDataset {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| CecError::io(dir, e))?;
        let header = Header {
            spec: self.spec.clone(),
            samples: self.len(),
            heldout: self.heldout_len(),
            dim: self.spec.dim,
            classes: self.spec.clean_classes,
            noisy: self.noise_total(),
        };
        let path = dir.join("dataset.json");
        let json = serde_json::to_string_pretty(&header).map_err(|e| CecError::format(&path, e))?;
        fs::write(&path, json + "\n").map_err(|e| CecError::io(&path, e))?;

        write_f32(&dir.join("features.f32"), &self.features)?;
        write_csv(
            &dir.join("labels.csv"),
            (0..self.len()).map(|i| LabelRecord {
                sample_id: i,
                observed_label: self.observed_labels[i],
                is_noise: self.is_noise[i],
                source_class: self.source_class[i],
            }),
        )?;
        write_f32(&dir.join("heldout.f32"), &self.heldout_features)?;
        write_csv(
            &dir.join("heldout.csv"),
            self.heldout_labels
                .iter()
                .enumerate()
                .map(|(i, &label)| HeldoutRecord { sample_id: i, label }),
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("dataset.json");
        let text = fs::read_to_string(&path).map_err(|e| CecError::io(&path, e))?;
        let header: Header = serde_json::from_str(&text).map_err(|e| CecError::format(&path, e))?;
        let d = header.spec.dim;

        let features = read_f32(&dir.join("features.f32"), header.samples * d)?;
        let labels_path = dir.join("labels.csv");
        let labels: Vec<LabelRecord> = read_csv(&labels_path)?;
        if labels.len() != header.samples || labels.iter().enumerate().any(|(i, r)| r.sample_id != i) {
            return Err(CecError::format(&labels_path, "sample ids must be 0..N in order"));
        }
        let heldout_features = read_f32(&dir.join("heldout.f32"), header.heldout * d)?;
        let heldout_path = dir.join("heldout.csv");
        let heldout: Vec<HeldoutRecord> = read_csv(&heldout_path)?;
        if heldout.len() != header.heldout {
            return Err(CecError::format(&heldout_path, "row count disagrees with header"));
        }

        let ds = LabeledDataset {
            spec: header.spec,
            features,
            observed_labels: labels.iter().map(|r| r.observed_label).collect(),
            is_noise: labels.iter().map(|r| r.is_noise).collect(),
            source_class: labels.iter().map(|r| r.source_class).collect(),
            heldout_features,
            heldout_labels: heldout.iter().map(|r| r.label).collect(),
        };
        ds.validate()?;
        Ok(ds)
    }
}
