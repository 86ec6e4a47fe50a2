//! Angular-margin softmax over a cosine classification head.
//!
//! The head holds one unit-norm weight row per class. Embeddings are
//! normalized inside [`cosine_logits`], so every logit is a cosine in
//! `[-1, 1]`. The loss scales cosines by `s` and penalizes the labeled class
//! by a margin `d`:
//!
//! ```text
//! L = -log( e^{s·ψ(cos θ_y)} / ( e^{s·ψ(cos θ_y)} + Σ_{j≠y} e^{s·cos θ_j} ) )
//! ```
//!
//! with `ψ(c) = c - d` ([`MarginForm::AdditiveCosine`], the default) or
//! `ψ(c) = cos(acos(c) + d)` ([`MarginForm::AdditiveAngular`]).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CecError, Result};
use crate::taxonomy::positive_negative;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginForm {
    /// `cos θ - d`
    #[default]
    AdditiveCosine,
    /// `cos(θ + d)`
    AdditiveAngular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub scale: f64,
    pub margin: f64,
    #[serde(default)]
    pub margin_form: MarginForm,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            scale: 32.0,
            margin: 0.2,
            margin_form: MarginForm::AdditiveCosine,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(CecError::InvalidConfig(format!(
                "loss scale must be positive, got {}",
                self.scale
            )));
        }
        if !(self.margin.is_finite() && self.margin >= 0.0 && self.margin < std::f64::consts::FRAC_PI_2) {
            return Err(CecError::InvalidConfig(format!(
                "margin must lie in [0, pi/2), got {}",
                self.margin
            )));
        }
        Ok(())
    }

    /// Margin-adjusted target cosine and its derivative with respect to the
    /// raw cosine.
    fn target(&self, c: f64) -> (f64, f64) {
        match self.margin_form {
            MarginForm::AdditiveCosine => (c - self.margin, 1.0),
            MarginForm::AdditiveAngular => {
                let (sin_d, cos_d) = self.margin.sin_cos();
                let sin_theta = (1.0 - c * c).max(0.0).sqrt();
                let value = c * cos_d - sin_theta * sin_d;
                let slope = cos_d + c * sin_d / sin_theta.max(1e-7);
                (value, slope)
            }
        }
    }
}

/// Class weight matrix, `classes × dim`, row-major, rows kept at unit norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadWeights {
    classes: usize,
    dim: usize,
    rows: Vec<f64>,
}

impl HeadWeights {
    /// Normalizes every row. Fails on shape mismatch or a zero row.
    pub fn from_rows(classes: usize, dim: usize, rows: Vec<f64>) -> Result<Self> {
        if classes < 2 || dim == 0 || rows.len() != classes * dim {
            return Err(CecError::InvalidInput(format!(
                "head weights need classes >= 2 and {classes}x{dim} entries, got {}",
                rows.len()
            )));
        }
        let mut w = Self { classes, dim, rows };
        if w.rows.chunks(dim).any(|r| norm(r) == 0.0 || !norm(r).is_finite()) {
            return Err(CecError::InvalidInput("head weight row is zero or non-finite".into()));
        }
        w.renormalize();
        Ok(w)
    }

    pub fn random<R: Rng + ?Sized>(classes: usize, dim: usize, rng: &mut R) -> Result<Self> {
        let rows = (0..classes * dim).map(|_| rng.sample(StandardNormal)).collect();
        Self::from_rows(classes, dim, rows)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.rows[j * self.dim..(j + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rows
    }

    /// Raw mutable access for optimizer steps. Call [`renormalize`](Self::renormalize)
    /// afterwards to restore the unit-norm invariant.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.rows
    }

    pub fn renormalize(&mut self) {
        for row in self.rows.chunks_mut(self.dim) {
            let n = norm(row);
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine between the normalized embedding and every class row.
pub fn cosine_logits(embedding: &[f64], weights: &HeadWeights) -> Result<Vec<f64>> {
    if embedding.len() != weights.dim {
        return Err(CecError::InvalidInput(format!(
            "embedding has dimension {}, head expects {}",
            embedding.len(),
            weights.dim
        )));
    }
    let n = norm(embedding);
    if n == 0.0 || !n.is_finite() {
        return Err(CecError::InvalidInput(format!("embedding norm is {n}")));
    }
    Ok((0..weights.classes)
        .map(|j| (dot(embedding, weights.row(j)) / n).clamp(-1.0, 1.0))
        .collect())
}

/// Back-propagates cosine gradients to the embedding and the head rows.
///
/// `grad_weights` is accumulated into (same layout as the head); the
/// embedding gradient is returned and includes the normalization Jacobian
/// `(W_j - c_j u) / |e|`.
pub fn cosine_backward(
    embedding: &[f64],
    weights: &HeadWeights,
    cosines: &[f64],
    grad_cosines: &[f64],
    grad_weights: &mut [f64],
) -> Vec<f64> {
    let d = weights.dim;
    let n = norm(embedding);
    let mut grad_e = vec![0.0; d];
    for j in 0..weights.classes {
        let g = grad_cosines[j];
        let w = weights.row(j);
        let gw = &mut grad_weights[j * d..(j + 1) * d];
        for k in 0..d {
            let u = embedding[k] / n;
            gw[k] += g * u;
            grad_e[k] += g * (w[k] - cosines[j] * u) / n;
        }
    }
    grad_e
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossOutput {
    pub loss: f64,
    pub cosine_row: Vec<f64>,
    /// Gradient of `loss` with respect to each raw cosine (upstream = 1).
    pub grad_cosines: Vec<f64>,
    pub s_p: f64,
    pub s_n: f64,
}

fn check_row(cosine_row: &[f64], label: usize) -> Result<()> {
    if cosine_row.len() < 2 {
        return Err(CecError::InvalidInput(format!(
            "cosine row needs at least 2 classes, got {}",
            cosine_row.len()
        )));
    }
    if label >= cosine_row.len() {
        return Err(CecError::InvalidInput(format!(
            "label {label} out of range for {} classes",
            cosine_row.len()
        )));
    }
    if cosine_row.iter().any(|c| !c.is_finite() || c.abs() > 1.0) {
        return Err(CecError::InvalidInput("cosines must be finite and within [-1, 1]".into()));
    }
    Ok(())
}

pub fn aam_forward(cosine_row: &[f64], true_label: usize, config: &LossConfig) -> Result<LossOutput> {
    check_row(cosine_row, true_label)?;
    let s = config.scale;
    let (target, slope) = config.target(cosine_row[true_label]);
    let z_y = s * target;

    // Work relative to the target logit: L = log(1 + Σ_{j≠y} e^{z_j - z_y}).
    let diffs: Vec<f64> = cosine_row
        .iter()
        .enumerate()
        .map(|(j, &c)| if j == true_label { f64::NEG_INFINITY } else { s * c - z_y })
        .collect();
    let max = diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let loss = if max <= 0.0 {
        diffs.iter().map(|&x| x.exp()).sum::<f64>().ln_1p()
    } else {
        max + ((-max).exp() + diffs.iter().map(|&x| (x - max).exp()).sum::<f64>()).ln()
    };

    // p_y - 1 = expm1(-L) keeps precision when the sample is confidently right.
    let grad_cosines = diffs
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            if j == true_label {
                s * slope * (-loss).exp_m1()
            } else {
                s * (x - loss).exp()
            }
        })
        .collect();

    let (s_p, s_n) = positive_negative(cosine_row, true_label);
    Ok(LossOutput {
        loss,
        cosine_row: cosine_row.to_vec(),
        grad_cosines,
        s_p,
        s_n,
    })
}

pub fn aam_backward(
    cosine_row: &[f64],
    true_label: usize,
    config: &LossConfig,
    upstream: f64,
) -> Result<Vec<f64>> {
    let out = aam_forward(cosine_row, true_label, config)?;
    Ok(out.grad_cosines.into_iter().map(|g| g * upstream).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::derive_observation;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn orthonormal(k: usize) -> HeadWeights {
        let mut rows = vec![0.0; k * k];
        for j in 0..k {
            rows[j * k + j] = 1.0;
        }
        HeadWeights::from_rows(k, k, rows).unwrap()
    }

    #[test]
    fn cosines_of_weight_rows() {
        let w = orthonormal(4);
        assert_eq!(cosine_logits(w.row(0), &w).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        let neg: Vec<f64> = w.row(1).iter().map(|v| -v).collect();
        assert_eq!(cosine_logits(&neg, &w).unwrap(), vec![0.0, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn cosines_match_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let w = HeadWeights::random(5, 8, &mut rng).unwrap();
            let e: Vec<f64> = (0..8).map(|_| rand::Rng::random_range(&mut rng, -2.0..2.0)).collect();
            let got = cosine_logits(&e, &w).unwrap();
            let mut en = 0.0;
            for v in &e {
                en += v * v;
            }
            for j in 0..5 {
                let mut num = 0.0;
                let mut wn = 0.0;
                for k in 0..8 {
                    num += e[k] * w.row(j)[k];
                    wn += w.row(j)[k] * w.row(j)[k];
                }
                let want = num / (en.sqrt() * wn.sqrt());
                assert!((got[j] - want).abs() <= 1e-12, "{} vs {}", got[j], want);
            }
        }
    }

    #[test]
    fn zero_embedding_rejected() {
        let w = orthonormal(3);
        assert!(matches!(cosine_logits(&[0.0; 3], &w), Err(CecError::InvalidInput(_))));
        assert!(cosine_logits(&[1.0; 4], &w).is_err());
    }

    #[test]
    fn rows_are_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut w = HeadWeights::random(7, 5, &mut rng).unwrap();
        w.as_mut_slice().iter_mut().for_each(|v| *v *= 3.0);
        w.renormalize();
        for j in 0..7 {
            assert!((norm(w.row(j)) - 1.0).abs() < 1e-12);
        }
        assert!(HeadWeights::from_rows(2, 2, vec![1.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn confident_sample_loss() {
        let cfg = LossConfig::default();
        let out = aam_forward(&[1.0, 0.0], 0, &cfg).unwrap();
        // log(1 + e^{-25.6}) from a 40-digit mpmath evaluation
        let want = 7.621865194483855e-12;
        assert!(((out.loss - want) / want).abs() < 1e-9, "{}", out.loss);
        let g = aam_backward(&[1.0, 0.0], 0, &cfg, 1.0).unwrap();
        let e = 32.0 * (-25.6f64).exp();
        assert!(((g[0] + e) / e).abs() < 1e-9);
        assert!(((g[1] - e) / e).abs() < 1e-9);
    }

    #[test]
    fn uniform_cosines_give_log_k() {
        let cfg = LossConfig { margin: 0.0, ..Default::default() };
        for k in 2..10 {
            let row = vec![0.3; k];
            let out = aam_forward(&row, k - 1, &cfg).unwrap();
            assert!((out.loss - (k as f64).ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn returns_positive_and_negative() {
        let out = aam_forward(&[0.2, 0.9], 0, &LossConfig::default()).unwrap();
        assert_eq!((out.s_p, out.s_n), (0.2, 0.9));
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let cfg = LossConfig { scale: 64.0, margin: 0.0, ..Default::default() };
        let out = aam_forward(&[-1.0, 1.0, 1.0], 0, &cfg).unwrap();
        assert!((out.loss - (128.0 + 2f64.ln())).abs() < 1e-12);
        let out = aam_forward(&[1.0, -1.0, -1.0], 0, &cfg).unwrap();
        assert!(out.loss.is_finite() && out.loss >= 0.0);
    }

    #[test]
    fn angular_margin_matches_trig_form() {
        let cfg = LossConfig { margin_form: MarginForm::AdditiveAngular, ..Default::default() };
        for c in [-0.9, -0.3, 0.0, 0.4, 0.95] {
            let (v, _) = cfg.target(c);
            assert!((v - (f64::acos(c) + 0.2).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn malformed_rows_rejected() {
        let cfg = LossConfig::default();
        assert!(aam_forward(&[0.5], 0, &cfg).is_err());
        assert!(aam_forward(&[0.5, 0.1], 2, &cfg).is_err());
        assert!(aam_forward(&[1.5, 0.1], 0, &cfg).is_err());
        assert!(LossConfig { scale: 0.0, ..cfg }.validate().is_err());
        assert!(LossConfig { margin: -0.1, ..cfg }.validate().is_err());
    }

    proptest! {
        #[test]
        fn additive_gradients_sum_to_zero(row in prop::collection::vec(-1.0f64..=1.0, 2..16), l in 0usize..100, up in -3.0f64..3.0) {
            let label = l % row.len();
            let g = aam_backward(&row, label, &LossConfig::default(), up).unwrap();
            let scale: f64 = g.iter().map(|v| v.abs()).sum::<f64>().max(1e-300);
            prop_assert!(g.iter().sum::<f64>().abs() <= 1e-12 * scale.max(1.0));
        }

        #[test]
        fn loss_nonnegative_and_finite(row in prop::collection::vec(-1.0f64..=1.0, 2..16), l in 0usize..100,
                                       scale in 0.1f64..64.0, margin in 0.0f64..1.5, angular: bool) {
            let cfg = LossConfig { scale, margin, margin_form: if angular { MarginForm::AdditiveAngular } else { MarginForm::AdditiveCosine } };
            let out = aam_forward(&row, l % row.len(), &cfg).unwrap();
            prop_assert!(out.loss.is_finite() && out.loss >= 0.0);
            prop_assert!(out.grad_cosines.iter().all(|g| g.is_finite()));
        }

        #[test]
        fn positive_negative_agree_with_observation(row in prop::collection::vec(-1.0f64..=1.0, 2..16), l in 0usize..100) {
            let label = l % row.len();
            let out = aam_forward(&row, label, &LossConfig::default()).unwrap();
            let obs = derive_observation(&row, label, 0, 1).unwrap();
            prop_assert_eq!(out.s_p.to_bits(), obs.s_p.to_bits());
            prop_assert_eq!(out.s_n.to_bits(), obs.s_n.to_bits());
        }
    }
}
