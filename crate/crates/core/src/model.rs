//! Embedding networks feeding the cosine head, plus SGD with momentum.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::aam_loss::{cosine_backward, cosine_logits, HeadWeights};
use crate::error::{CecError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    /// The raw features are the embedding; only the cosine head trains.
    LinearHead,
    /// `features -> Linear(hidden) -> ReLU -> Linear(embedding_dim)`.
    Mlp { hidden: usize, embedding_dim: usize },
}

impl Default for ModelKind {
    fn default() -> Self {
        ModelKind::Mlp {
            hidden: 64,
            embedding_dim: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Dense {
    inputs: usize,
    outputs: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, gain: f64, rng: &mut R) -> Self {
        let std = (gain / inputs as f64).sqrt();
        let weight = (0..inputs * outputs)
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            inputs,
            outputs,
            weight,
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|o| {
                let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
                self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&self, x: &[f64], grad_out: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut grad_in = vec![0.0; self.inputs];
        for o in 0..self.outputs {
            let g = grad_out[o];
            grad.bias[o] += g;
            let w = &self.weight[o * self.inputs..(o + 1) * self.inputs];
            let gw = &mut grad.weight[o * self.inputs..(o + 1) * self.inputs];
            for i in 0..self.inputs {
                gw[i] += g * x[i];
                grad_in[i] += g * w[i];
            }
        }
        grad_in
    }

    fn zeros_like(&self) -> Self {
        Self {
            inputs: self.inputs,
            outputs: self.outputs,
            weight: vec![0.0; self.weight.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weight.iter_mut().chain(self.bias.iter_mut())
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weight.iter().chain(self.bias.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Encoder {
    hidden: Dense,
    project: Dense,
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub input: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    pub embedding: Vec<f64>,
    pub cosines: Vec<f64>,
}

/// Embedding network plus cosine classification head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    kind: ModelKind,
    input_dim: usize,
    encoder: Option<Encoder>,
    head: HeadWeights,
}

/// Gradient buffers with the same layout as a [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    encoder: Option<Encoder>,
    head: Vec<f64>,
}

impl Gradients {
    pub fn zero(&mut self) {
        if let Some(enc) = &mut self.encoder {
            enc.hidden.params_mut().chain(enc.project.params_mut()).for_each(|v| *v = 0.0);
        }
        self.head.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Flattened view in [`Network::params`] order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        if let Some(enc) = &self.encoder {
            out.extend(enc.hidden.params().chain(enc.project.params()));
        }
        out.extend(&self.head);
        out
    }
}

impl Network {
    pub fn new<R: Rng + ?Sized>(kind: ModelKind, input_dim: usize, classes: usize, rng: &mut R) -> Result<Self> {
        if input_dim == 0 {
            return Err(CecError::InvalidConfig("input dimension must be positive".into()));
        }
        let (encoder, embed_dim) = match kind {
            ModelKind::LinearHead => (None, input_dim),
            ModelKind::Mlp { hidden, embedding_dim } => {
                if hidden == 0 || embedding_dim == 0 {
                    return Err(CecError::InvalidConfig(format!(
                        "hidden width and embedding dimension must be positive (got {hidden}, {embedding_dim})"
                    )));
                }
                let enc = Encoder {
                    hidden: Dense::new(input_dim, hidden, 2.0, rng),
                    project: Dense::new(hidden, embedding_dim, 1.0, rng),
                };
                (Some(enc), embedding_dim)
            }
        };
        let head = HeadWeights::random(classes, embed_dim, rng)?;
        Ok(Self {
            kind,
            input_dim,
            encoder,
            head,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn head(&self) -> &HeadWeights {
        &self.head
    }

    pub fn embed(&self, x: &[f64]) -> Vec<f64> {
        match &self.encoder {
            None => x.to_vec(),
            Some(enc) => {
                let h: Vec<f64> = enc.hidden.forward(x).into_iter().map(|v| v.max(0.0)).collect();
                enc.project.forward(&h)
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardPass> {
        if x.len() != self.input_dim {
            return Err(CecError::InvalidInput(format!(
                "input has dimension {}, network expects {}",
                x.len(),
                self.input_dim
            )));
        }
        let (hidden_pre, hidden, embedding) = match &self.encoder {
            None => (Vec::new(), Vec::new(), x.to_vec()),
            Some(enc) => {
                let pre = enc.hidden.forward(x);
                let h: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
                let e = enc.project.forward(&h);
                (pre, h, e)
            }
        };
        let cosines = cosine_logits(&embedding, &self.head)?;
        Ok(ForwardPass {
            input: x.to_vec(),
            hidden_pre,
            hidden,
            embedding,
            cosines,
        })
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            encoder: self.encoder.as_ref().map(|e| Encoder {
                hidden: e.hidden.zeros_like(),
                project: e.project.zeros_like(),
            }),
            head: vec![0.0; self.head.as_slice().len()],
        }
    }

    /// Accumulates the gradient of a loss whose derivative with respect to
    /// the cosines of `pass` is `grad_cosines`.
    pub fn backward(&self, pass: &ForwardPass, grad_cosines: &[f64], grads: &mut Gradients) {
        let grad_e = cosine_backward(&pass.embedding, &self.head, &pass.cosines, grad_cosines, &mut grads.head);
        if let (Some(enc), Some(g)) = (&self.encoder, &mut grads.encoder) {
            let grad_h = enc.project.backward(&pass.hidden, &grad_e, &mut g.project);
            let grad_pre: Vec<f64> = grad_h
                .iter()
                .zip(&pass.hidden_pre)
                .map(|(g, &z)| if z > 0.0 { *g } else { 0.0 })
                .collect();
            enc.hidden.backward(&pass.input, &grad_pre, &mut g.hidden);
        }
    }

    /// All trainable parameters, encoder first, then the head rows.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        if let Some(enc) = &self.encoder {
            out.extend(enc.hidden.params().chain(enc.project.params()));
        }
        out.extend(self.head.as_slice());
        out
    }

    /// Overwrites parameters in [`params`](Self::params) order without
    /// renormalizing the head.
    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        let count = self.params().len();
        if values.len() != count {
            return Err(CecError::InvalidInput(format!(
                "expected {count} parameters, got {}",
                values.len()
            )));
        }
        let mut src = values.iter();
        if let Some(enc) = &mut self.encoder {
            for p in enc.hidden.params_mut().chain(enc.project.params_mut()) {
                *p = *src.next().unwrap();
            }
        }
        for p in self.head.as_mut_slice() {
            *p = *src.next().unwrap();
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// Multiplicative learning-rate decay applied once per epoch.
    pub lr_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.9,
            lr_decay: 0.98,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(CecError::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(CecError::InvalidConfig(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(CecError::InvalidConfig(format!(
                "lr decay must lie in (0, 1], got {}",
                self.lr_decay
            )));
        }
        Ok(())
    }

    /// Learning rate in effect during 1-based `epoch`.
    pub fn rate_at(&self, epoch: u32) -> f64 {
        self.learning_rate * self.lr_decay.powi(epoch.saturating_sub(1) as i32)
    }
}

/// Heavy-ball SGD. Head rows are renormalized after every step.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    momentum: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(network: &Network, momentum: f64) -> Self {
        Self {
            momentum,
            velocity: vec![0.0; network.params().len()],
        }
    }

    pub fn step(&mut self, network: &mut Network, grads: &Gradients, lr: f64) {
        let mu = self.momentum;
        let mut vel = self.velocity.iter_mut();
        let mut update = |p: &mut f64, g: f64| {
            let v = vel.next().expect("velocity sized to parameters");
            *v = mu * *v + g;
            *p -= lr * *v;
        };
        if let (Some(enc), Some(g)) = (&mut network.encoder, &grads.encoder) {
            for (p, &g) in enc.hidden.params_mut().zip(g.hidden.params()) {
                update(p, g);
            }
            for (p, &g) in enc.project.params_mut().zip(g.project.params()) {
                update(p, g);
            }
        }
        for (p, &g) in network.head.as_mut_slice().iter_mut().zip(&grads.head) {
            update(p, g);
        }
        network.head.renormalize();
    }
}
