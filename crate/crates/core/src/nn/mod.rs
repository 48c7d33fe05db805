//! Hand-written layers with explicit backward passes, softmax cross-entropy
//! and plain SGD.
//!
//! Every layer caches what its backward pass needs during a `Mode::Train`
//! forward call. Backward consumes that cache and *accumulates* parameter
//! gradients, so a layer may be run forward/backward several times before a
//! single optimizer step.

mod activation;
mod batchnorm;
mod conv;
mod dense;
mod dropout;
pub mod gradcheck;
mod loss;
mod pool;
mod sequential;
mod tensor;
mod upsample;

pub use activation::LeakyRelu;
pub use batchnorm::BatchNorm;
pub use conv::Conv2d;
pub use dense::Dense;
pub use dropout::Dropout;
pub use gradcheck::finite_diff_check;
pub use loss::{softmax, softmax_cross_entropy};
pub use pool::MaxPool;
pub use sequential::Sequential;
pub use tensor::Tensor;
pub use upsample::Upsample;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;
pub const DEFAULT_DROPOUT_RATE: f64 = 0.5;
pub const BATCHNORM_EPSILON: f64 = 1e-5;
pub const BATCHNORM_MOMENTUM: f64 = 0.9;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("state error: {0}")]
    State(String),
    #[error("batch-size error: train-mode batch normalization needs at least 2 samples, got {0}")]
    BatchSize(usize),
    #[error("label error: label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("invalid hyperparameter: {0}")]
    Hyper(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv2d,
    BatchNorm,
    LeakyRelu,
    MaxPool,
    Dropout,
    Dense,
    Upsample,
}

impl LayerKind {
    pub fn tag(self) -> u8 {
        match self {
            LayerKind::Conv2d => 1,
            LayerKind::BatchNorm => 2,
            LayerKind::LeakyRelu => 3,
            LayerKind::MaxPool => 4,
            LayerKind::Dropout => 5,
            LayerKind::Dense => 6,
            LayerKind::Upsample => 7,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            1 => LayerKind::Conv2d,
            2 => LayerKind::BatchNorm,
            3 => LayerKind::LeakyRelu,
            4 => LayerKind::MaxPool,
            5 => LayerKind::Dropout,
            6 => LayerKind::Dense,
            7 => LayerKind::Upsample,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Conv2d(Conv2d),
    BatchNorm(BatchNorm),
    LeakyRelu(LeakyRelu),
    MaxPool(MaxPool),
    Dropout(Dropout),
    Dense(Dense),
    Upsample(Upsample),
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv2d(_) => LayerKind::Conv2d,
            Layer::BatchNorm(_) => LayerKind::BatchNorm,
            Layer::LeakyRelu(_) => LayerKind::LeakyRelu,
            Layer::MaxPool(_) => LayerKind::MaxPool,
            Layer::Dropout(_) => LayerKind::Dropout,
            Layer::Dense(_) => LayerKind::Dense,
            Layer::Upsample(_) => LayerKind::Upsample,
        }
    }

    /// `frozen` only matters for batch normalization, which then normalizes
    /// with its running statistics and leaves them untouched.
    pub fn forward(&mut self, x: &Tensor, mode: Mode, frozen: bool) -> Result<Tensor, NnError> {
        match self {
            Layer::Conv2d(l) => l.forward(x, mode),
            Layer::BatchNorm(l) if frozen && mode == Mode::Train => l.forward_frozen(x),
            Layer::BatchNorm(l) => l.forward(x, mode),
            Layer::LeakyRelu(l) => l.forward(x, mode),
            Layer::MaxPool(l) => l.forward(x, mode),
            Layer::Dropout(l) => l.forward(x, mode),
            Layer::Dense(l) => l.forward(x, mode),
            Layer::Upsample(l) => l.forward(x, mode),
        }
    }

    pub fn backward(&mut self, dy: &Tensor, param_grads: bool) -> Result<Tensor, NnError> {
        match self {
            Layer::Conv2d(l) => l.backward(dy, param_grads),
            Layer::BatchNorm(l) => l.backward(dy, param_grads),
            Layer::LeakyRelu(l) => l.backward(dy),
            Layer::MaxPool(l) => l.backward(dy),
            Layer::Dropout(l) => l.backward(dy),
            Layer::Dense(l) => l.backward(dy, param_grads),
            Layer::Upsample(l) => l.backward(dy),
        }
    }

    /// Trainable parameter tensors, in a fixed order.
    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Conv2d(l) => vec![&l.weight, &l.bias],
            Layer::BatchNorm(l) => vec![&l.gamma, &l.beta],
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Conv2d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm(l) => vec![&mut l.gamma, &mut l.beta],
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            _ => Vec::new(),
        }
    }

    /// Non-trainable state that still has to survive a checkpoint.
    pub fn buffers(&self) -> Vec<&Tensor> {
        match self {
            Layer::BatchNorm(l) => vec![&l.running_mean, &l.running_var],
            _ => Vec::new(),
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::BatchNorm(l) => vec![&mut l.running_mean, &mut l.running_var],
            _ => Vec::new(),
        }
    }

    pub fn clear_cache(&mut self) {
        match self {
            Layer::Conv2d(l) => l.cache = None,
            Layer::BatchNorm(l) => l.cache = None,
            Layer::LeakyRelu(l) => l.cache = None,
            Layer::MaxPool(l) => l.cache = None,
            Layer::Dropout(l) => l.cache = None,
            Layer::Dense(l) => l.cache = None,
            Layer::Upsample(l) => l.cache = None,
        }
    }
}

/// A layer plus its trainable flag.
#[derive(Debug, Clone)]
pub struct LayerState {
    pub layer: Layer,
    pub trainable: bool,
}

impl LayerState {
    pub fn new(layer: Layer) -> Self {
        Self {
            layer,
            trainable: true,
        }
    }

    pub fn kind(&self) -> LayerKind {
        self.layer.kind()
    }

    pub fn zero_grad(&mut self) {
        for p in self.layer.params_mut() {
            p.zero_grad();
        }
    }
}

/// `p ← p − lr·g` for every parameter of a trainable layer. Frozen layers are
/// left bit-identical whatever their gradient buffers hold.
pub fn sgd_step(state: &mut LayerState, lr: f64) -> Result<(), NnError> {
    if !state.trainable {
        return Ok(());
    }
    for p in state.layer.params_mut() {
        let Some(g) = p.grad.as_ref() else { continue };
        if g.len() != p.data.len() {
            return Err(NnError::Dimension(format!(
                "gradient length {} does not match parameter length {}",
                g.len(),
                p.data.len()
            )));
        }
        for (w, &gi) in p.data.iter_mut().zip(g.iter()) {
            *w -= lr * gi;
        }
    }
    Ok(())
}

/// He-normal initialization for a layer with the given fan-in.
pub(crate) fn he_normal<R: Rng>(rng: &mut R, fan_in: usize, n: usize, gain: f64) -> Vec<f64> {
    let std = gain * (2.0 / fan_in.max(1) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    (0..n).map(|_| normal.sample(rng)).collect()
}
