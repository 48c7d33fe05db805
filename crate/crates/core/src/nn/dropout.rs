use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Mode, NnError, Tensor};

/// Inverted dropout: survivors are scaled by `1/(1−rate)` at train time, so
/// inference is the identity.
#[derive(Debug, Clone)]
pub struct Dropout {
    pub rate: f64,
    pub seed: u64,
    rng: ChaCha8Rng,
    pub(crate) cache: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Result<Self, NnError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NnError::Hyper(format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(Self {
            rate,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cache: None,
        })
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        if mode == Mode::Infer {
            return Tensor::new(x.shape(), x.data.clone());
        }
        let keep = 1.0 / (1.0 - self.rate);
        let mask: Vec<f64> = (0..x.len())
            .map(|_| if self.rng.random::<f64>() < self.rate { 0.0 } else { keep })
            .collect();
        let out = x.data.iter().zip(&mask).map(|(v, m)| v * m).collect();
        self.cache = Some(mask);
        Tensor::new(x.shape(), out)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        let mask = self
            .cache
            .take()
            .ok_or_else(|| NnError::State("dropout backward called without a forward cache".into()))?;
        if mask.len() != dy.len() {
            return Err(NnError::Dimension(format!(
                "dropout gradient has {} values, mask has {}",
                dy.len(),
                mask.len()
            )));
        }
        Tensor::new(dy.shape(), dy.data.iter().zip(&mask).map(|(g, m)| g * m).collect())
    }
}
