use super::{Mode, NnError, Tensor, DEFAULT_LEAKY_SLOPE};

/// `y = x` for `x > 0`, `slope·x` otherwise. The derivative at 0 is `slope`.
#[derive(Debug, Clone)]
pub struct LeakyRelu {
    pub slope: f64,
    pub(crate) cache: Option<Tensor>,
}

impl Default for LeakyRelu {
    fn default() -> Self {
        Self {
            slope: DEFAULT_LEAKY_SLOPE,
            cache: None,
        }
    }
}

impl LeakyRelu {
    pub fn new(slope: f64) -> Result<Self, NnError> {
        if !(0.0..1.0).contains(&slope) {
            return Err(NnError::Hyper(format!("leaky relu slope {slope} outside [0, 1)")));
        }
        Ok(Self { slope, cache: None })
    }

    pub fn apply(&self, v: f64) -> f64 {
        if v > 0.0 {
            v
        } else {
            self.slope * v
        }
    }

    pub fn derivative(&self, v: f64) -> f64 {
        if v > 0.0 {
            1.0
        } else {
            self.slope
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        let out = x.data.iter().map(|&v| self.apply(v)).collect();
        if mode == Mode::Train {
            self.cache = Some(x.clone());
        }
        Tensor::new(x.shape(), out)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| NnError::State("leaky relu backward called without a forward cache".into()))?;
        if x.shape() != dy.shape() {
            return Err(NnError::Dimension(format!(
                "leaky relu gradient {:?} does not match input {:?}",
                dy.shape(),
                x.shape()
            )));
        }
        let dx = x
            .data
            .iter()
            .zip(&dy.data)
            .map(|(&v, &g)| g * self.derivative(v))
            .collect();
        Tensor::new(x.shape(), dx)
    }
}
