use super::{Mode, NnError, Tensor, BATCHNORM_EPSILON, BATCHNORM_MOMENTUM};

#[derive(Debug, Clone)]
pub(crate) struct BnCache {
    x_hat: Vec<f64>,
    inv_std: Vec<f64>,
    shape: Vec<usize>,
    batch_stats: bool,
}

/// Per-channel batch normalization over N×C×H×W (or N×C) inputs.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub epsilon: f64,
    pub momentum: f64,
    pub(crate) cache: Option<BnCache>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::param(&[channels], vec![1.0; channels]).expect("gamma"),
            beta: Tensor::param(&[channels], vec![0.0; channels]).expect("beta"),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], 1.0),
            epsilon: BATCHNORM_EPSILON,
            momentum: BATCHNORM_MOMENTUM,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, x: &Tensor) -> Result<(usize, usize, usize), NnError> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.channels() {
            return Err(NnError::Dimension(format!(
                "batchnorm has {} channels, input axis 1 has {}",
                self.channels(),
                c
            )));
        }
        Ok((n, c, h * w))
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        match mode {
            Mode::Infer => self.normalize_running(x, false),
            Mode::Train => self.normalize_batch(x),
        }
    }

    /// Train-mode pass for a frozen layer: running statistics are used and
    /// not updated, but a cache is kept so gradients still flow to the input.
    pub fn forward_frozen(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        self.normalize_running(x, true)
    }

    fn normalize_running(&mut self, x: &Tensor, keep_cache: bool) -> Result<Tensor, NnError> {
        let (n, c, hw) = self.check(x)?;
        let inv_std: Vec<f64> = self
            .running_var
            .data
            .iter()
            .map(|v| 1.0 / (v + self.epsilon).sqrt())
            .collect();
        let mut out = vec![0.0; x.len()];
        let mut x_hat = if keep_cache { vec![0.0; x.len()] } else { Vec::new() };
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * hw;
                let (m, s) = (self.running_mean.data[ci], inv_std[ci]);
                let (g, b) = (self.gamma.data[ci], self.beta.data[ci]);
                for i in base..base + hw {
                    let xh = (x.data[i] - m) * s;
                    out[i] = g * xh + b;
                    if keep_cache {
                        x_hat[i] = xh;
                    }
                }
            }
        }
        if keep_cache {
            self.cache = Some(BnCache {
                x_hat,
                inv_std,
                shape: x.shape().to_vec(),
                batch_stats: false,
            });
        }
        Tensor::new(x.shape(), out)
    }

    fn normalize_batch(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let (n, c, hw) = self.check(x)?;
        if n < 2 {
            return Err(NnError::BatchSize(n));
        }
        let m = (n * hw) as f64;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for ni in 0..n {
            for (ci, mu) in mean.iter_mut().enumerate() {
                let base = (ni * c + ci) * hw;
                *mu += x.data[base..base + hw].iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|v| *v /= m);
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * hw;
                var[ci] += x.data[base..base + hw]
                    .iter()
                    .map(|v| (v - mean[ci]) * (v - mean[ci]))
                    .sum::<f64>();
            }
        }
        var.iter_mut().for_each(|v| *v /= m);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();

        let mut out = vec![0.0; x.len()];
        let mut x_hat = vec![0.0; x.len()];
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * hw;
                let (g, b) = (self.gamma.data[ci], self.beta.data[ci]);
                for i in base..base + hw {
                    let xh = (x.data[i] - mean[ci]) * inv_std[ci];
                    x_hat[i] = xh;
                    out[i] = g * xh + b;
                }
            }
        }
        let mo = self.momentum;
        for ci in 0..c {
            self.running_mean.data[ci] = mo * self.running_mean.data[ci] + (1.0 - mo) * mean[ci];
            self.running_var.data[ci] = mo * self.running_var.data[ci] + (1.0 - mo) * var[ci];
        }
        self.cache = Some(BnCache {
            x_hat,
            inv_std,
            shape: x.shape().to_vec(),
            batch_stats: true,
        });
        Tensor::new(x.shape(), out)
    }

    pub fn backward(&mut self, dy: &Tensor, param_grads: bool) -> Result<Tensor, NnError> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| NnError::State("batchnorm backward called without a forward cache".into()))?;
        if dy.shape() != cache.shape.as_slice() {
            return Err(NnError::Dimension(format!(
                "batchnorm upstream gradient {:?} does not match {:?}",
                dy.shape(),
                cache.shape
            )));
        }
        let (n, c, hw) = self.check(dy)?;
        let m = (n * hw) as f64;
        let mut sum_dy = vec![0.0; c];
        let mut sum_dy_xhat = vec![0.0; c];
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * hw;
                for i in base..base + hw {
                    sum_dy[ci] += dy.data[i];
                    sum_dy_xhat[ci] += dy.data[i] * cache.x_hat[i];
                }
            }
        }
        let mut dx = vec![0.0; dy.len()];
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * hw;
                let scale = self.gamma.data[ci] * cache.inv_std[ci];
                for i in base..base + hw {
                    dx[i] = if cache.batch_stats {
                        scale / m * (m * dy.data[i] - sum_dy[ci] - cache.x_hat[i] * sum_dy_xhat[ci])
                    } else {
                        scale * dy.data[i]
                    };
                }
            }
        }
        if param_grads {
            for (g, v) in self.gamma.grad_mut().iter_mut().zip(&sum_dy_xhat) {
                *g += v;
            }
            for (g, v) in self.beta.grad_mut().iter_mut().zip(&sum_dy) {
                *g += v;
            }
        }
        Tensor::new(dy.shape(), dx)
    }
}
