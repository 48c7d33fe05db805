use super::{Mode, NnError, Tensor};

#[derive(Debug, Clone)]
pub(crate) struct PoolCache {
    in_shape: Vec<usize>,
    argmax: Vec<usize>,
}

/// Max pooling. Backward routes each window's gradient to the first maximal
/// position in row-major scan order.
#[derive(Debug, Clone)]
pub struct MaxPool {
    pub window: usize,
    pub stride: usize,
    pub(crate) cache: Option<PoolCache>,
}

impl MaxPool {
    pub fn new(window: usize, stride: usize) -> Result<Self, NnError> {
        if window == 0 || stride == 0 {
            return Err(NnError::Hyper("pool window and stride must be ≥ 1".into()));
        }
        Ok(Self {
            window,
            stride,
            cache: None,
        })
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize), NnError> {
        if self.window > h || self.window > w {
            return Err(NnError::Dimension(format!(
                "pool window {} larger than input height {h} × width {w}",
                self.window
            )));
        }
        Ok(((h - self.window) / self.stride + 1, (w - self.window) / self.stride + 1))
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        let (n, c, h, w) = x.dims4()?;
        let (oh, ow) = self.output_hw(h, w)?;
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = base + oy * self.stride * w + ox * self.stride;
                    for i in 0..self.window {
                        for j in 0..self.window {
                            let idx = base + (oy * self.stride + i) * w + ox * self.stride + j;
                            if x.data[idx] > best {
                                best = x.data[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_idx);
                }
            }
        }
        if mode == Mode::Train {
            self.cache = Some(PoolCache {
                in_shape: x.shape().to_vec(),
                argmax,
            });
        }
        Tensor::new(&[n, c, oh, ow], out)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| NnError::State("maxpool backward called without a forward cache".into()))?;
        if dy.len() != cache.argmax.len() {
            return Err(NnError::Dimension(format!(
                "maxpool upstream gradient {:?} has {} values, expected {}",
                dy.shape(),
                dy.len(),
                cache.argmax.len()
            )));
        }
        let mut dx = vec![0.0; cache.in_shape.iter().product()];
        for (&idx, &g) in cache.argmax.iter().zip(&dy.data) {
            dx[idx] += g;
        }
        Tensor::new(&cache.in_shape, dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_max() {
        let mut p = MaxPool::new(2, 2).unwrap();
        let x = Tensor::new(&[1, 1, 2, 2], vec![1., 2., 3., 4.]).unwrap();
        assert_eq!(p.forward(&x, Mode::Infer).unwrap().data, vec![4.0]);
    }

    #[test]
    fn ties_route_to_first_position() {
        let mut p = MaxPool::new(2, 2).unwrap();
        let x = Tensor::filled(&[1, 1, 4, 4], 3.0);
        p.forward(&x, Mode::Train).unwrap();
        let dx = p.backward(&Tensor::filled(&[1, 1, 2, 2], 1.0)).unwrap();
        let hot: Vec<usize> = (0..16).filter(|&i| dx.data[i] != 0.0).collect();
        assert_eq!(hot, vec![0, 2, 8, 10]);
    }

    #[test]
    fn window_larger_than_input() {
        let mut p = MaxPool::new(3, 1).unwrap();
        assert!(matches!(
            p.forward(&Tensor::zeros(&[1, 1, 2, 2]), Mode::Infer),
            Err(NnError::Dimension(_))
        ));
    }
}
