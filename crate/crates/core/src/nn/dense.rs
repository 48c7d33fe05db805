use rand::Rng;

use super::{he_normal, Mode, NnError, Tensor};

#[derive(Debug, Clone)]
pub(crate) struct DenseCache {
    input: Vec<f64>,
    in_shape: Vec<usize>,
}

/// Fully connected layer `y = xW + b` with W of shape D×M. Inputs with more
/// than two axes are flattened per row.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
    pub(crate) cache: Option<DenseCache>,
}

impl Dense {
    pub fn new<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let w = he_normal(rng, inputs, inputs * outputs, 1.0);
        Self {
            weight: Tensor::param(&[inputs, outputs], w).expect("weight"),
            bias: Tensor::param(&[outputs], vec![0.0; outputs]).expect("bias"),
            cache: None,
        }
    }

    pub fn from_params(weight: Tensor, bias: Tensor) -> Result<Self, NnError> {
        let [_, m] = *weight.shape() else {
            return Err(NnError::Dimension(format!(
                "dense weight must be D×M, got {:?}",
                weight.shape()
            )));
        };
        if bias.shape() != [m] {
            return Err(NnError::Dimension(format!(
                "dense bias {:?} does not match {m} outputs",
                bias.shape()
            )));
        }
        Ok(Self {
            weight,
            bias,
            cache: None,
        })
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        let n = x.batch();
        let d = x.row_len();
        if d != self.inputs() {
            return Err(NnError::Dimension(format!(
                "dense expects inner dimension {}, got {} from input {:?}",
                self.inputs(),
                d,
                x.shape()
            )));
        }
        let m = self.outputs();
        let mut out = Vec::with_capacity(n * m);
        for ni in 0..n {
            let mut row = self.bias.data.clone();
            for (di, &xv) in x.row(ni).iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let w = &self.weight.data[di * m..(di + 1) * m];
                for (r, wv) in row.iter_mut().zip(w) {
                    *r += xv * wv;
                }
            }
            out.extend(row);
        }
        if mode == Mode::Train {
            self.cache = Some(DenseCache {
                input: x.data.clone(),
                in_shape: x.shape().to_vec(),
            });
        }
        Tensor::new(&[n, m], out)
    }

    pub fn backward(&mut self, dy: &Tensor, param_grads: bool) -> Result<Tensor, NnError> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| NnError::State("dense backward called without a forward cache".into()))?;
        let (d, m) = (self.inputs(), self.outputs());
        let n = cache.in_shape[0];
        if dy.shape() != [n, m] {
            return Err(NnError::Dimension(format!(
                "dense upstream gradient {:?} does not match [{n}, {m}]",
                dy.shape()
            )));
        }
        let mut dx = vec![0.0; n * d];
        for ni in 0..n {
            let g = &dy.data[ni * m..(ni + 1) * m];
            for di in 0..d {
                let w = &self.weight.data[di * m..(di + 1) * m];
                dx[ni * d + di] = w.iter().zip(g).map(|(a, b)| a * b).sum();
            }
        }
        if param_grads {
            let dw = self.weight.grad_mut();
            for ni in 0..n {
                let g = &dy.data[ni * m..(ni + 1) * m];
                let xr = &cache.input[ni * d..(ni + 1) * d];
                for (di, &xv) in xr.iter().enumerate() {
                    for (a, b) in dw[di * m..(di + 1) * m].iter_mut().zip(g) {
                        *a += xv * b;
                    }
                }
            }
            let db = self.bias.grad_mut();
            for ni in 0..n {
                for (a, b) in db.iter_mut().zip(&dy.data[ni * m..(ni + 1) * m]) {
                    *a += b;
                }
            }
        }
        Tensor::new(&cache.in_shape, dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weight() {
        let mut d = Dense::from_params(
            Tensor::param(&[2, 2], vec![1., 0., 0., 1.]).unwrap(),
            Tensor::param(&[2], vec![0., 0.]).unwrap(),
        )
        .unwrap();
        let x = Tensor::new(&[2, 2], vec![1.5, -2.0, 3.0, 4.0]).unwrap();
        assert_eq!(d.forward(&x, Mode::Infer).unwrap().data, x.data);
    }

    #[test]
    fn arithmetic() {
        let mut d = Dense::from_params(
            Tensor::param(&[2, 1], vec![1., 1.]).unwrap(),
            Tensor::param(&[1], vec![3.]).unwrap(),
        )
        .unwrap();
        let y = d.forward(&Tensor::new(&[1, 2], vec![1., 2.]).unwrap(), Mode::Infer).unwrap();
        assert_eq!(y.data, vec![6.0]);
    }

    #[test]
    fn inner_dimension_mismatch() {
        let mut d = Dense::from_params(
            Tensor::param(&[3, 1], vec![1.; 3]).unwrap(),
            Tensor::param(&[1], vec![0.]).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            d.forward(&Tensor::zeros(&[1, 2]), Mode::Infer),
            Err(NnError::Dimension(_))
        ));
    }

    #[test]
    fn flattens_feature_maps() {
        let mut d = Dense::from_params(
            Tensor::param(&[4, 1], vec![1.; 4]).unwrap(),
            Tensor::param(&[1], vec![0.]).unwrap(),
        )
        .unwrap();
        let x = Tensor::new(&[1, 1, 2, 2], vec![1., 2., 3., 4.]).unwrap();
        let y = d.forward(&x, Mode::Train).unwrap();
        assert_eq!(y.data, vec![10.0]);
        let dx = d.backward(&Tensor::new(&[1, 1], vec![1.0]).unwrap(), true).unwrap();
        assert_eq!(dx.shape(), &[1, 1, 2, 2]);
    }
}
