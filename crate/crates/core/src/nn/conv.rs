use rand::Rng;

use super::{he_normal, Mode, NnError, Tensor};

/// 2-D cross-correlation with bias. Weight layout K×C×kh×kw.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
    pub(crate) cache: Option<Tensor>,
}

impl Conv2d {
    /// He-normal weights, zero bias.
    pub fn new<R: Rng>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        Self::with_gain(in_channels, out_channels, kernel, stride, padding, 1.0, rng)
    }

    /// Like [`Conv2d::new`] with the He standard deviation scaled by `gain`.
    pub fn with_gain<R: Rng>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        gain: f64,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let w = he_normal(rng, fan_in, out_channels * fan_in, gain);
        Self {
            weight: Tensor::param(&[out_channels, in_channels, kernel, kernel], w)
                .expect("consistent weight shape"),
            bias: Tensor::param(&[out_channels], vec![0.0; out_channels]).expect("bias"),
            stride: stride.max(1),
            padding,
            cache: None,
        }
    }

    pub fn from_params(
        weight: Tensor,
        bias: Tensor,
        stride: usize,
        padding: usize,
    ) -> Result<Self, NnError> {
        let [k, _, _, _] = *weight.shape() else {
            return Err(NnError::Dimension(format!(
                "conv weight must be K×C×kh×kw, got {:?}",
                weight.shape()
            )));
        };
        if bias.shape() != [k] {
            return Err(NnError::Dimension(format!(
                "conv bias shape {:?} does not match {} output channels",
                bias.shape(),
                k
            )));
        }
        if stride == 0 {
            return Err(NnError::Hyper("conv stride must be ≥ 1".into()));
        }
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
            cache: None,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    fn kernel_hw(&self) -> (usize, usize) {
        (self.weight.shape()[2], self.weight.shape()[3])
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize), NnError> {
        let (kh, kw) = self.kernel_hw();
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if kh > ph || kw > pw {
            return Err(NnError::Dimension(format!(
                "kernel {kh}×{kw} does not fit padded input height {ph} × width {pw}"
            )));
        }
        Ok(((ph - kh) / self.stride + 1, (pw - kw) / self.stride + 1))
    }

    /// Output columns `ow` whose input column `ow·s + j − p` lies in `[0, len)`.
    fn valid_range(&self, tap: usize, len: usize, out_len: usize) -> (usize, usize) {
        let s = self.stride as isize;
        let offset = tap as isize - self.padding as isize;
        // smallest o with o*s + offset >= 0
        let lo = if offset >= 0 { 0 } else { ((-offset) + s - 1) / s };
        // largest o with o*s + offset <= len-1
        let hi_num = len as isize - 1 - offset;
        if hi_num < 0 {
            return (0, 0);
        }
        let hi = (hi_num / s + 1).min(out_len as isize);
        (lo.min(hi) as usize, hi as usize)
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.in_channels() {
            return Err(NnError::Dimension(format!(
                "conv expects {} input channels (axis 1), got {}",
                self.in_channels(),
                c
            )));
        }
        let (oh, ow) = self.output_hw(h, w)?;
        let k = self.out_channels();
        let (kh, kw) = self.kernel_hw();
        let s = self.stride;
        let p = self.padding;
        let mut out = vec![0.0; n * k * oh * ow];
        for ni in 0..n {
            for ki in 0..k {
                let plane = &mut out[(ni * k + ki) * oh * ow..(ni * k + ki + 1) * oh * ow];
                plane.iter_mut().for_each(|v| *v = self.bias.data[ki]);
                for ci in 0..c {
                    let xin = &x.data[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w];
                    for i in 0..kh {
                        let (ylo, yhi) = self.valid_range(i, h, oh);
                        for j in 0..kw {
                            let wv = self.weight.data[((ki * c + ci) * kh + i) * kw + j];
                            let (xlo, xhi) = self.valid_range(j, w, ow);
                            for oy in ylo..yhi {
                                let iy = oy * s + i - p;
                                let row = &xin[iy * w..(iy + 1) * w];
                                let orow = &mut plane[oy * ow..(oy + 1) * ow];
                                for ox in xlo..xhi {
                                    orow[ox] += wv * row[ox * s + j - p];
                                }
                            }
                        }
                    }
                }
            }
        }
        if mode == Mode::Train {
            self.cache = Some(x.clone());
        }
        Tensor::new(&[n, k, oh, ow], out)
    }

    pub fn backward(&mut self, dy: &Tensor, param_grads: bool) -> Result<Tensor, NnError> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| NnError::State("conv2d backward called without a forward cache".into()))?;
        let (n, c, h, w) = x.dims4()?;
        let (oh, ow) = self.output_hw(h, w)?;
        let k = self.out_channels();
        if dy.shape() != [n, k, oh, ow] {
            return Err(NnError::Dimension(format!(
                "conv upstream gradient {:?} does not match output [{n}, {k}, {oh}, {ow}]",
                dy.shape()
            )));
        }
        let (kh, kw) = self.kernel_hw();
        let s = self.stride;
        let p = self.padding;
        let mut dx = vec![0.0; x.len()];
        let mut dw = if param_grads { vec![0.0; self.weight.len()] } else { Vec::new() };
        let mut db = vec![0.0; k];
        for ni in 0..n {
            for ki in 0..k {
                let g = &dy.data[(ni * k + ki) * oh * ow..(ni * k + ki + 1) * oh * ow];
                if param_grads {
                    db[ki] += g.iter().sum::<f64>();
                }
                for ci in 0..c {
                    let base = (ni * c + ci) * h * w;
                    for i in 0..kh {
                        let (ylo, yhi) = self.valid_range(i, h, oh);
                        for j in 0..kw {
                            let widx = ((ki * c + ci) * kh + i) * kw + j;
                            let wv = self.weight.data[widx];
                            let (xlo, xhi) = self.valid_range(j, w, ow);
                            let mut acc = 0.0;
                            for oy in ylo..yhi {
                                let iy = oy * s + i - p;
                                let grow = &g[oy * ow..(oy + 1) * ow];
                                let roff = base + iy * w;
                                for ox in xlo..xhi {
                                    let ix = roff + ox * s + j - p;
                                    dx[ix] += wv * grow[ox];
                                    acc += x.data[ix] * grow[ox];
                                }
                            }
                            if param_grads {
                                dw[widx] += acc;
                            }
                        }
                    }
                }
            }
        }
        if param_grads {
            for (a, b) in self.weight.grad_mut().iter_mut().zip(&dw) {
                *a += b;
            }
            for (a, b) in self.bias.grad_mut().iter_mut().zip(&db) {
                *a += b;
            }
        }
        Tensor::new(x.shape(), dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct quadruple-loop cross-correlation with explicit zero padding.
    fn brute_force(x: &Tensor, wt: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Vec<f64> {
        let (n, c, h, w) = x.dims4().unwrap();
        let [k, _, kh, kw] = *wt.shape() else { unreachable!() };
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        let mut out = Vec::new();
        for ni in 0..n {
            for ki in 0..k {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b.data[ki];
                        for ci in 0..c {
                            for i in 0..kh {
                                for j in 0..kw {
                                    let iy = (oy * stride + i) as isize - pad as isize;
                                    let ix = (ox * stride + j) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    let xv = x.data[((ni * c + ci) * h + iy as usize) * w + ix as usize];
                                    acc += xv * wt.data[((ki * c + ci) * kh + i) * kw + j];
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
        }
        out
    }

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn identity_kernel() {
        let mut conv = Conv2d::from_params(
            Tensor::param(&[1, 1, 1, 1], vec![1.0]).unwrap(),
            Tensor::param(&[1], vec![0.0]).unwrap(),
            1,
            0,
        )
        .unwrap();
        let x = Tensor::new(&[1, 1, 2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(conv.forward(&x, Mode::Infer).unwrap().data, x.data);
    }

    #[test]
    fn zero_kernel_gives_bias() {
        let mut conv = Conv2d::from_params(
            Tensor::param(&[2, 1, 3, 3], vec![0.0; 18]).unwrap(),
            Tensor::param(&[2], vec![0.7, 0.7]).unwrap(),
            1,
            1,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = conv.forward(&random(&[1, 1, 4, 4], &mut rng), Mode::Infer).unwrap();
        assert_eq!(y.shape(), &[1, 2, 4, 4]);
        assert!(y.data.iter().all(|&v| v == 0.7));
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &(stride, pad, c, k) in &[(1, 0, 1, 1), (1, 1, 2, 3), (2, 1, 3, 2), (2, 0, 2, 2)] {
            let x = random(&[2, c, 5, 4], &mut rng);
            let mut conv = Conv2d::new(c, k, 3, stride, pad, &mut rng);
            conv.bias.data.iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
            let y = conv.forward(&x, Mode::Infer).unwrap();
            let expected = brute_force(&x, &conv.weight, &conv.bias, stride, pad);
            assert_eq!(y.len(), expected.len());
            for (a, b) in y.data.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut conv = Conv2d::new(2, 3, 3, 1, 1, &mut rng);
        let x = random(&[1, 2, 4, 4], &mut rng);
        let y = conv.forward(&x, Mode::Train).unwrap();
        let dx = conv.backward(&Tensor::zeros(y.shape()), true).unwrap();
        assert!(dx.data.iter().all(|&v| v == 0.0));
        assert!(conv.weight.grad.as_ref().unwrap().iter().all(|&v| v == 0.0));
        assert!(conv.bias.grad.as_ref().unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_pixel_upstream_gives_input_patch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut conv = Conv2d::new(1, 1, 3, 1, 0, &mut rng);
        let x = random(&[1, 1, 4, 4], &mut rng);
        let y = conv.forward(&x, Mode::Train).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        let mut dy = Tensor::zeros(y.shape());
        // output (1, 0) sees input rows 1..4, cols 0..3
        dy.data[2] = 1.0;
        conv.backward(&dy, true).unwrap();
        let dw = conv.weight.grad.as_ref().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(dw[i * 3 + j], x.data[(1 + i) * 4 + j]);
            }
        }
    }

    #[test]
    fn backward_without_cache_is_state_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut conv = Conv2d::new(1, 1, 3, 1, 1, &mut rng);
        assert!(matches!(
            conv.backward(&Tensor::zeros(&[1, 1, 2, 2]), true),
            Err(NnError::State(_))
        ));
    }

    #[test]
    fn channel_mismatch_is_dimension_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut conv = Conv2d::new(3, 1, 3, 1, 1, &mut rng);
        let err = conv.forward(&Tensor::zeros(&[1, 2, 4, 4]), Mode::Infer).unwrap_err();
        assert!(err.to_string().contains("axis 1"));
    }
}
