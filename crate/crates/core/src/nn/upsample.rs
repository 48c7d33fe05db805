use super::{Mode, NnError, Tensor};

/// Nearest-neighbour upsampling by an integer factor.
#[derive(Debug, Clone)]
pub struct Upsample {
    pub factor: usize,
    pub(crate) cache: Option<Vec<usize>>,
}

impl Upsample {
    pub fn new(factor: usize) -> Result<Self, NnError> {
        if factor == 0 {
            return Err(NnError::Hyper("upsample factor must be ≥ 1".into()));
        }
        Ok(Self { factor, cache: None })
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        let (n, c, h, w) = x.dims4()?;
        let f = self.factor;
        let (oh, ow) = (h * f, w * f);
        let mut out = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let src = &x.data[plane * h * w..(plane + 1) * h * w];
            for oy in 0..oh {
                let row = &src[(oy / f) * w..(oy / f + 1) * w];
                for ox in 0..ow {
                    out.push(row[ox / f]);
                }
            }
        }
        if mode == Mode::Train {
            self.cache = Some(vec![n, c, h, w]);
        }
        Tensor::new(&[n, c, oh, ow], out)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        let shape = self
            .cache
            .take()
            .ok_or_else(|| NnError::State("upsample backward called without a forward cache".into()))?;
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let f = self.factor;
        if dy.shape() != [n, c, h * f, w * f] {
            return Err(NnError::Dimension(format!(
                "upsample gradient {:?} does not match [{n}, {c}, {}, {}]",
                dy.shape(),
                h * f,
                w * f
            )));
        }
        let (oh, ow) = (h * f, w * f);
        let mut dx = vec![0.0; n * c * h * w];
        for plane in 0..n * c {
            for oy in 0..oh {
                for ox in 0..ow {
                    dx[plane * h * w + (oy / f) * w + ox / f] += dy.data[plane * oh * ow + oy * ow + ox];
                }
            }
        }
        Tensor::new(&shape, dx)
    }
}
