//! Small cycle-consistent GAN used to synthesize extra training images.
//!
//! Generators `G: X→Y` and `F: Y→X` are residual encoder–decoders: the
//! network body predicts a correction that is added to the input, and its
//! last convolution starts at half the usual scale, so an untrained
//! generator stays correlated with its input. Discriminators are three-layer patch classifiers trained
//! with least-squares targets.

use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use thiserror::Error;

use crate::dataset::{
    save_png, DatasetError, DatasetManifest, Image, LabeledSample, StateLabel, ValueDomain,
};
use crate::nn::{
    Conv2d, Layer, LeakyRelu, MaxPool, Mode, NnError, Sequential, Tensor, Upsample,
};
use crate::rng::{substream, Stream};
use crate::trainer::{
    images_to_tensor, load_sequential, save_sequential, CheckpointError, CheckpointMeta,
};

pub const GAN_SIDES: [usize; 4] = [16, 32, 64, 128];
pub const DEFAULT_CYCLE_LAMBDA: f64 = 10.0;
const GAN_LEAKY_SLOPE: f64 = 0.2;
const GENERATOR_OUTPUT_GAIN: f64 = 0.5;

#[derive(Debug, Error)]
pub enum GanError {
    #[error("invalid GAN config: {0}")]
    Config(String),
    #[error("numeric divergence: non-finite loss at step {step}")]
    Divergence { step: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DatasetError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanConfig {
    pub image_side: usize,
    pub channels: usize,
    pub cycle_lambda: f64,
    pub lr: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            image_side: 32,
            channels: 3,
            cycle_lambda: DEFAULT_CYCLE_LAMBDA,
            lr: 0.002,
            steps: 500,
            batch_size: 4,
            seed: crate::rng::DEFAULT_SEED,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<(), GanError> {
        if !GAN_SIDES.contains(&self.image_side) {
            return Err(GanError::Config(format!(
                "image side {} not in {GAN_SIDES:?}",
                self.image_side
            )));
        }
        if !(self.cycle_lambda >= 0.0 && self.cycle_lambda.is_finite()) {
            return Err(GanError::Config(format!("cycle lambda must be ≥ 0, got {}", self.cycle_lambda)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(GanError::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.batch_size == 0 || self.channels == 0 {
            return Err(GanError::Config("batch size and channels must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Residual generator: `out = x + body(x)`.
#[derive(Debug, Clone)]
pub struct Generator {
    pub body: Sequential,
}

impl Generator {
    pub fn new(channels: usize, seed: u64, index: u64) -> Self {
        let mut rng = substream(seed, Stream::Gan, index);
        let lrelu = || Layer::LeakyRelu(LeakyRelu::new(GAN_LEAKY_SLOPE).expect("valid slope"));
        let layers = vec![
            Layer::Conv2d(Conv2d::new(channels, 8, 3, 1, 1, &mut rng)),
            lrelu(),
            Layer::MaxPool(MaxPool::new(2, 2).expect("pool")),
            Layer::Conv2d(Conv2d::new(8, 16, 3, 1, 1, &mut rng)),
            lrelu(),
            Layer::MaxPool(MaxPool::new(2, 2).expect("pool")),
            Layer::Conv2d(Conv2d::new(16, 16, 3, 1, 1, &mut rng)),
            lrelu(),
            Layer::Upsample(Upsample::new(2).expect("upsample")),
            Layer::Conv2d(Conv2d::new(16, 8, 3, 1, 1, &mut rng)),
            lrelu(),
            Layer::Upsample(Upsample::new(2).expect("upsample")),
            Layer::Conv2d(Conv2d::with_gain(8, channels, 3, 1, 1, GENERATOR_OUTPUT_GAIN, &mut rng)),
        ];
        Self { body: Sequential::new(layers) }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        let mut out = self.body.forward(x, mode)?;
        for (o, v) in out.data.iter_mut().zip(&x.data) {
            *o += v;
        }
        Ok(out)
    }

    /// Accumulates parameter gradients and returns dL/dx.
    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        let mut dx = self.body.backward(dy, true)?.expect("input gradient requested");
        for (d, g) in dx.data.iter_mut().zip(&dy.data) {
            *d += g;
        }
        Ok(dx)
    }
}

pub fn build_discriminator(channels: usize, seed: u64, index: u64) -> Sequential {
    let mut rng = substream(seed, Stream::Gan, index);
    let lrelu = || Layer::LeakyRelu(LeakyRelu::new(GAN_LEAKY_SLOPE).expect("valid slope"));
    Sequential::new(vec![
        Layer::Conv2d(Conv2d::new(channels, 8, 3, 2, 1, &mut rng)),
        lrelu(),
        Layer::Conv2d(Conv2d::new(8, 16, 3, 2, 1, &mut rng)),
        lrelu(),
        Layer::Conv2d(Conv2d::new(16, 1, 3, 1, 1, &mut rng)),
    ])
}

/// Least-squares losses `(loss_d, loss_g)`:
/// `loss_d = mean((d_real−1)² + d_fake²)/2`, `loss_g = mean((d_fake−1)²)`.
pub fn adversarial_loss(d_real: &Tensor, d_fake: &Tensor) -> Result<(f64, f64), NnError> {
    if d_real.len() != d_fake.len() || d_real.is_empty() {
        return Err(NnError::Dimension(format!(
            "discriminator outputs differ in size: {:?} vs {:?}",
            d_real.shape(),
            d_fake.shape()
        )));
    }
    let n = d_real.len() as f64;
    let loss_d = d_real
        .data
        .iter()
        .zip(&d_fake.data)
        .map(|(r, f)| (r - 1.0).powi(2) + f * f)
        .sum::<f64>()
        / n
        / 2.0;
    let loss_g = d_fake.data.iter().map(|f| (f - 1.0).powi(2)).sum::<f64>() / n;
    Ok((loss_d, loss_g))
}

/// Mean absolute difference.
pub fn cycle_loss(x: &Tensor, cycled: &Tensor) -> Result<f64, NnError> {
    if x.shape() != cycled.shape() {
        return Err(NnError::Dimension(format!(
            "cycle loss shapes differ: {:?} vs {:?}",
            x.shape(),
            cycled.shape()
        )));
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = x.data.iter().zip(&cycled.data).map(|(a, b)| (a - b).abs()).sum();
    Ok(sum / x.len() as f64)
}

fn cycle_grad(x: &Tensor, cycled: &Tensor, scale: f64) -> Tensor {
    let n = x.len() as f64;
    let g = x
        .data
        .iter()
        .zip(&cycled.data)
        .map(|(a, b)| {
            let d = b - a;
            if d > 0.0 {
                scale / n
            } else if d < 0.0 {
                -scale / n
            } else {
                0.0
            }
        })
        .collect();
    Tensor::new(x.shape(), g).expect("same shape")
}

/// Gradient of `w·mean((d − target)²)`.
fn lsq_grad(d: &Tensor, target: f64, w: f64) -> Tensor {
    let n = d.len() as f64;
    let g = d.data.iter().map(|v| 2.0 * w * (v - target) / n).collect();
    Tensor::new(d.shape(), g).expect("same shape")
}

fn lsq(d: &Tensor, target: f64) -> f64 {
    d.data.iter().map(|v| (v - target).powi(2)).sum::<f64>() / d.len() as f64
}

/// Loss components of one training step. `cycle` is the unweighted sum of
/// both cycle directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub d_x: f64,
    pub d_y: f64,
    pub adv_g: f64,
    pub adv_f: f64,
    pub cycle: f64,
}

impl LossRecord {
    pub fn is_finite(&self) -> bool {
        [self.d_x, self.d_y, self.adv_g, self.adv_f, self.cycle]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone)]
pub struct GanBundle {
    pub g: Generator,
    pub f: Generator,
    pub dx: Sequential,
    pub dy: Sequential,
    pub config: GanConfig,
    pub step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    XToY,
    YToX,
}

impl GanBundle {
    pub fn new(config: GanConfig) -> Result<Self, GanError> {
        config.validate()?;
        let (c, s) = (config.channels, config.seed);
        Ok(Self {
            g: Generator::new(c, s, 0),
            f: Generator::new(c, s, 1),
            dx: build_discriminator(c, s, 2),
            dy: build_discriminator(c, s, 3),
            config,
            step: 0,
        })
    }

    fn discriminator_step(d: &mut Sequential, real: &Tensor, fake: &Tensor, lr: f64) -> Result<f64, NnError> {
        d.zero_grad();
        let out_real = d.forward(real, Mode::Train)?;
        d.backward(&lsq_grad(&out_real, 1.0, 0.5), false)?;
        let out_fake = d.forward(fake, Mode::Train)?;
        d.backward(&lsq_grad(&out_fake, 0.0, 0.5), false)?;
        d.sgd_step(lr)?;
        Ok((lsq(&out_real, 1.0) + lsq(&out_fake, 0.0)) / 2.0)
    }

    /// One alternating update: both discriminators on real and detached
    /// fake batches, then both generators on adversarial plus
    /// `cycle_lambda`-weighted cycle terms.
    pub fn train_step(&mut self, x: &Tensor, y: &Tensor) -> Result<LossRecord, GanError> {
        let lr = self.config.lr;
        let lambda = self.config.cycle_lambda;
        let step = self.step;
        self.step += 1;

        let fake_y = self.g.forward(x, Mode::Infer)?;
        let fake_x = self.f.forward(y, Mode::Infer)?;
        let d_y = Self::discriminator_step(&mut self.dy, y, &fake_y, lr)?;
        let d_x = Self::discriminator_step(&mut self.dx, x, &fake_x, lr)?;

        self.g.body.zero_grad();
        self.f.body.zero_grad();

        // x → G → F
        let fake_y = self.g.forward(x, Mode::Train)?;
        let cyc_x = self.f.forward(&fake_y, Mode::Train)?;
        let loss_cx = cycle_loss(x, &cyc_x)?;
        let mut grad_fake_y = self.f.backward(&cycle_grad(x, &cyc_x, lambda))?;
        let dy_out = self.dy.forward(&fake_y, Mode::Train)?;
        let adv_g = lsq(&dy_out, 1.0);
        let adv = self.dy.backward(&lsq_grad(&dy_out, 1.0, 1.0), true)?.expect("input gradient");
        for (a, b) in grad_fake_y.data.iter_mut().zip(&adv.data) {
            *a += b;
        }
        self.g.backward(&grad_fake_y)?;

        // y → F → G
        let fake_x = self.f.forward(y, Mode::Train)?;
        let cyc_y = self.g.forward(&fake_x, Mode::Train)?;
        let loss_cy = cycle_loss(y, &cyc_y)?;
        let mut grad_fake_x = self.g.backward(&cycle_grad(y, &cyc_y, lambda))?;
        let dx_out = self.dx.forward(&fake_x, Mode::Train)?;
        let adv_f = lsq(&dx_out, 1.0);
        let adv = self.dx.backward(&lsq_grad(&dx_out, 1.0, 1.0), true)?.expect("input gradient");
        for (a, b) in grad_fake_x.data.iter_mut().zip(&adv.data) {
            *a += b;
        }
        self.f.backward(&grad_fake_x)?;

        let record = LossRecord { d_x, d_y, adv_g, adv_f, cycle: loss_cx + loss_cy };
        if !record.is_finite() {
            self.g.body.clear_caches();
            self.f.body.clear_caches();
            return Err(GanError::Divergence { step });
        }
        self.g.body.sgd_step(lr)?;
        self.f.body.sgd_step(lr)?;
        Ok(record)
    }

    /// Cycle loss `‖F(G(x))−x‖₁ + ‖G(F(y))−y‖₁` (means) in inference mode.
    pub fn eval_cycle(&mut self, x: &Tensor, y: &Tensor) -> Result<f64, GanError> {
        let cx = self.f.forward(&self.g.forward(x, Mode::Infer)?, Mode::Infer)?;
        let cy = self.g.forward(&self.f.forward(y, Mode::Infer)?, Mode::Infer)?;
        Ok(cycle_loss(x, &cx)? + cycle_loss(y, &cy)?)
    }

    /// Runs `config.steps` updates on batches drawn without replacement
    /// from each domain per step.
    pub fn train(&mut self, xs: &[Image], ys: &[Image]) -> Result<Vec<LossRecord>, GanError> {
        if xs.is_empty() || ys.is_empty() {
            return Err(GanError::Config("both domains need at least one image".into()));
        }
        let mut trace = Vec::with_capacity(self.config.steps);
        for _ in 0..self.config.steps {
            let mut rng = substream(self.config.seed, Stream::Gan, 1000 + self.step as u64);
            let pick = |pool: &[Image], rng: &mut _| -> Vec<Image> {
                let k = self.config.batch_size.min(pool.len());
                sample(rng, pool.len(), k).into_iter().map(|i| to_unit(&pool[i])).collect()
            };
            let bx = images_to_tensor(&pick(xs, &mut rng))?;
            let by = images_to_tensor(&pick(ys, &mut rng))?;
            if bx.batch() != by.batch() {
                let n = bx.batch().min(by.batch());
                trace.push(self.train_step(&bx.slice_rows(0, n), &by.slice_rows(0, n))?);
            } else {
                trace.push(self.train_step(&bx, &by)?);
            }
        }
        Ok(trace)
    }

    /// Translates images with the chosen generator; outputs are clamped to
    /// `[0, 1]` and keep each input's shape.
    pub fn generate(&mut self, images: &[Image], direction: Direction) -> Result<Vec<Image>, GanError> {
        let mut out = Vec::with_capacity(images.len());
        for img in images {
            let (h, w, c) = img.shape();
            let t = images_to_tensor(&[to_unit(img)])?;
            let y = match direction {
                Direction::XToY => self.g.forward(&t, Mode::Infer)?,
                Direction::YToX => self.f.forward(&t, Mode::Infer)?,
            };
            let data: Vec<f64> = y.data.iter().map(|v| v.clamp(0.0, 1.0)).collect();
            out.push(Image::from_planar(h, w, c, &data, ValueDomain::Unit)?);
        }
        Ok(out)
    }

    fn meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            input_channels: self.config.channels as u32,
            input_side: self.config.image_side as u32,
            backbone_len: 0,
            num_classes: 0,
        }
    }

    /// Writes `generator_g.ckpt` and `generator_f.ckpt` into `dir`.
    pub fn save_generators(&self, dir: &Path) -> Result<(), GanError> {
        save_sequential(&self.g.body, self.meta(), &dir.join("generator_g.ckpt"))?;
        save_sequential(&self.f.body, self.meta(), &dir.join("generator_f.ckpt"))?;
        Ok(())
    }

    /// Restores generators saved by [`GanBundle::save_generators`];
    /// discriminators are freshly initialized.
    pub fn load_generators(dir: &Path, mut config: GanConfig) -> Result<Self, GanError> {
        let (g, meta) = load_sequential(&dir.join("generator_g.ckpt"))?;
        let (f, meta_f) = load_sequential(&dir.join("generator_f.ckpt"))?;
        if meta != meta_f {
            return Err(GanError::Config("generator checkpoints disagree on shape".into()));
        }
        config.channels = meta.input_channels as usize;
        config.image_side = meta.input_side as usize;
        let mut bundle = Self::new(config)?;
        bundle.g = Generator { body: g };
        bundle.f = Generator { body: f };
        Ok(bundle)
    }
}

fn to_unit(img: &Image) -> Image {
    match img.domain {
        ValueDomain::Byte => crate::augment::rescale(img, 1.0 / 255.0),
        ValueDomain::Unit => img.clone(),
    }
}

pub fn loss_trace_csv(trace: &[LossRecord]) -> String {
    let mut out = String::from("step,d_x,d_y,adv_g,adv_f,cycle\n");
    for (i, r) in trace.iter().enumerate() {
        out.push_str(&format!("{i},{},{},{},{},{}\n", r.d_x, r.d_y, r.adv_g, r.adv_f, r.cycle));
    }
    out
}

/// Saves images as `synthetic_{label}_{i:05}.png` under `dir` and returns a
/// manifest whose paths are relative to `dir`.
pub fn write_synthetic(images: &[Image], dir: &Path, label: StateLabel) -> Result<DatasetManifest, GanError> {
    std::fs::create_dir_all(dir).map_err(|source| GanError::Io { path: dir.to_path_buf(), source })?;
    let mut samples = Vec::with_capacity(images.len());
    for (i, img) in images.iter().enumerate() {
        let name = format!("synthetic_{}_{i:05}.png", label.name());
        save_png(img, &dir.join(&name))?;
        samples.push(LabeledSample { path: name, label, split: None });
    }
    Ok(DatasetManifest::new(dir, samples)?)
}
