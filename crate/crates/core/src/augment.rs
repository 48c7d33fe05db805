//! Random rotation, shear, zoom and flips realized as one sampled affine
//! warp, followed by a deterministic intensity rescale.
//!
//! The affine maps *output* pixel coordinates `(x, y)` (x = column,
//! y = row, y pointing down) to *input* coordinates about the image center:
//!
//! ```text
//! p_in = F · Z · S · R · (p_out − c) + c
//! ```
//!
//! with `R` the rotation by `angle`, `S = [[1, −sin s], [0, cos s]]` the
//! shear, `Z = diag(1/zoom_x, 1/zoom_y)` and `F` the flip signs.

use rand::Rng;
use rayon::prelude::*;

use crate::dataset::{lerp, Image, ValueDomain};
use crate::rng::{substream, Stream};

/// Sampling ranges for each augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentationConfig {
    /// Degrees; angles are drawn from `[−rotation_max, rotation_max]`.
    pub rotation_max: f64,
    /// Radians; shear angles are drawn from `[−shear_max, shear_max]`.
    pub shear_max: f64,
    /// Zoom factors are drawn from `[1 − zoom_delta, 1 + zoom_delta]` per axis.
    pub zoom_delta: f64,
    pub rescale: f64,
    pub hflip: bool,
    pub vflip: bool,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            rotation_max: 45.0,
            shear_max: 0.2,
            zoom_delta: 0.2,
            rescale: 1.0 / 255.0,
            hflip: true,
            vflip: true,
        }
    }
}

impl AugmentationConfig {
    /// No geometric change; only the 1/255 rescale remains.
    pub fn neutral() -> Self {
        Self {
            rotation_max: 0.0,
            shear_max: 0.0,
            zoom_delta: 0.0,
            rescale: 1.0 / 255.0,
            hflip: false,
            vflip: false,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.rotation_max >= 0.0 && self.rotation_max.is_finite()) {
            return Err(format!("rotation_max must be ≥ 0, got {}", self.rotation_max));
        }
        if !(self.shear_max >= 0.0 && self.shear_max.is_finite()) {
            return Err(format!("shear_max must be ≥ 0, got {}", self.shear_max));
        }
        if !(0.0..1.0).contains(&self.zoom_delta) {
            return Err(format!("zoom_delta must be in [0, 1), got {}", self.zoom_delta));
        }
        if !(self.rescale > 0.0 && self.rescale.is_finite()) {
            return Err(format!("rescale must be > 0, got {}", self.rescale));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentationParams {
    pub angle: f64,
    pub shear: f64,
    pub zoom_x: f64,
    pub zoom_y: f64,
    pub do_hflip: bool,
    pub do_vflip: bool,
}

impl AugmentationParams {
    pub fn neutral() -> Self {
        Self {
            angle: 0.0,
            shear: 0.0,
            zoom_x: 1.0,
            zoom_y: 1.0,
            do_hflip: false,
            do_vflip: false,
        }
    }
}

fn symmetric<R: Rng>(rng: &mut R, max: f64) -> f64 {
    if max == 0.0 {
        0.0
    } else {
        rng.random_range(-max..=max)
    }
}

pub fn sample_params<R: Rng>(config: &AugmentationConfig, rng: &mut R) -> AugmentationParams {
    let angle = symmetric(rng, config.rotation_max);
    let shear = symmetric(rng, config.shear_max);
    let zoom_x = 1.0 + symmetric(rng, config.zoom_delta);
    let zoom_y = 1.0 + symmetric(rng, config.zoom_delta);
    let do_hflip = config.hflip && rng.random_bool(0.5);
    let do_vflip = config.vflip && rng.random_bool(0.5);
    AugmentationParams {
        angle,
        shear,
        zoom_x,
        zoom_y,
        do_hflip,
        do_vflip,
    }
}

/// 2×3 output-to-input map `[a b tx; c d ty]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine2D {
    pub m: [[f64; 3]; 2],
}

impl Affine2D {
    pub fn identity() -> Self {
        Self {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        }
    }

    /// The 2×2 linear part, row-major.
    pub fn linear(&self) -> [f64; 4] {
        [self.m[0][0], self.m[0][1], self.m[1][0], self.m[1][1]]
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.m[0][0] * x + self.m[0][1] * y + self.m[0][2],
            self.m[1][0] * x + self.m[1][1] * y + self.m[1][2],
        )
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
    }
}

fn mul(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

/// `sin`/`cos` with exact values at multiples of 90°.
fn sin_cos_degrees(deg: f64) -> (f64, f64) {
    let quarter = deg / 90.0;
    if quarter == quarter.round() {
        match (quarter.round() as i64).rem_euclid(4) {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        deg.to_radians().sin_cos()
    }
}

pub fn params_to_affine(params: &AugmentationParams, h: usize, w: usize) -> Affine2D {
    let (sin, cos) = sin_cos_degrees(params.angle);
    let rotate = [cos, -sin, sin, cos];
    let shear = if params.shear == 0.0 {
        [1.0, 0.0, 0.0, 1.0]
    } else {
        [1.0, -params.shear.sin(), 0.0, params.shear.cos()]
    };
    let zoom = [1.0 / params.zoom_x, 0.0, 0.0, 1.0 / params.zoom_y];
    let flip = [
        if params.do_hflip { -1.0 } else { 1.0 },
        0.0,
        0.0,
        if params.do_vflip { -1.0 } else { 1.0 },
    ];
    let a = mul(flip, mul(zoom, mul(shear, rotate)));
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    Affine2D {
        m: [
            [a[0], a[1], cx - a[0] * cx - a[1] * cy],
            [a[2], a[3], cy - a[2] * cx - a[3] * cy],
        ],
    }
}

/// Snaps coordinates within 1e-9 of a grid point onto it.
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

/// Inverse-maps every output pixel through `t` and samples the input
/// bilinearly; coordinates outside the image are clamped to the nearest edge.
pub fn apply_affine(img: &Image, t: &Affine2D) -> Image {
    let (h, w, ch) = img.shape();
    let mut data = Vec::with_capacity(img.data.len());
    let (ymax, xmax) = ((h - 1) as f64, (w - 1) as f64);
    for oy in 0..h {
        for ox in 0..w {
            let (sx, sy) = t.apply(ox as f64, oy as f64);
            let fx = snap(sx).clamp(0.0, xmax);
            let fy = snap(sy).clamp(0.0, ymax);
            let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
            for c in 0..ch {
                let top = lerp(img.get(y0, x0, c), img.get(y0, x1, c), tx);
                let bottom = lerp(img.get(y1, x0, c), img.get(y1, x1, c), tx);
                data.push(lerp(top, bottom, ty));
            }
        }
    }
    Image {
        height: h,
        width: w,
        channels: ch,
        data,
        domain: img.domain,
    }
}

/// Exact column reversal.
pub fn flip_h(img: &Image) -> Image {
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            for c in 0..img.channels {
                out.data[img.index(y, x, c)] = img.get(y, img.width - 1 - x, c);
            }
        }
    }
    out
}

/// Exact row reversal.
pub fn flip_v(img: &Image) -> Image {
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            for c in 0..img.channels {
                out.data[img.index(y, x, c)] = img.get(img.height - 1 - y, x, c);
            }
        }
    }
    out
}

/// Multiplies every sample by `factor`. A byte image scaled by 1/255 becomes
/// a unit image; unit images stay unit images. Results are clamped to the
/// target domain, with a warning when clamping actually changed a value.
pub fn rescale(img: &Image, factor: f64) -> Image {
    let to_unit = img.domain == ValueDomain::Unit || factor <= 1.0 / 255.0 + 1e-15;
    let domain = if to_unit { ValueDomain::Unit } else { ValueDomain::Byte };
    let max = domain.max();
    let mut clamped = 0usize;
    let data = img
        .data
        .iter()
        .map(|&v| {
            let s = v * factor;
            let c = s.clamp(0.0, max);
            if (c - s).abs() > 1e-12 {
                clamped += 1;
            }
            c
        })
        .collect();
    if clamped > 0 {
        log::warn!("rescale by {factor} clamped {clamped} samples to [0, {max}]");
    }
    Image {
        height: img.height,
        width: img.width,
        channels: img.channels,
        data,
        domain,
    }
}

/// Sample params, warp, rescale.
pub fn augment_sample<R: Rng>(img: &Image, config: &AugmentationConfig, rng: &mut R) -> Image {
    let params = sample_params(config, rng);
    let warped = if params == AugmentationParams::neutral() {
        img.clone()
    } else {
        apply_affine(img, &params_to_affine(&params, img.height, img.width))
    };
    rescale(&warped, config.rescale)
}

/// Augments `images[i]` with the stream `(seed, Augment, offset + i)`, in
/// parallel. Output is independent of the thread count.
pub fn augment_batch(images: &[Image], config: &AugmentationConfig, seed: u64, offset: u64) -> Vec<Image> {
    images
        .par_iter()
        .enumerate()
        .map(|(i, img)| {
            let mut rng = substream(seed, Stream::Augment, offset + i as u64);
            augment_sample(img, config, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gray(h: usize, w: usize, vals: &[u8]) -> Image {
        Image::from_bytes(h, w, 1, vals).unwrap()
    }

    #[test]
    fn degenerate_config_gives_neutral_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = AugmentationConfig::neutral();
        assert_eq!(sample_params(&cfg, &mut rng), AugmentationParams::neutral());
    }

    #[test]
    fn neutral_params_identity_matrix() {
        let t = params_to_affine(&AugmentationParams::neutral(), 7, 5);
        assert_eq!(t, Affine2D::identity());
    }

    #[test]
    fn ninety_degree_matrix() {
        let p = AugmentationParams {
            angle: 90.0,
            ..AugmentationParams::neutral()
        };
        let t = params_to_affine(&p, 4, 4);
        assert_eq!(t.linear(), [0.0, -1.0, 1.0, 0.0]);
        // center is a fixed point
        assert_eq!(t.apply(1.5, 1.5), (1.5, 1.5));
    }

    #[test]
    fn zoom_two_halves_about_center() {
        let p = AugmentationParams {
            zoom_x: 2.0,
            zoom_y: 2.0,
            ..AugmentationParams::neutral()
        };
        let t = params_to_affine(&p, 5, 5);
        assert_eq!(t.linear(), [0.5, 0.0, 0.0, 0.5]);
        assert_eq!(t.apply(0.0, 0.0), (1.0, 1.0));
        assert_eq!(t.apply(2.0, 2.0), (2.0, 2.0));
    }

    #[test]
    fn rotation_of_two_by_two() {
        // [[a,b],[c,d]] → [[b,d],[a,c]]
        let img = gray(2, 2, &[1, 2, 3, 4]);
        let p = AugmentationParams {
            angle: 90.0,
            ..AugmentationParams::neutral()
        };
        let out = apply_affine(&img, &params_to_affine(&p, 2, 2));
        assert_eq!(out.data, vec![2.0, 4.0, 1.0, 3.0]);
    }

    #[test]
    fn flip_via_affine_matches_index_reversal() {
        let img = gray(2, 2, &[1, 2, 3, 4]);
        let p = AugmentationParams {
            do_hflip: true,
            ..AugmentationParams::neutral()
        };
        let out = apply_affine(&img, &params_to_affine(&p, 2, 2));
        assert_eq!(out.data, vec![2.0, 1.0, 4.0, 3.0]);
        assert_eq!(out, flip_h(&img));
    }

    #[test]
    fn flips() {
        let img = gray(2, 2, &[1, 2, 3, 4]);
        assert_eq!(flip_h(&img).data, vec![2.0, 1.0, 4.0, 3.0]);
        assert_eq!(flip_v(&img).data, vec![3.0, 4.0, 1.0, 2.0]);
        assert_eq!(flip_h(&flip_h(&img)), img);
        assert_eq!(flip_v(&flip_v(&img)), img);
    }

    #[test]
    fn rescale_values() {
        let img = gray(1, 2, &[255, 0]);
        let out = rescale(&img, 1.0 / 255.0);
        assert_eq!(out.data, vec![1.0, 0.0]);
        assert_eq!(out.domain, ValueDomain::Unit);
        let unit = Image::new(1, 2, 1, vec![0.25, 0.75], ValueDomain::Unit).unwrap();
        assert_eq!(rescale(&unit, 1.0), unit);
    }

    #[test]
    fn neutral_augmentation_is_rescale_only() {
        let img = Image::from_bytes(3, 3, 3, &(0..27).map(|v| v * 9).collect::<Vec<u8>>()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = augment_sample(&img, &AugmentationConfig::neutral(), &mut rng);
        let expected: Vec<f64> = img.data.iter().map(|v| v * (1.0 / 255.0)).collect();
        assert_eq!(out.data, expected);
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = Image::filled(9, 7, 3, 77.0, ValueDomain::Byte);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let out = augment_sample(&img, &AugmentationConfig::default(), &mut rng);
            assert!(out.data.iter().all(|&v| v == 77.0 * (1.0 / 255.0)));
        }
    }

    #[test]
    fn config_validation() {
        assert!(AugmentationConfig::default().validate().is_ok());
        let bad = AugmentationConfig {
            zoom_delta: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
