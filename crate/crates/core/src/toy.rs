//! Synthetic images for smoke runs and self-checks.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{
    save_png, write_manifest, DatasetError, DatasetManifest, Image, LabeledSample, StateLabel,
    ValueDomain, NUM_CLASSES,
};
use crate::rng::{substream, Stream};

/// A filled square of `value` on a `background` field, unit domain.
pub fn square_image<R: Rng>(side: usize, channels: usize, value: f64, background: f64, rng: &mut R) -> Image {
    let size = rng.random_range(side / 3..=side / 2);
    let (top, left) = (rng.random_range(0..=side - size), rng.random_range(0..=side - size));
    let mut img = Image::filled(side, side, channels, background, ValueDomain::Unit);
    for y in top..top + size {
        for x in left..left + size {
            for c in 0..channels {
                let i = img.index(y, x, c);
                img.data[i] = value;
            }
        }
    }
    img
}

/// Two translation domains: dark squares (X) and bright squares (Y) on a
/// mid-grey field.
pub fn dark_bright_domains(n: usize, side: usize, channels: usize, seed: u64) -> (Vec<Image>, Vec<Image>) {
    let mut rng = substream(seed, Stream::Gan, 0xd0_0a);
    let xs = (0..n)
        .map(|_| {
            let v = rng.random_range(0.05..0.2);
            square_image(side, channels, v, 0.5, &mut rng)
        })
        .collect();
    let ys = (0..n)
        .map(|_| {
            let v = rng.random_range(0.8..0.95);
            square_image(side, channels, v, 0.5, &mut rng)
        })
        .collect();
    (xs, ys)
}

/// Byte-domain image for class `label`: a class-specific colour and stripe
/// period plus per-pixel noise.
pub fn class_image<R: Rng>(label: StateLabel, side: usize, rng: &mut R) -> Image {
    let k = label.id() as f64;
    let base = [
        40.0 + 19.0 * k,
        230.0 - 17.0 * k,
        60.0 + 150.0 * ((k * 0.37).fract()),
    ];
    let period = 2 + label.id() % 5;
    let noise = Normal::new(0.0, 12.0).expect("finite std");
    let mut data = Vec::with_capacity(side * side * 3);
    for y in 0..side {
        for x in 0..side {
            let stripe = if ((x + y * (label.id() % 2)) / period).is_multiple_of(2) { 30.0 } else { -30.0 };
            for b in base {
                data.push((b + stripe + noise.sample(rng)).round().clamp(0.0, 255.0));
            }
        }
    }
    Image::new(side, side, 3, data, ValueDomain::Byte).expect("consistent shape")
}

/// `per_class` images of every class, labels in class order.
pub fn class_corpus(per_class: usize, side: usize, seed: u64) -> Vec<(Image, StateLabel)> {
    let mut rng = substream(seed, Stream::Init, 0x70_79);
    StateLabel::all()
        .flat_map(|l| (0..per_class).map(move |_| l))
        .map(|l| (class_image(l, side, &mut rng), l))
        .collect()
}

/// Writes [`class_corpus`] as PNGs plus `manifest.csv` under `dir`.
pub fn write_class_corpus(dir: &Path, per_class: usize, side: usize, seed: u64) -> Result<DatasetManifest, DatasetError> {
    std::fs::create_dir_all(dir).map_err(|source| DatasetError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut samples = Vec::with_capacity(per_class * NUM_CLASSES);
    for (i, (img, label)) in class_corpus(per_class, side, seed).into_iter().enumerate() {
        let name = format!("{}_{i:04}.png", label.name());
        save_png(&img, &dir.join(&name))?;
        samples.push(LabeledSample { path: name, label, split: None });
    }
    let manifest = DatasetManifest::new(dir, samples)?;
    write_manifest(&manifest, &dir.join("manifest.csv"))?;
    Ok(manifest)
}
