use rand::seq::SliceRandom;

use super::{DatasetError, DatasetManifest, Split, CLASS_NAMES, NUM_CLASSES};
use crate::rng::{substream, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    /// Validated fractions: each strictly positive, summing to 1 within 1e-9.
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self, DatasetError> {
        for (name, v) in [("train", train), ("val", val), ("test", test)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(DatasetError::Fractions(format!(
                    "{name} fraction must be positive, got {v}"
                )));
            }
        }
        let sum = train + val + test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::Fractions(format!(
                "fractions sum to {sum}, expected 1"
            )));
        }
        Ok(Self { train, val, test })
    }

    /// Per-class counts `(train, val, test)` for a class of `n` samples.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let train = ((n as f64) * self.train).round() as usize;
        let train = train.min(n);
        let val = (((n as f64) * self.val).round() as usize).min(n - train);
        (train, val, n - train - val)
    }
}

/// Stratified, seeded reassignment of every sample to train/val/test.
///
/// Within each class, samples are ordered by path, shuffled with a stream
/// keyed by `(seed, class id)`, and cut at `round(n·train)` and
/// `round(n·val)`; the test split takes the remainder. The result is
/// independent of manifest row order.
pub fn split_manifest(
    manifest: &DatasetManifest,
    fractions: SplitFractions,
    seed: u64,
) -> Result<DatasetManifest, DatasetError> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, s) in manifest.samples.iter().enumerate() {
        by_class[s.label.id()].push(i);
    }
    let mut out = manifest.clone();
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < 3 {
            return Err(DatasetError::Stratification {
                class: CLASS_NAMES[class],
                count: members.len(),
            });
        }
        members.sort_by(|&a, &b| manifest.samples[a].path.cmp(&manifest.samples[b].path));
        let mut rng = substream(seed, Stream::Split, class as u64);
        members.shuffle(&mut rng);
        let (train, val, _) = fractions.counts(members.len());
        for (rank, &idx) in members.iter().enumerate() {
            out.samples[idx].split = Some(if rank < train {
                Split::Train
            } else if rank < train + val {
                Split::Val
            } else {
                Split::Test
            });
        }
    }
    Ok(out)
}
