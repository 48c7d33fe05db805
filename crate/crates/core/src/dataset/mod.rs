//! Corpus ingestion: the fixed 11-state vocabulary, CSV manifests,
//! stratified splitting and PNG/PPM image I/O.

mod image;
mod manifest;
mod split;

pub(crate) use image::lerp;
pub use image::{decode_png, decode_ppm, encode_png, encode_ppm, load_image, resize_to_square, save_png, Image, ValueDomain};
pub use manifest::{load_manifest, parse_manifest, write_manifest, DatasetManifest, LabeledSample, Split};
pub use split::{split_manifest, SplitFractions};

use thiserror::Error;

/// Number of preparation states.
pub const NUM_CLASSES: usize = 11;

/// Class names in id order (alphabetical).
pub const CLASS_NAMES: [&str; NUM_CLASSES] = [
    "creamy paste",
    "diced",
    "floured",
    "grated",
    "juiced",
    "julienne",
    "mixed",
    "other",
    "peeled",
    "sliced",
    "whole",
];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{context}unknown label {name:?}; valid labels are: {}", CLASS_NAMES.join(", "))]
    Vocabulary { name: String, context: String },
    #[error("duplicate path {path:?} at manifest row {row}")]
    Duplicate { path: String, row: usize },
    #[error("manifest error at row {row}: {msg}")]
    Manifest { row: usize, msg: String },
    #[error("stratification error: class {class:?} has {count} samples, at least 3 are required")]
    Stratification { class: &'static str, count: usize },
    #[error("invalid split fractions: {0}")]
    Fractions(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("decode error: {0}")]
    Decode(String),
    #[error("invalid image: {0}")]
    Image(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One of the 11 preparation states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateLabel(u8);

impl StateLabel {
    pub fn from_id(id: usize) -> Option<Self> {
        (id < NUM_CLASSES).then_some(Self(id as u8))
    }

    pub fn from_name(name: &str) -> Result<Self, DatasetError> {
        let trimmed = name.trim();
        CLASS_NAMES
            .iter()
            .position(|n| *n == trimmed)
            .map(|i| Self(i as u8))
            .ok_or_else(|| DatasetError::Vocabulary {
                name: trimmed.to_string(),
                context: String::new(),
            })
    }

    pub fn id(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        CLASS_NAMES[self.id()]
    }

    pub fn all() -> impl Iterator<Item = StateLabel> {
        (0..NUM_CLASSES as u8).map(StateLabel)
    }
}

impl std::fmt::Display for StateLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for StateLabel {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_name(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_is_sorted_unique_and_bijective() {
        let mut sorted = CLASS_NAMES.to_vec();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted, CLASS_NAMES.to_vec());
        for label in StateLabel::all() {
            assert_eq!(StateLabel::from_name(label.name()).unwrap(), label);
            assert_eq!(StateLabel::from_id(label.id()), Some(label));
        }
        assert_eq!(StateLabel::from_id(11), None);
    }

    #[test]
    fn diced_is_one() {
        assert_eq!(StateLabel::from_name("diced").unwrap().id(), 1);
    }

    #[test]
    fn unknown_label_lists_vocabulary() {
        let msg = StateLabel::from_name("minced").unwrap_err().to_string();
        assert!(msg.contains("minced"));
        for name in CLASS_NAMES {
            assert!(msg.contains(name));
        }
    }
}
