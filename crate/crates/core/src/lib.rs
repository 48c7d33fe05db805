//! Cooking-state recognition pipeline: image augmentation, a small CNN with
//! a conv/batchnorm/leaky-relu head trained in two freeze/unfreeze phases,
//! feature extraction into a one-vs-one kernel SVM, and a toy CycleGAN for
//! synthetic augmentation.

pub mod augment;
pub mod cli;
pub mod cyclegan;
pub mod dataset;
pub mod model;
pub mod nn;
pub mod rng;
pub mod svm;
pub mod toy;
pub mod trainer;
