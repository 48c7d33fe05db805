//! Classifier graph: a small convolutional backbone standing in for a
//! pretrained network, followed by the modified head
//! `[conv, bn, leaky_relu, conv, bn, leaky_relu, dropout, dense]`.

use std::ops::Range;

use thiserror::Error;

use crate::dataset::NUM_CLASSES;
use crate::nn::{
    BatchNorm, Conv2d, Dense, Dropout, Layer, LayerKind, LeakyRelu, MaxPool, Mode, NnError,
    Sequential, Tensor, DEFAULT_DROPOUT_RATE, DEFAULT_LEAKY_SLOPE,
};
use crate::rng::{derive_seed, substream, Stream};

pub const DEFAULT_INPUT_SIDE: usize = 32;

/// Layer kinds of the head, in order.
pub const HEAD_KINDS: [LayerKind; 8] = [
    LayerKind::Conv2d,
    LayerKind::BatchNorm,
    LayerKind::LeakyRelu,
    LayerKind::Conv2d,
    LayerKind::BatchNorm,
    LayerKind::LeakyRelu,
    LayerKind::Dropout,
    LayerKind::Dense,
];

/// Backbone conv widths; each conv is followed by a leaky relu, and the
/// first two by a 2×2 max pool.
const BACKBONE_CHANNELS: [usize; 3] = [8, 16, 16];

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("index error: layer range {start}..{end} outside 0..{len}")]
    Index { start: usize, end: usize, len: usize },
    #[error("structure error: {0}")]
    Structure(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadSpec {
    pub conv_channels: [usize; 2],
    pub leaky_slope: f64,
    pub dropout_rate: f64,
}

impl Default for HeadSpec {
    fn default() -> Self {
        Self {
            conv_channels: [16, 16],
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            dropout_rate: DEFAULT_DROPOUT_RATE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub input_channels: usize,
    pub input_side: usize,
    pub num_classes: usize,
    pub head: HeadSpec,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            input_channels: 3,
            input_side: DEFAULT_INPUT_SIDE,
            num_classes: NUM_CLASSES,
            head: HeadSpec::default(),
        }
    }
}

/// Output shape `(C, H, W)` of the backbone for a square input of `side`.
pub fn backbone_output_shape(side: usize) -> (usize, usize, usize) {
    let s = side / 2 / 2;
    (BACKBONE_CHANNELS[2], s, s)
}

/// Backbone layers: `conv, lrelu, pool, conv, lrelu, pool, conv, lrelu`.
/// All convolutions are 3×3, stride 1, same padding.
pub fn build_backbone(input_channels: usize, slope: f64, seed: u64) -> Result<Vec<Layer>, NnError> {
    let mut layers = Vec::new();
    let mut c_in = input_channels;
    for (i, &c_out) in BACKBONE_CHANNELS.iter().enumerate() {
        let mut rng = substream(seed, Stream::Init, i as u64);
        layers.push(Layer::Conv2d(Conv2d::new(c_in, c_out, 3, 1, 1, &mut rng)));
        layers.push(Layer::LeakyRelu(LeakyRelu::new(slope)?));
        if i < 2 {
            layers.push(Layer::MaxPool(MaxPool::new(2, 2)?));
        }
        c_in = c_out;
    }
    Ok(layers)
}

/// Head layers for an input feature map of shape `in_shape = (C, H, W)`.
pub fn build_head(
    spec: &HeadSpec,
    in_shape: (usize, usize, usize),
    num_classes: usize,
    seed: u64,
) -> Result<Vec<Layer>, NnError> {
    let (mut c, h, w) = in_shape;
    let mut layers = Vec::new();
    for (i, &c_out) in spec.conv_channels.iter().enumerate() {
        let mut rng = substream(seed, Stream::Init, 100 + i as u64);
        layers.push(Layer::Conv2d(Conv2d::new(c, c_out, 3, 1, 1, &mut rng)));
        layers.push(Layer::BatchNorm(BatchNorm::new(c_out)));
        layers.push(Layer::LeakyRelu(LeakyRelu::new(spec.leaky_slope)?));
        c = c_out;
    }
    layers.push(Layer::Dropout(Dropout::new(
        spec.dropout_rate,
        derive_seed(seed, Stream::Dropout, 0),
    )?));
    let mut rng = substream(seed, Stream::Init, 200);
    layers.push(Layer::Dense(Dense::new(c * h * w, num_classes, &mut rng)));
    Ok(layers)
}

/// Backbone + head with per-layer trainable flags.
#[derive(Debug, Clone)]
pub struct ModelGraph {
    pub net: Sequential,
    pub backbone_len: usize,
    pub num_classes: usize,
    pub input_channels: usize,
    pub input_side: usize,
}

impl ModelGraph {
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self, ModelError> {
        if spec.input_side < 4 {
            return Err(ModelError::Structure(format!(
                "input side {} too small for two 2×2 pools",
                spec.input_side
            )));
        }
        let backbone = build_backbone(spec.input_channels, spec.head.leaky_slope, seed)?;
        let backbone_len = backbone.len();
        let head = build_head(
            &spec.head,
            backbone_output_shape(spec.input_side),
            spec.num_classes,
            seed,
        )?;
        let model = Self {
            net: Sequential::new(backbone.into_iter().chain(head).collect()),
            backbone_len,
            num_classes: spec.num_classes,
            input_channels: spec.input_channels,
            input_side: spec.input_side,
        };
        model.validate()?;
        Ok(model)
    }

    /// Checks the structural invariants: at least 5 backbone layers, the
    /// head kind sequence, and a final dense of width `num_classes`.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.backbone_len < 5 {
            return Err(ModelError::Structure(format!(
                "backbone has {} layers, at least 5 required",
                self.backbone_len
            )));
        }
        let kinds = self.net.kinds();
        if kinds.len() != self.backbone_len + HEAD_KINDS.len() || kinds[self.backbone_len..] != HEAD_KINDS {
            return Err(ModelError::Structure(format!(
                "head kinds {:?} do not match {:?}",
                kinds.get(self.backbone_len..),
                HEAD_KINDS
            )));
        }
        match &self.net.layers.last().map(|l| &l.layer) {
            Some(Layer::Dense(d)) if d.outputs() == self.num_classes => Ok(()),
            _ => Err(ModelError::Structure(format!(
                "final layer must be dense with {} outputs",
                self.num_classes
            ))),
        }
    }

    pub fn len(&self) -> usize {
        self.net.len()
    }

    pub fn is_empty(&self) -> bool {
        self.net.is_empty()
    }

    pub fn kinds(&self) -> Vec<LayerKind> {
        self.net.kinds()
    }

    pub fn head_kinds(&self) -> Vec<LayerKind> {
        self.net.kinds()[self.backbone_len..].to_vec()
    }

    pub fn backbone_range(&self) -> Range<usize> {
        0..self.backbone_len
    }

    pub fn head_range(&self) -> Range<usize> {
        self.backbone_len..self.net.len()
    }

    /// Index of the final dense layer.
    pub fn dense_index(&self) -> usize {
        self.net.len() - 1
    }

    /// Width of the final dense layer's input.
    pub fn feature_dim(&self) -> usize {
        match &self.net.layers[self.dense_index()].layer {
            Layer::Dense(d) => d.inputs(),
            _ => unreachable!("validated: last layer is dense"),
        }
    }

    pub fn set_trainable(&mut self, range: Range<usize>, flag: bool) -> Result<(), ModelError> {
        if range.start > range.end || range.end > self.net.len() {
            return Err(ModelError::Index {
                start: range.start,
                end: range.end,
                len: self.net.len(),
            });
        }
        for l in &mut self.net.layers[range] {
            l.trainable = flag;
        }
        Ok(())
    }

    pub fn trainable_flags(&self) -> Vec<bool> {
        self.net.layers.iter().map(|l| l.trainable).collect()
    }

    fn check_input(&self, batch: &Tensor) -> Result<(), ModelError> {
        let expected = [self.input_channels, self.input_side, self.input_side];
        if batch.shape().len() != 4 || batch.shape()[1..] != expected {
            return Err(NnError::Dimension(format!(
                "layer 0 (input): expected N×{}×{}×{}, got {:?}",
                expected[0],
                expected[1],
                expected[2],
                batch.shape()
            ))
            .into());
        }
        Ok(())
    }

    /// Logits N×num_classes.
    pub fn forward(&mut self, batch: &Tensor, mode: Mode) -> Result<Tensor, ModelError> {
        self.check_input(batch)?;
        Ok(self.net.forward(batch, mode)?)
    }

    /// Backpropagates logit gradients into trainable layers.
    pub fn backward(&mut self, dlogits: &Tensor) -> Result<(), ModelError> {
        self.net.backward(dlogits, false)?;
        Ok(())
    }

    /// Activations at the input of the final dense layer, in inference mode.
    pub fn extract_features(&mut self, batch: &Tensor) -> Result<Tensor, ModelError> {
        self.extract_features_at(batch, self.dense_index())
    }

    /// Activations after the first `boundary` layers (N×D, flattened), in
    /// inference mode.
    pub fn extract_features_at(&mut self, batch: &Tensor, boundary: usize) -> Result<Tensor, ModelError> {
        if boundary > self.net.len() {
            return Err(ModelError::Index {
                start: 0,
                end: boundary,
                len: self.net.len(),
            });
        }
        self.check_input(batch)?;
        let h = self.net.forward_range(batch, Mode::Infer, 0, boundary)?;
        let (n, d) = (h.batch(), h.row_len());
        Ok(h.reshape(&[n, d])?)
    }

    /// Runs only the final dense layer on precomputed features.
    pub fn classify_features(&mut self, features: &Tensor) -> Result<Tensor, ModelError> {
        let end = self.net.len();
        Ok(self.net.forward_range(features, Mode::Infer, end - 1, end)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelGraph {
        ModelGraph::build(
            &ModelSpec {
                input_side: 8,
                ..Default::default()
            },
            3,
        )
        .unwrap()
    }

    #[test]
    fn head_structure() {
        let m = small();
        assert_eq!(m.head_kinds(), HEAD_KINDS.to_vec());
        assert!(m.backbone_len >= 5);
        match &m.net.layers.last().unwrap().layer {
            Layer::Dense(d) => assert_eq!(d.outputs(), 11),
            _ => panic!("last layer not dense"),
        }
    }

    #[test]
    fn dropout_rate_propagates() {
        let spec = ModelSpec {
            input_side: 8,
            head: HeadSpec {
                dropout_rate: 0.3,
                ..Default::default()
            },
            ..Default::default()
        };
        let m = ModelGraph::build(&spec, 0).unwrap();
        match &m.net.layers[m.dense_index() - 1].layer {
            Layer::Dropout(d) => assert_eq!(d.rate, 0.3),
            _ => panic!("expected dropout before dense"),
        }
    }

    #[test]
    fn set_trainable_range_checks() {
        let mut m = small();
        assert!(m.set_trainable(0..5, false).is_ok());
        assert!(matches!(
            m.set_trainable(0..100, false),
            Err(ModelError::Index { .. })
        ));
    }

    #[test]
    fn wrong_input_shape() {
        let mut m = small();
        let err = m.forward(&Tensor::zeros(&[1, 3, 9, 9]), Mode::Infer).unwrap_err();
        assert!(err.to_string().contains("input"));
    }
}
