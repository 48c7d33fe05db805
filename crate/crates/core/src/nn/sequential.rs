use super::{sgd_step, Layer, LayerKind, LayerState, Mode, NnError, Tensor};

/// Ordered layer stack.
#[derive(Debug, Clone, Default)]
pub struct Sequential {
    pub layers: Vec<LayerState>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self {
            layers: layers.into_iter().map(LayerState::new).collect(),
        }
    }

    pub fn push(&mut self, layer: Layer) {
        self.layers.push(LayerState::new(layer));
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn kinds(&self) -> Vec<LayerKind> {
        self.layers.iter().map(LayerState::kind).collect()
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        self.forward_range(x, mode, 0, self.layers.len())
    }

    /// Runs layers `start..end` only.
    pub fn forward_range(
        &mut self,
        x: &Tensor,
        mode: Mode,
        start: usize,
        end: usize,
    ) -> Result<Tensor, NnError> {
        let mut h = x.clone();
        for (i, state) in self.layers[start..end].iter_mut().enumerate() {
            h = state
                .layer
                .forward(&h, mode, !state.trainable)
                .map_err(|e| annotate(e, start + i, state.kind()))?;
        }
        Ok(h)
    }

    /// Backpropagates `dy` from the last layer. Parameter gradients are
    /// accumulated for trainable layers only. When `input_grad` is false the
    /// pass stops at the lowest trainable layer and returns `None`.
    pub fn backward(&mut self, dy: &Tensor, input_grad: bool) -> Result<Option<Tensor>, NnError> {
        let stop = if input_grad {
            0
        } else {
            match self.layers.iter().position(|l| l.trainable) {
                Some(i) => i,
                None => {
                    self.clear_caches();
                    return Ok(None);
                }
            }
        };
        let mut g = dy.clone();
        for i in (stop..self.layers.len()).rev() {
            let state = &mut self.layers[i];
            g = state
                .layer
                .backward(&g, state.trainable)
                .map_err(|e| annotate(e, i, state.kind()))?;
        }
        for state in &mut self.layers[..stop] {
            state.layer.clear_cache();
        }
        Ok(input_grad.then_some(g))
    }

    pub fn zero_grad(&mut self) {
        self.layers.iter_mut().for_each(LayerState::zero_grad);
    }

    pub fn sgd_step(&mut self, lr: f64) -> Result<(), NnError> {
        for state in &mut self.layers {
            sgd_step(state, lr)?;
        }
        Ok(())
    }

    pub fn clear_caches(&mut self) {
        for state in &mut self.layers {
            state.layer.clear_cache();
        }
    }

    pub fn set_trainable_all(&mut self, flag: bool) {
        self.layers.iter_mut().for_each(|l| l.trainable = flag);
    }

    /// Flattened copy of every parameter and buffer, for bit-exact comparisons.
    pub fn parameter_snapshot(&self) -> Vec<Vec<u64>> {
        self.layers.iter().map(layer_snapshot).collect()
    }
}

pub(crate) fn layer_snapshot(state: &LayerState) -> Vec<u64> {
    state
        .layer
        .params()
        .into_iter()
        .chain(state.layer.buffers())
        .flat_map(|t| t.data.iter().map(|v| v.to_bits()))
        .collect()
}

fn annotate(err: NnError, index: usize, kind: LayerKind) -> NnError {
    match err {
        NnError::Dimension(msg) => NnError::Dimension(format!("layer {index} ({kind:?}): {msg}")),
        NnError::State(msg) => NnError::State(format!("layer {index} ({kind:?}): {msg}")),
        other => other,
    }
}
