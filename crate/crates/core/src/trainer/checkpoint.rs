//! Binary checkpoint files.
//!
//! Layout (little endian): magic `SKCK`, version u16, four u32 meta fields
//! (input channels, input side, backbone length, class count), layer count
//! u32, then per layer a kind tag u8, trainable flag u8, the kind's hyper
//! block and its tensors (rank u32, dims u32 each, f32 values). A CRC-32 of
//! everything before it closes the file.

use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::{ModelError, ModelGraph};
use crate::nn::{
    BatchNorm, Conv2d, Dense, Dropout, Layer, LayerKind, LayerState, LeakyRelu, MaxPool,
    Sequential, Tensor, Upsample,
};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SKCK";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error("checkpoint integrity error: {0}")]
    Integrity(String),
    #[error("checkpoint structure error: {0}")]
    Structure(String),
    #[error("checkpoint I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl From<ModelError> for CheckpointError {
    fn from(e: ModelError) -> Self {
        CheckpointError::Structure(e.to_string())
    }
}

impl From<crate::nn::NnError> for CheckpointError {
    fn from(e: crate::nn::NnError) -> Self {
        CheckpointError::Structure(e.to_string())
    }
}

/// Whole-network facts stored alongside the layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CheckpointMeta {
    pub input_channels: u32,
    pub input_side: u32,
    pub backbone_len: u32,
    pub num_classes: u32,
}

impl CheckpointMeta {
    pub fn of(model: &ModelGraph) -> Self {
        Self {
            input_channels: model.input_channels as u32,
            input_side: model.input_side as u32,
            backbone_len: model.backbone_len as u32,
            num_classes: model.num_classes as u32,
        }
    }
}

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_tensor(buf: &mut Vec<u8>, t: &Tensor) {
    put_u32(buf, t.shape().len());
    for &d in t.shape() {
        put_u32(buf, d);
    }
    for &v in &t.data {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub fn encode_sequential(net: &Sequential, meta: CheckpointMeta) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [meta.input_channels, meta.input_side, meta.backbone_len, meta.num_classes] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    put_u32(&mut buf, net.layers.len());
    for state in &net.layers {
        buf.push(state.kind().tag());
        buf.push(state.trainable as u8);
        match &state.layer {
            Layer::Conv2d(l) => {
                put_u32(&mut buf, l.stride);
                put_u32(&mut buf, l.padding);
            }
            Layer::BatchNorm(l) => {
                buf.extend_from_slice(&l.epsilon.to_le_bytes());
                buf.extend_from_slice(&l.momentum.to_le_bytes());
            }
            Layer::LeakyRelu(l) => buf.extend_from_slice(&l.slope.to_le_bytes()),
            Layer::MaxPool(l) => {
                put_u32(&mut buf, l.window);
                put_u32(&mut buf, l.stride);
            }
            Layer::Dropout(l) => {
                buf.extend_from_slice(&l.rate.to_le_bytes());
                buf.extend_from_slice(&l.seed.to_le_bytes());
            }
            Layer::Dense(_) => {}
            Layer::Upsample(l) => put_u32(&mut buf, l.factor),
        }
        for t in state.layer.params().into_iter().chain(state.layer.buffers()) {
            put_tensor(&mut buf, t);
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.bytes.len() - self.pos < n {
            return Err(CheckpointError::Integrity(format!(
                "truncated at byte {} (needed {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn usize(&mut self) -> Result<usize, CheckpointError> {
        self.u32().map(|v| v as usize)
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn tensor(&mut self, trainable: bool) -> Result<Tensor, CheckpointError> {
        let rank = self.usize()?;
        if rank > 8 {
            return Err(CheckpointError::Integrity(format!("implausible tensor rank {rank}")));
        }
        let dims = (0..rank).map(|_| self.usize()).collect::<Result<Vec<_>, _>>()?;
        let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n
            .filter(|&n| n.checked_mul(4).is_some_and(|b| b <= self.bytes.len() - self.pos))
            .ok_or_else(|| CheckpointError::Integrity(format!("tensor {dims:?} exceeds file")))?;
        let data = self
            .take(n * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        Ok(if trainable {
            Tensor::param(&dims, data)?
        } else {
            Tensor::new(&dims, data)?
        })
    }
}

pub fn decode_sequential(bytes: &[u8]) -> Result<(Sequential, CheckpointMeta), CheckpointError> {
    if bytes.len() < 6 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::Format("bad magic, not a checkpoint".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Format(format!(
            "unsupported version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    if bytes.len() < 10 {
        return Err(CheckpointError::Integrity("truncated header".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(CheckpointError::Integrity("checksum mismatch (truncated or corrupted)".into()));
    }
    let mut r = Reader { bytes: body, pos: 6 };
    let meta = CheckpointMeta {
        input_channels: r.u32()?,
        input_side: r.u32()?,
        backbone_len: r.u32()?,
        num_classes: r.u32()?,
    };
    let count = r.usize()?;
    let mut layers = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let tag = r.u8()?;
        let kind = LayerKind::from_tag(tag)
            .ok_or_else(|| CheckpointError::Format(format!("layer {i}: unknown kind tag {tag}")))?;
        let trainable = match r.u8()? {
            0 => false,
            1 => true,
            v => return Err(CheckpointError::Format(format!("layer {i}: bad trainable flag {v}"))),
        };
        let layer = match kind {
            LayerKind::Conv2d => {
                let (stride, padding) = (r.usize()?, r.usize()?);
                let (w, b) = (r.tensor(true)?, r.tensor(true)?);
                Layer::Conv2d(Conv2d::from_params(w, b, stride, padding)?)
            }
            LayerKind::BatchNorm => {
                let (epsilon, momentum) = (r.f64()?, r.f64()?);
                let (gamma, beta) = (r.tensor(true)?, r.tensor(true)?);
                let c = gamma.len();
                let mut bn = BatchNorm::new(c);
                let (mean, var) = (r.tensor(false)?, r.tensor(false)?);
                if beta.len() != c || mean.len() != c || var.len() != c {
                    return Err(CheckpointError::Structure(format!(
                        "layer {i}: batch-norm tensors disagree on channel count"
                    )));
                }
                bn.gamma = gamma;
                bn.beta = beta;
                bn.running_mean = mean;
                bn.running_var = var;
                bn.epsilon = epsilon;
                bn.momentum = momentum;
                Layer::BatchNorm(bn)
            }
            LayerKind::LeakyRelu => Layer::LeakyRelu(LeakyRelu::new(r.f64()?)?),
            LayerKind::MaxPool => {
                let (window, stride) = (r.usize()?, r.usize()?);
                Layer::MaxPool(MaxPool::new(window, stride)?)
            }
            LayerKind::Dropout => {
                let (rate, seed) = (r.f64()?, r.u64()?);
                Layer::Dropout(Dropout::new(rate, seed)?)
            }
            LayerKind::Dense => {
                let (w, b) = (r.tensor(true)?, r.tensor(true)?);
                Layer::Dense(Dense::from_params(w, b)?)
            }
            LayerKind::Upsample => Layer::Upsample(Upsample::new(r.usize()?)?),
        };
        layers.push(LayerState { layer, trainable });
    }
    if r.pos != body.len() {
        return Err(CheckpointError::Integrity(format!(
            "{} trailing bytes after last layer",
            body.len() - r.pos
        )));
    }
    Ok((Sequential { layers }, meta))
}

/// Writes via a temporary sibling and a rename, so a failed save never
/// leaves a partial file at `path`.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CheckpointError> {
    let io = |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let result = std::fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(bytes).and_then(|_| f.sync_all()))
        .and_then(|_| std::fs::rename(&tmp, path));
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result.map_err(io)
}

fn read_file(path: &Path) -> Result<Vec<u8>, CheckpointError> {
    std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_sequential(net: &Sequential, meta: CheckpointMeta, path: &Path) -> Result<(), CheckpointError> {
    write_atomic(path, &encode_sequential(net, meta))
}

pub fn load_sequential(path: &Path) -> Result<(Sequential, CheckpointMeta), CheckpointError> {
    decode_sequential(&read_file(path)?)
}

pub fn save_checkpoint(model: &ModelGraph, path: &Path) -> Result<(), CheckpointError> {
    save_sequential(&model.net, CheckpointMeta::of(model), path)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelGraph, CheckpointError> {
    let (net, meta) = load_sequential(path)?;
    let model = ModelGraph {
        net,
        backbone_len: meta.backbone_len as usize,
        num_classes: meta.num_classes as usize,
        input_channels: meta.input_channels as usize,
        input_side: meta.input_side as usize,
    };
    model.validate()?;
    Ok(model)
}

/// Loads weights into an existing model of the same architecture. On any
/// error the target is left untouched.
pub fn load_checkpoint_into(model: &mut ModelGraph, path: &Path) -> Result<(), CheckpointError> {
    let loaded = load_checkpoint(path)?;
    if loaded.net.layers.len() != model.net.layers.len() {
        return Err(CheckpointError::Structure(format!(
            "checkpoint has {} layers, model has {}",
            loaded.net.layers.len(),
            model.net.layers.len()
        )));
    }
    for (i, (a, b)) in loaded.net.layers.iter().zip(&model.net.layers).enumerate() {
        let shapes = |s: &LayerState| {
            s.layer
                .params()
                .iter()
                .chain(s.layer.buffers().iter())
                .map(|t| t.shape().to_vec())
                .collect::<Vec<_>>()
        };
        if a.kind() != b.kind() || shapes(a) != shapes(b) {
            return Err(CheckpointError::Structure(format!(
                "layer {i}: checkpoint {:?} {:?} vs model {:?} {:?}",
                a.kind(),
                shapes(a),
                b.kind(),
                shapes(b)
            )));
        }
    }
    if (loaded.input_side, loaded.num_classes) != (model.input_side, model.num_classes) {
        return Err(CheckpointError::Structure("input side or class count differs".into()));
    }
    *model = loaded;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;
    use crate::nn::Mode;

    fn small() -> ModelGraph {
        let spec = ModelSpec {
            input_side: 8,
            ..ModelSpec::default()
        };
        ModelGraph::build(&spec, 3).unwrap()
    }

    #[test]
    fn round_trip_logits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut m = small();
        m.set_trainable(m.backbone_range(), false).unwrap();
        save_checkpoint(&m, &path).unwrap();
        let mut back = load_checkpoint(&path).unwrap();
        assert_eq!(back.kinds(), m.kinds());
        assert_eq!(back.trainable_flags(), m.trainable_flags());
        let x = Tensor::new(&[2, 3, 8, 8], (0..384).map(|i| (i % 17) as f64 / 17.0).collect()).unwrap();
        let a = m.forward(&x, Mode::Infer).unwrap();
        let b = back.forward(&x, Mode::Infer).unwrap();
        for (u, v) in a.data.iter().zip(&b.data) {
            assert!((u - v).abs() < 1e-5);
        }
    }

    #[test]
    fn corruption_detected() {
        let bytes = encode_sequential(&small().net, CheckpointMeta::default());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_sequential(&bad), Err(CheckpointError::Format(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode_sequential(&bad), Err(CheckpointError::Format(_))));
        let cut = &bytes[..bytes.len() - 11];
        assert!(matches!(decode_sequential(cut), Err(CheckpointError::Integrity(_))));
        let mut bad = bytes;
        bad[40] ^= 0x55;
        assert!(matches!(decode_sequential(&bad), Err(CheckpointError::Integrity(_))));
    }
}
