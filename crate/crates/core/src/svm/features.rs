use std::path::{Path, PathBuf};

use super::SvmError;
use crate::dataset::NUM_CLASSES;

pub const FEATURE_MAGIC: &[u8; 4] = b"FEAT";
pub const FEATURE_VERSION: u16 = 1;

/// Row-major single-precision features with one class id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
    labels: Vec<usize>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>, labels: Vec<usize>) -> Result<Self, SvmError> {
        if data.len() != rows * cols {
            return Err(SvmError::Dimension { expected: rows * cols, got: data.len() });
        }
        if labels.len() != rows {
            return Err(SvmError::Dimension { expected: rows, got: labels.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(SvmError::Format(format!("non-finite feature at row {}", i / cols.max(1))));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= NUM_CLASSES) {
            return Err(SvmError::Label(l));
        }
        Ok(Self { rows, cols, data, labels })
    }

    /// Builds from f64 rows, rounding each value to single precision.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>) -> Result<Self, SvmError> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(SvmError::Dimension { expected: cols, got: bad.len() });
        }
        let data = rows.iter().flatten().map(|&v| v as f32).collect();
        Self::new(rows.len(), cols, data, labels)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| v as f64).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    /// Sorted distinct labels.
    pub fn classes(&self) -> Vec<usize> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }
}

pub fn encode_features(m: &FeatureMatrix) -> Vec<u8> {
    let mut buf = Vec::with_capacity(14 + m.data.len() * 4 + m.rows * 2);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(m.rows as u32).to_le_bytes());
    buf.extend_from_slice(&(m.cols as u32).to_le_bytes());
    for v in &m.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for &l in &m.labels {
        buf.extend_from_slice(&(l as u16).to_le_bytes());
    }
    buf
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureMatrix, SvmError> {
    if bytes.len() < 14 || &bytes[..4] != FEATURE_MAGIC {
        return Err(SvmError::Format("not a feature file (bad magic or short header)".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FEATURE_VERSION {
        return Err(SvmError::Format(format!("unsupported feature file version {version}")));
    }
    let rows = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes")) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(rows * 2 + 14));
    if expected != Some(bytes.len()) {
        return Err(SvmError::Format(format!(
            "feature file is {} bytes, header implies {rows}×{cols}",
            bytes.len()
        )));
    }
    let body = &bytes[14..];
    let (block, tail) = body.split_at(rows * cols * 4);
    let data = block
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let labels = tail
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]) as usize)
        .collect();
    FeatureMatrix::new(rows, cols, data, labels)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SvmError + '_ {
    move |source| SvmError::Io { path: PathBuf::from(path), source }
}

pub fn write_features(m: &FeatureMatrix, path: &Path) -> Result<(), SvmError> {
    std::fs::write(path, encode_features(m)).map_err(io_err(path))
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix, SvmError> {
    decode_features(&std::fs::read(path).map_err(io_err(path))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_round_trip() {
        let m = FeatureMatrix::new(2, 3, vec![0.5, -1.25, 3.0, 1e-7, 0.0, 7.5], vec![10, 0]).unwrap();
        let b = encode_features(&m);
        assert_eq!(b.len(), 14 + 24 + 4);
        assert_eq!(decode_features(&b).unwrap(), m);
        assert!(decode_features(&b[..b.len() - 1]).is_err());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(FeatureMatrix::new(1, 1, vec![f32::NAN], vec![0]).is_err());
        assert!(FeatureMatrix::new(1, 1, vec![0.0], vec![11]).is_err());
    }
}
