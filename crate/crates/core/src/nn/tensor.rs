use super::NnError;

/// Dense row-major `f64` array with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    pub data: Vec<f64>,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self, NnError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NnError::Dimension(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
            grad: None,
        }
    }

    /// A parameter tensor: zero-initialized gradient buffer attached.
    pub fn param(shape: &[usize], data: Vec<f64>) -> Result<Self, NnError> {
        let mut t = Self::new(shape, data)?;
        t.grad = Some(vec![0.0; t.data.len()]);
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, NnError> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(NnError::Dimension(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Interprets the tensor as N×C×H×W; 2-D tensors are treated as N×C×1×1.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize), NnError> {
        match *self.shape.as_slice() {
            [n, c, h, w] => Ok((n, c, h, w)),
            [n, c] => Ok((n, c, 1, 1)),
            _ => Err(NnError::Dimension(format!(
                "expected N×C×H×W or N×C, got {:?}",
                self.shape
            ))),
        }
    }

    /// Leading (batch) dimension.
    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Number of values per batch row.
    pub fn row_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.row_len();
        &self.data[i * d..(i + 1) * d]
    }

    /// Rows `range` as a new tensor (same trailing shape).
    pub fn slice_rows(&self, start: usize, end: usize) -> Tensor {
        let d = self.row_len();
        let mut shape = self.shape.clone();
        shape[0] = end - start;
        Tensor {
            shape,
            data: self.data[start * d..end * d].to_vec(),
            grad: None,
        }
    }

    /// Stacks equal-shape rows along a new leading axis.
    pub fn stack(rows: &[Tensor]) -> Result<Tensor, NnError> {
        let first = rows
            .first()
            .ok_or_else(|| NnError::Dimension("cannot stack zero tensors".into()))?;
        let mut shape = vec![rows.len()];
        shape.extend_from_slice(first.shape());
        let mut data = Vec::with_capacity(rows.len() * first.len());
        for r in rows {
            if r.shape() != first.shape() {
                return Err(NnError::Dimension(format!(
                    "stack shape mismatch: {:?} vs {:?}",
                    r.shape(),
                    first.shape()
                )));
            }
            data.extend_from_slice(&r.data);
        }
        Tensor::new(&shape, data)
    }

    /// Concatenates tensors along the batch axis.
    pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor, NnError> {
        let first = parts
            .first()
            .ok_or_else(|| NnError::Dimension("cannot concatenate zero tensors".into()))?;
        let tail = &first.shape()[1..];
        let mut n = 0;
        let mut data = Vec::new();
        for p in parts {
            if &p.shape()[1..] != tail {
                return Err(NnError::Dimension(format!(
                    "concat shape mismatch: {:?} vs {:?}",
                    p.shape(),
                    first.shape()
                )));
            }
            n += p.batch();
            data.extend_from_slice(&p.data);
        }
        let mut shape = vec![n];
        shape.extend_from_slice(tail);
        Tensor::new(&shape, data)
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn grad_mut(&mut self) -> &mut [f64] {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![0.0; n])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_checks_length() {
        assert!(Tensor::new(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            Tensor::new(&[2, 3], vec![0.0; 5]),
            Err(NnError::Dimension(_))
        ));
    }

    #[test]
    fn slice_and_concat() {
        let t = Tensor::new(&[3, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let a = t.slice_rows(0, 1);
        let b = t.slice_rows(1, 3);
        assert_eq!(b.data, vec![3., 4., 5., 6.]);
        assert_eq!(Tensor::concat_rows(&[&a, &b]).unwrap(), t);
    }
}
