use super::{NnError, Tensor};

/// Row-wise softmax of an N×K tensor, max-shifted for stability.
pub fn softmax(logits: &Tensor) -> Result<Tensor, NnError> {
    let [n, k] = *logits.shape() else {
        return Err(NnError::Dimension(format!(
            "softmax expects N×K logits, got {:?}",
            logits.shape()
        )));
    };
    let mut out = Vec::with_capacity(n * k);
    for i in 0..n {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        out.extend(exps.into_iter().map(|e| e / sum));
    }
    Tensor::new(&[n, k], out)
}

/// Mean cross-entropy over the batch and its gradient `(softmax − onehot)/N`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor), NnError> {
    let [n, k] = *logits.shape() else {
        return Err(NnError::Dimension(format!(
            "cross-entropy expects N×K logits, got {:?}",
            logits.shape()
        )));
    };
    if labels.len() != n {
        return Err(NnError::Dimension(format!(
            "{} labels for {} logit rows",
            labels.len(),
            n
        )));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= k) {
        return Err(NnError::Label { label, classes: k });
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(n * k);
    let inv_n = 1.0 / n as f64;
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_sum = sum.ln();
        loss += log_sum - (row[label] - max);
        for (j, &v) in row.iter().enumerate() {
            let p = (v - max).exp() / sum;
            let onehot = if j == label { 1.0 } else { 0.0 };
            grad.push((p - onehot) * inv_n);
        }
    }
    Ok((loss * inv_n, Tensor::new(&[n, k], grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_k() {
        let logits = Tensor::zeros(&[3, 11]);
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 5, 10]).unwrap();
        assert!((loss - 11f64.ln()).abs() < 1e-12);
        assert!((loss - 2.3979).abs() < 1e-4);
    }

    #[test]
    fn saturated_true_class() {
        let mut data = vec![0.0; 11];
        data[4] = 1000.0;
        let (loss, _) = softmax_cross_entropy(&Tensor::new(&[1, 11], data).unwrap(), &[4]).unwrap();
        assert!(loss < 1e-6);
    }

    #[test]
    fn label_out_of_range() {
        assert!(matches!(
            softmax_cross_entropy(&Tensor::zeros(&[1, 3]), &[3]),
            Err(NnError::Label { label: 3, classes: 3 })
        ));
    }

    #[test]
    fn rows_sum_to_one_and_shift_invariance() {
        let a = Tensor::new(&[2, 3], vec![1.0, -2.0, 0.5, 30.0, 31.0, 29.0]).unwrap();
        let p = softmax(&a).unwrap();
        for i in 0..2 {
            assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let shifted = Tensor::new(&[2, 3], a.data.iter().map(|v| v + 123.0).collect()).unwrap();
        let (l1, _) = softmax_cross_entropy(&a, &[0, 2]).unwrap();
        let (l2, _) = softmax_cross_entropy(&shifted, &[0, 2]).unwrap();
        assert!((l1 - l2).abs() < 1e-9);
    }
}
