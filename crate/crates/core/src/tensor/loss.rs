use super::Tensor;
use crate::error::{Error, Result};

fn logits_dims(logits: &Tensor, labels: &[usize]) -> Result<(usize, usize)> {
    let (n, c) = match logits.shape() {
        &[n, c] => (n, c),
        s => return Err(Error::Dimension(format!("logits must be N x C, got {s:?}"))),
    };
    if labels.len() != n {
        return Err(Error::Dimension(format!(
            "{} labels for a batch of {n}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::Input(format!("label {bad} outside [0, {c})")));
    }
    Ok((n, c))
}

/// Summed cross-entropy over the batch and its gradient multiplied by
/// `grad_scale`. With `grad_scale = 1/N` the gradient is that of the mean
/// loss; the trainer passes `1/batch` when it splits a batch into chunks.
pub fn cross_entropy_terms(logits: &Tensor, labels: &[usize], grad_scale: f64) -> Result<(f64, Tensor)> {
    let (n, c) = logits_dims(logits, labels)?;
    let z = logits.data();
    let mut grad = vec![0.0; n * c];
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = &z[i * c..(i + 1) * c];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_sum = sum.ln();
        total += log_sum - (row[label] - max);
        let g = &mut grad[i * c..(i + 1) * c];
        for (j, gj) in g.iter_mut().enumerate() {
            let p = (row[j] - max - log_sum).exp();
            let target = if j == label { 1.0 } else { 0.0 };
            *gj = (p - target) * grad_scale;
        }
    }
    Ok((total, Tensor::new(vec![n, c], grad)?))
}

/// Mean over the batch of `-log softmax(logits)[label]`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let n = logits.batch() as f64;
    Ok(cross_entropy_terms(logits, labels, 1.0)?.0 / n)
}

/// Gradient of [`softmax_cross_entropy`] with respect to the logits.
pub fn softmax_cross_entropy_backward(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let n = logits.batch() as f64;
    Ok(cross_entropy_terms(logits, labels, 1.0 / n)?.1)
}
