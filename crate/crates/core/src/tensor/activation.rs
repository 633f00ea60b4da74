use super::Tensor;
use crate::error::{Error, Result};

/// Clamp every element to `[0, 1]`.
pub fn clipped_relu(input: &Tensor) -> Tensor {
    input.map(|x| x.clamp(0.0, 1.0))
}

/// Clamp every element to `[-1, 1]`.
pub fn clip_pm1(input: &Tensor) -> Tensor {
    input.map(|x| x.clamp(-1.0, 1.0))
}

/// Passes `upstream` where `lo <= input <= hi` and zeroes it elsewhere.
/// The interval end points count as inside.
pub(crate) fn interval_mask_backward(upstream: &Tensor, input: &Tensor, lo: f64, hi: f64) -> Result<Tensor> {
    if upstream.shape() != input.shape() {
        return Err(Error::Dimension(format!(
            "gradient shape {:?} does not match input shape {:?}",
            upstream.shape(),
            input.shape()
        )));
    }
    let data = upstream
        .data()
        .iter()
        .zip(input.data())
        .map(|(&g, &x)| if (lo..=hi).contains(&x) { g } else { 0.0 })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

pub fn clipped_relu_backward(upstream: &Tensor, input: &Tensor) -> Result<Tensor> {
    interval_mask_backward(upstream, input, 0.0, 1.0)
}

pub fn clip_pm1_backward(upstream: &Tensor, input: &Tensor) -> Result<Tensor> {
    interval_mask_backward(upstream, input, -1.0, 1.0)
}
