use super::{conv_output_extent, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PoolOutput {
    pub output: Tensor,
    /// Flat input index of the winning element for every output element.
    pub argmax: Vec<usize>,
}

/// Max pooling over `window x window` patches, no padding. Ties resolve to
/// the first element in row-major scan order.
pub fn max_pool2d(input: &Tensor, window: usize, stride: usize) -> Result<PoolOutput> {
    let [n, c, h, w] = input.dims4("max_pool2d input")?;
    let oh = conv_output_extent(h, window, stride, 0)?;
    let ow = conv_output_extent(w, window, stride, 0)?;
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..oh {
            for z in 0..ow {
                let mut best = base + (y * stride) * w + z * stride;
                for i in 0..window {
                    let row = base + (y * stride + i) * w + z * stride;
                    for idx in row..row + window {
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok(PoolOutput {
        output: Tensor::new(vec![n, c, oh, ow], out)?,
        argmax,
    })
}

/// Routes each output gradient to the input element that won the max.
pub fn max_pool2d_backward(output_grad: &Tensor, argmax: &[usize], input_shape: &[usize]) -> Result<Tensor> {
    if output_grad.len() != argmax.len() {
        return Err(Error::Dimension(format!(
            "pool gradient has {} elements, argmax record has {}",
            output_grad.len(),
            argmax.len()
        )));
    }
    let mut dx = Tensor::zeros(input_shape);
    let len = dx.len();
    let d = dx.data_mut();
    for (&g, &idx) in output_grad.data().iter().zip(argmax) {
        if idx >= len {
            return Err(Error::Dimension(format!(
                "argmax index {idx} outside input of {len} elements"
            )));
        }
        d[idx] += g;
    }
    Ok(dx)
}
