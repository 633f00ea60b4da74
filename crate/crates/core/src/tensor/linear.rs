use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// `out[n, o] = sum_i x[n, i] * w[o, i]`, summed in ascending `i`.
pub(crate) fn matmul_nt_raw<T: Scalar>(x: &[T], w: &[T], rows: usize, inner: usize, outs: usize) -> Vec<T> {
    let mut out = vec![T::default(); rows * outs];
    for n in 0..rows {
        let xr = &x[n * inner..(n + 1) * inner];
        for o in 0..outs {
            let wr = &w[o * inner..(o + 1) * inner];
            let mut acc = T::default();
            for (&a, &b) in xr.iter().zip(wr) {
                acc += a * b;
            }
            out[n * outs + o] = acc;
        }
    }
    out
}

fn fc_dims(input: &Tensor, weights: &Tensor) -> Result<(usize, usize, usize)> {
    let (outs, inner) = match weights.shape() {
        &[o, i] => (o, i),
        s => {
            return Err(Error::Dimension(format!(
                "fully-connected weights must be rank 2, got {s:?}"
            )))
        }
    };
    if input.rank() < 2 {
        return Err(Error::Dimension(format!(
            "fully-connected input needs a batch axis, got {:?}",
            input.shape()
        )));
    }
    if input.row_len() != inner {
        return Err(Error::Dimension(format!(
            "fully-connected input has {} features per sample, weights expect {inner}",
            input.row_len()
        )));
    }
    Ok((input.batch(), inner, outs))
}

/// Matrix product of a batch with a `Dout x Din` weight matrix. Inputs of
/// rank > 2 are read as `N x (everything else)`.
pub fn fully_connected(input: &Tensor, weights: &Tensor) -> Result<Tensor> {
    let (rows, inner, outs) = fc_dims(input, weights)?;
    let out = matmul_nt_raw(input.data(), weights.data(), rows, inner, outs);
    Tensor::new(vec![rows, outs], out)
}

/// Returns `(input_grad, weight_grad)`; `input_grad` keeps the input's shape.
pub fn fully_connected_backward(output_grad: &Tensor, input: &Tensor, weights: &Tensor) -> Result<(Tensor, Tensor)> {
    let (rows, inner, outs) = fc_dims(input, weights)?;
    if output_grad.shape() != [rows, outs] {
        return Err(Error::Dimension(format!(
            "fully-connected output gradient has shape {:?}, expected [{rows}, {outs}]",
            output_grad.shape()
        )));
    }
    let x = input.data();
    let w = weights.data();
    let dy = output_grad.data();
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    for n in 0..rows {
        let xr = &x[n * inner..(n + 1) * inner];
        let dxr = &mut dx[n * inner..(n + 1) * inner];
        for o in 0..outs {
            let g = dy[n * outs + o];
            let wr = &w[o * inner..(o + 1) * inner];
            let dwr = &mut dw[o * inner..(o + 1) * inner];
            for i in 0..inner {
                dxr[i] += g * wr[i];
                dwr[i] += g * xr[i];
            }
        }
    }
    Ok((
        Tensor::new(input.shape().to_vec(), dx)?,
        Tensor::new(weights.shape().to_vec(), dw)?,
    ))
}
