//! Integer-only inference.
//!
//! Feature maps between layers are integer activation codes with one scale.
//! Each convolution or matrix product multiplies weight codes by activation
//! codes into an `i64` accumulator; the accumulator is converted to a real
//! value by a single multiply with `scale_W * scale_A`. The next
//! `quant_activation` clips and rounds that value back to codes.

use super::{check_input, finish_logits, layer_weights};
use crate::error::{Error, Result};
use crate::model::{Layer, NetworkDescriptor, Parameters};
use crate::quant::{to_codes, QuantSpec};
use crate::tensor::{clipped_relu, conv2d_raw, matmul_nt_raw, max_pool2d, ConvGeometry, Tensor};

/// Width of the signed accumulator used for every dot product.
pub const ACCUMULATOR_BITS: u32 = 64;

/// Widest operand the integer path accepts.
const MAX_INTEGER_BITS: u32 = 16;

/// Worst-case `|accumulator|` of every compute layer:
/// `max|w code| * max a code * fan_in`. Returned as `(layer index, bound)`.
pub fn accumulator_bounds(net: &NetworkDescriptor) -> Result<Vec<(usize, u128)>> {
    let mut out = Vec::new();
    for r in net.resolve_shapes()? {
        let Some(shape) = &r.param_shape else {
            continue;
        };
        let layer = &net.layers[r.index];
        let w = layer.weight_spec().expect("compute layer")?;
        let a = QuantSpec::activation(net.input_operand_bits(r.index))?;
        let (Some(wmax), Some(amax)) = (w.max_code(), a.max_code()) else {
            return Err(Error::Config(format!(
                "layer {} has a full-precision operand and no integer bound",
                r.index
            )));
        };
        let fan_in: usize = shape[1..].iter().product();
        out.push((r.index, wmax as u128 * amax as u128 * fan_in as u128));
    }
    Ok(out)
}

/// Checks that a signed accumulator of `width` bits holds every possible dot
/// product of `net`, i.e. `bound < 2^(width-1)` for each compute layer.
pub fn check_accumulator_width(net: &NetworkDescriptor, width: u32) -> Result<()> {
    for (index, bound) in accumulator_bounds(net)? {
        let bits_needed = 128 - bound.leading_zeros() + 1;
        if bits_needed > width {
            return Err(Error::Invariant(format!(
                "layer {index} can accumulate up to {bound}, which needs {bits_needed} signed bits; accumulator has {width}"
            )));
        }
    }
    Ok(())
}

/// A feature map in flight: integer codes with a common scale, or real
/// values straight out of a compute layer.
enum Value {
    Codes {
        shape: Vec<usize>,
        codes: Vec<i64>,
        scale: f64,
    },
    Real(Tensor),
}

impl Value {
    fn shape(&self) -> &[usize] {
        match self {
            Value::Codes { shape, .. } => shape,
            Value::Real(t) => t.shape(),
        }
    }

    fn into_real(self) -> Result<Tensor> {
        match self {
            Value::Codes { shape, codes, scale } => {
                Tensor::new(shape, codes.into_iter().map(|c| c as f64 * scale).collect())
            }
            Value::Real(t) => Ok(t),
        }
    }

    fn reshape(self, shape: Vec<usize>) -> Result<Value> {
        Ok(match self {
            Value::Codes { codes, scale, .. } => Value::Codes { shape, codes, scale },
            Value::Real(t) => Value::Real(t.reshape(shape)?),
        })
    }
}

fn activation_codes(t: &Tensor, bits: u32) -> Result<Value> {
    let q = to_codes(&clipped_relu(t), QuantSpec::activation(bits)?)?;
    let scale = q.scale().expect("k <= 16 has codes");
    let codes = q.codes().expect("k <= 16 has codes").to_vec();
    Ok(Value::Codes {
        shape: q.shape,
        codes,
        scale,
    })
}

fn check_bits(index: usize, what: &str, bits: u32) -> Result<()> {
    if bits > MAX_INTEGER_BITS {
        return Err(Error::Config(format!(
            "layer {index}: the integer path needs {what} of at most {MAX_INTEGER_BITS} bits, got {bits}"
        )));
    }
    Ok(())
}

/// Logits computed with integer arithmetic only (plus one rescale per
/// compute-layer output). Every compute layer must have quantized weights
/// and read quantized activations.
pub fn forward_integer(net: &NetworkDescriptor, params: &Parameters, input: &Tensor) -> Result<Tensor> {
    check_input(net, input)?;
    check_bits(0, "input activations", net.input_bits)?;
    for i in net.compute_layer_indices() {
        let w = net.layers[i].weight_spec().expect("compute layer")?;
        check_bits(i, "weights", w.bits())?;
        check_bits(i, "input activations", net.input_operand_bits(i))?;
    }
    check_accumulator_width(net, ACCUMULATOR_BITS)?;

    let mut x = activation_codes(input, net.input_bits)?;
    for (index, layer) in net.layers.iter().enumerate() {
        x = match layer {
            Layer::Conv {
                stride,
                padding,
                weight_bits,
                ..
            } => {
                let Value::Codes { shape, codes, scale } = x else {
                    unreachable!("operand precision checked above");
                };
                let w = to_codes(layer_weights(net, params, index)?, QuantSpec::weight(*weight_bits)?)?;
                let dims = |s: &[usize], what: &str| -> Result<[usize; 4]> {
                    s.try_into()
                        .map_err(|_| Error::Dimension(format!("layer {index}: {what} must be rank 4, got {s:?}")))
                };
                let g = ConvGeometry::new(dims(&shape, "input")?, dims(&w.shape, "filters")?, *stride, *padding)?;
                let acc = conv2d_raw(&codes, w.codes().expect("quantized"), &g);
                let rescale = w.scale().expect("quantized") * scale;
                Value::Real(Tensor::new(
                    g.output_shape().to_vec(),
                    acc.into_iter().map(|a| a as f64 * rescale).collect(),
                )?)
            }
            Layer::FullyConnected { weight_bits, .. } => {
                let Value::Codes { shape, codes, scale } = x else {
                    unreachable!("operand precision checked above");
                };
                let w = to_codes(layer_weights(net, params, index)?, QuantSpec::weight(*weight_bits)?)?;
                let rows = shape[0];
                let inner: usize = shape[1..].iter().product();
                let (outs, w_inner) = (w.shape[0], w.shape[1]);
                if w_inner != inner {
                    return Err(Error::Dimension(format!(
                        "layer {index}: input has {inner} features per sample, weights expect {w_inner}"
                    )));
                }
                let acc = matmul_nt_raw(&codes, w.codes().expect("quantized"), rows, inner, outs);
                let rescale = w.scale().expect("quantized") * scale;
                Value::Real(Tensor::new(
                    vec![rows, outs],
                    acc.into_iter().map(|a| a as f64 * rescale).collect(),
                )?)
            }
            Layer::MaxPool { kernel, stride } => match x {
                // Codes share one positive scale, so pooling them is exact.
                Value::Codes { shape, codes, scale } => {
                    let t = Tensor::new(shape, codes.into_iter().map(|c| c as f64).collect())?;
                    let p = max_pool2d(&t, *kernel, *stride)?.output;
                    Value::Codes {
                        shape: p.shape().to_vec(),
                        codes: p.data().iter().map(|&c| c as i64).collect(),
                        scale,
                    }
                }
                Value::Real(t) => Value::Real(max_pool2d(&t, *kernel, *stride)?.output),
            },
            Layer::QuantActivation { bits } if *bits > MAX_INTEGER_BITS => Value::Real(clipped_relu(&x.into_real()?)),
            Layer::QuantActivation { bits } => activation_codes(&x.into_real()?, *bits)?,
            Layer::Flatten | Layer::Output => {
                let shape = x.shape().to_vec();
                x.reshape(vec![shape[0], shape[1..].iter().product()])?
            }
        };
    }
    finish_logits(net, x.into_real()?)
}
