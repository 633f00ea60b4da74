//! Network execution in three modes.
//!
//! * [`Mode::Float`] ignores every precision field and runs in binary64.
//! * [`Mode::FakeQuant`] quantizes each compute layer's master weights on
//!   read and every `quant_activation` output; the network input is
//!   quantized to `input_bits`. This is the training path.
//! * [`Mode::IntegerPath`] runs every convolution and matrix product on
//!   integer codes with an `i64` accumulator and applies `scale_W * scale_A`
//!   once per output. Inference only.
//!
//! Backward passes treat rounding as the identity (straight-through) and
//! return gradients with respect to the master weights.

mod integer;

pub use integer::{accumulator_bounds, check_accumulator_width, forward_integer, ACCUMULATOR_BITS};

use crate::error::{Error, Result};
use crate::model::{widened_channels, Layer, NetworkDescriptor, ParamTensor, Parameters};
use crate::quant::{quantizer_backward, QuantSpec};
use crate::tensor::{
    clipped_relu, conv2d, conv2d_backward, fully_connected, fully_connected_backward, max_pool2d,
    max_pool2d_backward, Tensor,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Float,
    FakeQuant,
    IntegerPath,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "float" => Ok(Mode::Float),
            "fakequant" | "fake-quant" | "fake_quant" => Ok(Mode::FakeQuant),
            "integer" | "integer-path" | "integer_path" => Ok(Mode::IntegerPath),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected float, fakequant or integer)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
enum Step {
    Conv {
        layer: usize,
        input: Tensor,
        weights: Tensor,
        stride: usize,
        padding: usize,
        /// Master weights seen through the weight quantizer's STE mask.
        ste: Option<Tensor>,
    },
    FullyConnected {
        layer: usize,
        input: Tensor,
        weights: Tensor,
        ste: Option<Tensor>,
    },
    Pool {
        argmax: Vec<usize>,
        input_shape: Vec<usize>,
    },
    Activation {
        pre: Tensor,
    },
    Reshape {
        input_shape: Vec<usize>,
    },
}

/// Intermediate values kept by a recorded forward pass for backward.
#[derive(Debug, Clone)]
pub struct ActivationRecord {
    mode: Mode,
    steps: Vec<Step>,
    logits_shape: Vec<usize>,
    out_shape: Vec<usize>,
}

impl ActivationRecord {
    pub fn mode(&self) -> Mode {
        self.mode
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Tensor,
    pub record: Option<ActivationRecord>,
}

pub(crate) fn check_input(net: &NetworkDescriptor, input: &Tensor) -> Result<()> {
    let [_, c, h, w] = input.dims4("network input")?;
    if [c, h, w] != net.input_shape {
        return Err(Error::Dimension(format!(
            "input samples are {:?}, descriptor expects {:?}",
            [c, h, w],
            net.input_shape
        )));
    }
    Ok(())
}

/// Master weights of compute layer `index`, checked against the layer's
/// output width and kernel.
pub(crate) fn layer_weights<'a>(net: &NetworkDescriptor, params: &'a Parameters, index: usize) -> Result<&'a Tensor> {
    let w = params
        .get(index)
        .ok_or_else(|| Error::Dimension(format!("no parameters for layer {index}")))?;
    let layer = &net.layers[index];
    let (base, role) = (layer.base_channels_out(), layer.role());
    if let (Some(base), Some(role)) = (base, role) {
        let cout = widened_channels(base, net.widening, role);
        if w.shape()[0] != cout {
            return Err(Error::Dimension(format!(
                "layer {index} has {} output channels in its parameters, descriptor says {cout}",
                w.shape()[0]
            )));
        }
    }
    match (layer, w.shape()) {
        (Layer::Conv { kernel, .. }, &[_, _, kh, kw]) if kh == *kernel && kw == *kernel => Ok(w),
        (Layer::FullyConnected { .. }, &[_, _]) => Ok(w),
        (_, s) => Err(Error::Dimension(format!(
            "layer {index} ({}) cannot use parameters of shape {s:?}",
            layer.kind_name()
        ))),
    }
}

fn finish_logits(net: &NetworkDescriptor, x: Tensor) -> Result<Tensor> {
    let n = x.batch();
    let per = x.row_len();
    if per != net.class_count {
        return Err(Error::Dimension(format!(
            "network produces {per} logits per sample, class_count is {}",
            net.class_count
        )));
    }
    x.reshape(vec![n, per])
}

fn float_forward(net: &NetworkDescriptor, params: &Parameters, input: &Tensor, mode: Mode, record: bool) -> Result<ForwardOutput> {
    check_input(net, input)?;
    let quantize = mode == Mode::FakeQuant;
    let mut x = if quantize {
        QuantSpec::activation(net.input_bits)?.quantize(input)
    } else {
        input.clone()
    };
    let mut steps = Vec::new();
    for (index, layer) in net.layers.iter().enumerate() {
        x = match layer {
            Layer::Conv {
                stride,
                padding,
                weight_bits,
                ..
            } => {
                let master = layer_weights(net, params, index)?;
                let spec = QuantSpec::weight(*weight_bits)?;
                let weights = if quantize { spec.quantize(master) } else { master.clone() };
                let y = conv2d(&x, &weights, *stride, *padding)?;
                if record {
                    let ste = (quantize && !spec.is_full_precision()).then(|| master.clone());
                    steps.push(Step::Conv {
                        layer: index,
                        input: x,
                        weights,
                        stride: *stride,
                        padding: *padding,
                        ste,
                    });
                }
                y
            }
            Layer::FullyConnected { weight_bits, .. } => {
                let master = layer_weights(net, params, index)?;
                let spec = QuantSpec::weight(*weight_bits)?;
                let weights = if quantize { spec.quantize(master) } else { master.clone() };
                let y = fully_connected(&x, &weights)?;
                if record {
                    let ste = (quantize && !spec.is_full_precision()).then(|| master.clone());
                    steps.push(Step::FullyConnected {
                        layer: index,
                        input: x,
                        weights,
                        ste,
                    });
                }
                y
            }
            Layer::MaxPool { kernel, stride } => {
                let p = max_pool2d(&x, *kernel, *stride)?;
                if record {
                    steps.push(Step::Pool {
                        argmax: p.argmax,
                        input_shape: x.shape().to_vec(),
                    });
                }
                p.output
            }
            Layer::QuantActivation { bits } => {
                let spec = QuantSpec::activation(*bits)?;
                let y = clipped_relu(&x);
                let y = if quantize { spec.quantize(&y) } else { y };
                if record {
                    steps.push(Step::Activation { pre: x });
                }
                y
            }
            Layer::Flatten | Layer::Output => {
                let shape = x.shape().to_vec();
                let y = x.reshape(vec![shape[0], shape[1..].iter().product()])?;
                if record {
                    steps.push(Step::Reshape { input_shape: shape });
                }
                y
            }
        };
    }
    let out_shape = x.shape().to_vec();
    let logits = finish_logits(net, x)?;
    let record = record.then(|| ActivationRecord {
        mode,
        steps,
        logits_shape: logits.shape().to_vec(),
        out_shape,
    });
    Ok(ForwardOutput { logits, record })
}

/// Logits for `input` (`N x C x H x W`). No activation record is kept.
pub fn forward(net: &NetworkDescriptor, params: &Parameters, input: &Tensor, mode: Mode) -> Result<ForwardOutput> {
    match mode {
        Mode::Float | Mode::FakeQuant => float_forward(net, params, input, mode, false),
        Mode::IntegerPath => Ok(ForwardOutput {
            logits: forward_integer(net, params, input)?,
            record: None,
        }),
    }
}

/// Forward pass that keeps what [`backward`] needs. Float and FakeQuant only.
pub fn forward_recorded(net: &NetworkDescriptor, params: &Parameters, input: &Tensor, mode: Mode) -> Result<ForwardOutput> {
    if mode == Mode::IntegerPath {
        return Err(Error::Usage("the integer path is inference-only and cannot be recorded".into()));
    }
    float_forward(net, params, input, mode, true)
}

/// Gradients of the loss with respect to every compute layer's master
/// weights, given d loss / d logits.
pub fn backward(output: &ForwardOutput, logits_grad: &Tensor) -> Result<Parameters> {
    let record = output
        .record
        .as_ref()
        .ok_or_else(|| Error::Usage("backward needs a forward pass run with recording".into()))?;
    if logits_grad.shape() != record.logits_shape {
        return Err(Error::Dimension(format!(
            "logits gradient has shape {:?}, logits are {:?}",
            logits_grad.shape(),
            record.logits_shape
        )));
    }
    let mut g = logits_grad.clone().reshape(record.out_shape.clone())?;
    let mut grads = Vec::new();
    let weight_ste = |gw: Tensor, ste: &Option<Tensor>| -> Result<Tensor> {
        match ste {
            Some(master) => quantizer_backward(&gw, master, (-1.0, 1.0)),
            None => Ok(gw),
        }
    };
    for (pos, step) in record.steps.iter().enumerate().rev() {
        let first = pos == 0;
        g = match step {
            Step::Conv {
                layer,
                input,
                weights,
                stride,
                padding,
                ste,
            } => {
                let (gx, gw) = conv2d_backward(&g, input, weights, *stride, *padding)?;
                grads.push(ParamTensor {
                    layer: *layer,
                    value: weight_ste(gw, ste)?,
                });
                if first {
                    break;
                }
                gx
            }
            Step::FullyConnected {
                layer,
                input,
                weights,
                ste,
            } => {
                let (gx, gw) = fully_connected_backward(&g, input, weights)?;
                grads.push(ParamTensor {
                    layer: *layer,
                    value: weight_ste(gw, ste)?,
                });
                gx
            }
            Step::Pool { argmax, input_shape } => max_pool2d_backward(&g, argmax, input_shape)?,
            Step::Activation { pre } => quantizer_backward(&g, pre, (0.0, 1.0))?,
            Step::Reshape { input_shape } => g.reshape(input_shape.clone())?,
        };
    }
    grads.reverse();
    Ok(Parameters { tensors: grads })
}

/// Index of the predicted class for every row of `logits`; ties go to the
/// lowest index.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let c = logits.row_len();
    logits
        .data()
        .chunks(c)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}
