//! Network descriptors, the filter-widening transform, parameter
//! initialization and checkpoint files.
//!
//! A descriptor is a sequential list of layers. Compute layers (`conv`,
//! `fully_connected`) carry their *base* output width; the effective width is
//! `max(1, round(base * widening))` unless the layer is tagged
//! `output_adjacent`, whose width is pinned to the class count.
//!
//! Precision lives in two places: compute layers carry `weight_bits`, and
//! `quant_activation` layers (clipped ReLU followed by the activation
//! quantizer) carry `bits`. The activation precision a compute layer
//! consumes is that of the nearest preceding `quant_activation`, or
//! `input_bits` when it reads the network input directly.

mod checkpoint;
mod library;
mod params;

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use library::{builtin, builtin_names};
pub use params::{init_parameters, ParamTensor, Parameters};

use crate::error::{Error, Result};
use crate::quant::{QuantSpec, FULL_PRECISION_BITS};
use crate::tensor::conv_output_extent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Reads the network input; its input width is fixed by the data.
    InputAdjacent,
    #[default]
    Internal,
    /// Produces the logits; its output width is fixed by the class count.
    OutputAdjacent,
}

fn one() -> usize {
    1
}

fn full_precision() -> u32 {
    FULL_PRECISION_BITS
}

fn default_input_bits() -> u32 {
    8
}

fn unit_widening() -> f64 {
    1.0
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Layer {
    Conv {
        channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
        #[serde(default = "full_precision")]
        weight_bits: u32,
        #[serde(default, skip_serializing_if = "is_default")]
        role: Role,
    },
    FullyConnected {
        features: usize,
        #[serde(default = "full_precision")]
        weight_bits: u32,
        #[serde(default, skip_serializing_if = "is_default")]
        role: Role,
    },
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    /// Clipped ReLU to `[0, 1]` followed by the `bits`-bit activation quantizer.
    QuantActivation {
        #[serde(default = "full_precision")]
        bits: u32,
    },
    Flatten,
    /// Terminal marker: the incoming features are the logits.
    Output,
}

impl Layer {
    pub fn is_compute(&self) -> bool {
        matches!(self, Layer::Conv { .. } | Layer::FullyConnected { .. })
    }

    pub fn role(&self) -> Option<Role> {
        match self {
            Layer::Conv { role, .. } | Layer::FullyConnected { role, .. } => Some(*role),
            _ => None,
        }
    }

    pub fn weight_spec(&self) -> Option<Result<QuantSpec>> {
        match self {
            Layer::Conv { weight_bits, .. } | Layer::FullyConnected { weight_bits, .. } => {
                Some(QuantSpec::weight(*weight_bits))
            }
            _ => None,
        }
    }

    pub fn activation_spec(&self) -> Option<Result<QuantSpec>> {
        match self {
            Layer::QuantActivation { bits } => Some(QuantSpec::activation(*bits)),
            _ => None,
        }
    }

    /// Base output width of a compute layer.
    pub fn base_channels_out(&self) -> Option<usize> {
        match self {
            Layer::Conv { channels, .. } => Some(*channels),
            Layer::FullyConnected { features, .. } => Some(*features),
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Conv { .. } => "conv",
            Layer::FullyConnected { .. } => "fully_connected",
            Layer::MaxPool { .. } => "max_pool",
            Layer::QuantActivation { .. } => "quant_activation",
            Layer::Flatten => "flatten",
            Layer::Output => "output",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDescriptor {
    pub name: String,
    /// Free-form provenance, e.g. which published variant a topology follows.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub notes: String,
    /// Per-sample input extents `C x H x W`.
    pub input_shape: [usize; 3],
    /// Precision of the input operands of the first compute layer.
    #[serde(default = "default_input_bits")]
    pub input_bits: u32,
    pub class_count: usize,
    /// Filter-count multiplier applied to every non-output compute layer.
    #[serde(default = "unit_widening")]
    pub widening: f64,
    pub layers: Vec<Layer>,
}

/// Shapes of one layer after widening, per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedLayer {
    pub index: usize,
    /// `[C, H, W]` for feature maps, `[D]` for flat features.
    pub input: Vec<usize>,
    pub output: Vec<usize>,
    /// Weight tensor shape for compute layers.
    pub param_shape: Option<Vec<usize>>,
}

impl ResolvedLayer {
    pub fn input_elements(&self) -> usize {
        self.input.iter().product()
    }

    pub fn output_elements(&self) -> usize {
        self.output.iter().product()
    }

    pub fn param_count(&self) -> usize {
        self.param_shape.as_ref().map_or(0, |s| s.iter().product())
    }

    /// Multiply-accumulates per sample: `Hout*Wout*Cout*(Kh*Kw*Cin)` for a
    /// convolution, `Dout*Din` for a fully-connected layer, zero otherwise.
    pub fn fmas(&self) -> u64 {
        match (&self.param_shape, &self.output[..]) {
            (Some(p), [_, h, w]) => (h * w) as u64 * p.iter().product::<usize>() as u64,
            (Some(p), [_]) => p.iter().product::<usize>() as u64,
            _ => 0,
        }
    }
}

/// Effective output width of a compute layer under a widening multiplier.
pub fn widened_channels(base: usize, widening: f64, role: Role) -> usize {
    if role == Role::OutputAdjacent {
        return base;
    }
    ((base as f64 * widening).round() as usize).max(1)
}

impl NetworkDescriptor {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("descriptor serializes")
    }

    /// Reads a descriptor file; a bare built-in name (`alexnet`,
    /// `resnet34`, ...) is accepted when no such file exists.
    pub fn load(path: &Path) -> Result<Self> {
        match std::fs::read_to_string(path) {
            Ok(text) => Self::from_json(&text),
            Err(e) => {
                if let Some(net) = path.to_str().and_then(builtin) {
                    return Ok(net);
                }
                Err(Error::io(path, e))
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_pretty() + "\n").map_err(|e| Error::io(path, e))
    }

    /// SHA-256 of the canonical (compact) JSON serialization.
    pub fn hash(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("descriptor serializes");
        Sha256::digest(&bytes).into()
    }

    pub fn compute_layer_indices(&self) -> Vec<usize> {
        (0..self.layers.len()).filter(|&i| self.layers[i].is_compute()).collect()
    }

    fn check_widening(&self) -> Result<()> {
        if !(self.widening.is_finite() && self.widening > 0.0) {
            return Err(Error::Config(format!(
                "widening multiplier must be positive and finite, got {}",
                self.widening
            )));
        }
        Ok(())
    }

    /// Propagates per-sample shapes through every layer. Checks only what a
    /// forward pass needs; see [`validate`](Self::validate) for the full set
    /// of descriptor invariants.
    pub fn resolve_shapes(&self) -> Result<Vec<ResolvedLayer>> {
        self.check_widening()?;
        if self.input_shape.contains(&0) {
            return Err(Error::Config(format!(
                "input extents must be >= 1, got {:?}",
                self.input_shape
            )));
        }
        let mut current = self.input_shape.to_vec();
        let mut out = Vec::with_capacity(self.layers.len());
        for (index, layer) in self.layers.iter().enumerate() {
            let input = current.clone();
            let map = |what: &str| -> Result<[usize; 3]> {
                match input[..] {
                    [c, h, w] => Ok([c, h, w]),
                    _ => Err(Error::Dimension(format!(
                        "layer {index} ({what}) needs a C x H x W feature map, got {input:?}"
                    ))),
                }
            };
            let (output, param_shape) = match layer {
                Layer::Conv {
                    channels,
                    kernel,
                    stride,
                    padding,
                    role,
                    ..
                } => {
                    let [c, h, w] = map("conv")?;
                    if *channels == 0 {
                        return Err(Error::Config(format!("layer {index}: conv needs >= 1 channel")));
                    }
                    let cout = widened_channels(*channels, self.widening, *role);
                    let oh = conv_output_extent(h, *kernel, *stride, *padding)
                        .map_err(|e| Error::Config(format!("layer {index}: {e}")))?;
                    let ow = conv_output_extent(w, *kernel, *stride, *padding)
                        .map_err(|e| Error::Config(format!("layer {index}: {e}")))?;
                    (vec![cout, oh, ow], Some(vec![cout, c, *kernel, *kernel]))
                }
                Layer::FullyConnected { features, role, .. } => {
                    if *features == 0 {
                        return Err(Error::Config(format!(
                            "layer {index}: fully-connected needs >= 1 feature"
                        )));
                    }
                    let dout = widened_channels(*features, self.widening, *role);
                    let din = input.iter().product();
                    (vec![dout], Some(vec![dout, din]))
                }
                Layer::MaxPool { kernel, stride } => {
                    let [c, h, w] = map("max_pool")?;
                    let oh = conv_output_extent(h, *kernel, *stride, 0)
                        .map_err(|e| Error::Config(format!("layer {index}: {e}")))?;
                    let ow = conv_output_extent(w, *kernel, *stride, 0)
                        .map_err(|e| Error::Config(format!("layer {index}: {e}")))?;
                    (vec![c, oh, ow], None)
                }
                Layer::QuantActivation { bits } => {
                    QuantSpec::activation(*bits)?;
                    (input.clone(), None)
                }
                Layer::Flatten => (vec![input.iter().product()], None),
                Layer::Output => {
                    if index + 1 != self.layers.len() {
                        return Err(Error::Config(format!(
                            "layer {index}: output marker must be the last layer"
                        )));
                    }
                    (vec![input.iter().product()], None)
                }
            };
            if let Some(spec) = layer.weight_spec() {
                spec?;
            }
            current = output.clone();
            out.push(ResolvedLayer {
                index,
                input,
                output,
                param_shape,
            });
        }
        Ok(out)
    }

    /// Full descriptor check: shapes resolve, the final features match the
    /// class count, precisions are valid and role tags sit where they
    /// belong.
    pub fn validate(&self) -> Result<Vec<ResolvedLayer>> {
        if self.class_count == 0 {
            return Err(Error::Config("class_count must be >= 1".into()));
        }
        QuantSpec::activation(self.input_bits)?;
        let resolved = self.resolve_shapes()?;
        let final_elems: usize = resolved
            .last()
            .map_or(self.input_shape.iter().product(), |r| r.output_elements());
        if final_elems != self.class_count {
            return Err(Error::Dimension(format!(
                "network produces {final_elems} logits but class_count is {}",
                self.class_count
            )));
        }
        let compute = self.compute_layer_indices();
        for (pos, &i) in compute.iter().enumerate() {
            match self.layers[i].role() {
                Some(Role::InputAdjacent) if pos != 0 => {
                    return Err(Error::Config(format!(
                        "layer {i} is tagged input_adjacent but is not the first compute layer"
                    )))
                }
                Some(Role::OutputAdjacent) if pos + 1 != compute.len() => {
                    return Err(Error::Config(format!(
                        "layer {i} is tagged output_adjacent but is not the last compute layer"
                    )))
                }
                _ => {}
            }
        }
        Ok(resolved)
    }

    /// Bit-width of the activation operands consumed by layer `index`:
    /// the nearest preceding `quant_activation`, the network input, or
    /// full precision when another compute layer feeds it unquantized.
    pub fn input_operand_bits(&self, index: usize) -> u32 {
        for layer in self.layers[..index].iter().rev() {
            match layer {
                Layer::QuantActivation { bits } => return *bits,
                Layer::Conv { .. } | Layer::FullyConnected { .. } => return FULL_PRECISION_BITS,
                _ => {}
            }
        }
        self.input_bits
    }

    /// Sets the weight precision of compute layer `index` and/or the
    /// precision of the activation operands it consumes.
    pub fn set_layer_precision(&mut self, index: usize, weight_bits: Option<u32>, activation_bits: Option<u32>) -> Result<()> {
        match self.layers.get_mut(index) {
            Some(Layer::Conv { weight_bits: w, .. }) | Some(Layer::FullyConnected { weight_bits: w, .. }) => {
                if let Some(k) = weight_bits {
                    QuantSpec::weight(k)?;
                    *w = k;
                }
            }
            _ => {
                return Err(Error::Config(format!("layer {index} is not a compute layer")));
            }
        }
        let Some(k) = activation_bits else {
            return Ok(());
        };
        QuantSpec::activation(k)?;
        for j in (0..index).rev() {
            match &mut self.layers[j] {
                Layer::QuantActivation { bits } => {
                    *bits = k;
                    return Ok(());
                }
                Layer::Conv { .. } | Layer::FullyConnected { .. } => {
                    return Err(Error::Config(format!(
                        "layer {index} reads layer {j} without an activation quantizer in between"
                    )));
                }
                _ => {}
            }
        }
        self.input_bits = k;
        Ok(())
    }

    /// Applies one `(k_W, k_A)` pair to every compute layer.
    pub fn with_uniform_precision(&self, weight_bits: u32, activation_bits: u32) -> Result<Self> {
        let mut net = self.clone();
        for i in self.compute_layer_indices() {
            net.set_layer_precision(i, Some(weight_bits), Some(activation_bits))?;
        }
        Ok(net)
    }

    /// Returns a copy whose compute layers have their filter counts
    /// multiplied by `m` (on top of any existing widening).
    pub fn widen(&self, m: f64) -> Result<Self> {
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::Config(format!(
                "widening multiplier must be positive and finite, got {m}"
            )));
        }
        let mut net = self.clone();
        net.widening = self.widening * m;
        net.resolve_shapes()?;
        Ok(net)
    }

    /// Effective output widths of the compute layers, in order.
    pub fn effective_widths(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| {
                let base = l.base_channels_out()?;
                Some(widened_channels(base, self.widening, l.role()?))
            })
            .collect()
    }
}

/// Parses a widening multiplier written as a decimal (`1.5`) or a ratio
/// (`3/2`).
pub fn parse_multiplier(text: &str) -> Result<f64> {
    let bad = || Error::Config(format!("cannot parse widening multiplier '{text}'"));
    let value = match text.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            a / b
        }
        None => text.trim().parse().map_err(|_| bad())?,
    };
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::Config(format!("widening multiplier must be positive, got '{text}'")));
    }
    Ok(value)
}
