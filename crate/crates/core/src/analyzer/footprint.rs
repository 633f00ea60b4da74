use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Layer, NetworkDescriptor};
use crate::quant::{QuantSpec, FULL_PRECISION_BITS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Every activation map is kept for the backward pass.
    Training,
    /// Only a layer's input and output are live at once.
    Inference,
}

impl std::str::FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "training" | "train" => Ok(Phase::Training),
            "inference" | "infer" => Ok(Phase::Inference),
            other => Err(Error::Config(format!(
                "unknown phase '{other}' (expected training or inference)"
            ))),
        }
    }
}

/// Uniform precisions that replace the descriptor's own, per operand kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PrecisionOverride {
    pub weight_bits: Option<u32>,
    pub activation_bits: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerFootprint {
    pub index: usize,
    pub kind: &'static str,
    /// Per-sample elements of the layer's output map.
    pub output_elements: u64,
    pub activation_bits: u32,
    /// Training: bytes of this layer's stored output for the whole batch.
    /// Inference: bytes of its input plus output for the whole batch.
    /// Zero for layers that only relabel their input (flatten, output).
    pub activation_bytes: u64,
    pub weight_elements: u64,
    pub weight_bits: u32,
    pub weight_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FootprintReport {
    pub network: String,
    pub phase: Phase,
    pub batch: u64,
    pub weight_bytes: u64,
    pub activation_bytes: u64,
    /// Per-sample elements and precision of the network input map.
    pub input_elements: u64,
    pub input_bits: u32,
    /// Training: the input map, kept for the first layer's weight gradient.
    /// Inference: zero, since the first layer's entry already counts it.
    pub input_bytes: u64,
    pub layers: Vec<LayerFootprint>,
}

/// Bytes of one tensor of `elements` values at `bits` each, rounded up.
pub fn tensor_bytes(elements: u64, bits: u32) -> u64 {
    (elements * bits as u64).div_ceil(8)
}

/// Weight and activation memory of `net` at `batch`.
///
/// Training keeps the input map and every layer output; inference keeps
/// the largest input-plus-output pair of a single layer.
///
/// Precision of each activation map: a `quant_activation` output uses its
/// `bits`; a pooling output keeps its input's precision; a raw convolution
/// or fully-connected output is full precision; the network input uses
/// `input_bits`. `over` replaces these with a uniform value. Activation
/// tensors are sized per sample and then multiplied by the batch, so the
/// result is exactly linear in `batch`.
pub fn memory_footprint(net: &NetworkDescriptor, batch: u64, phase: Phase, over: PrecisionOverride) -> Result<FootprintReport> {
    if batch == 0 {
        return Err(Error::Config("batch must be >= 1".into()));
    }
    if let Some(k) = over.weight_bits {
        QuantSpec::weight(k)?;
    }
    if let Some(k) = over.activation_bits {
        QuantSpec::activation(k)?;
    }
    let resolved = net.resolve_shapes()?;
    let input_bits = over.activation_bits.unwrap_or(net.input_bits);
    let input_elements: u64 = net.input_shape.iter().product::<usize>() as u64;
    let input_bytes = match phase {
        Phase::Training => batch * tensor_bytes(input_elements, input_bits),
        Phase::Inference => 0,
    };
    let mut current_bits = input_bits;
    let mut current_elems = input_elements;
    let mut layers = Vec::with_capacity(resolved.len());
    for r in &resolved {
        let layer = &net.layers[r.index];
        let out_elems = r.output_elements() as u64;
        let natural = match layer {
            Layer::Conv { .. } | Layer::FullyConnected { .. } => FULL_PRECISION_BITS,
            Layer::QuantActivation { bits } => *bits,
            Layer::MaxPool { .. } | Layer::Flatten | Layer::Output => current_bits,
        };
        let out_bits = over.activation_bits.unwrap_or(natural);
        let view = matches!(layer, Layer::Flatten | Layer::Output);
        let per_sample = match (view, phase) {
            (true, _) => 0,
            (false, Phase::Training) => tensor_bytes(out_elems, out_bits),
            (false, Phase::Inference) => tensor_bytes(current_elems, current_bits) + tensor_bytes(out_elems, out_bits),
        };
        let weight_elements = r.param_count() as u64;
        let weight_bits = match layer.weight_spec() {
            Some(spec) => over.weight_bits.unwrap_or(spec?.bits()),
            None => 0,
        };
        layers.push(LayerFootprint {
            index: r.index,
            kind: layer.kind_name(),
            output_elements: out_elems,
            activation_bits: out_bits,
            activation_bytes: batch * per_sample,
            weight_elements,
            weight_bits,
            weight_bytes: tensor_bytes(weight_elements, weight_bits),
        });
        current_bits = out_bits;
        current_elems = out_elems;
    }
    let activation_bytes = match phase {
        Phase::Training => input_bytes + layers.iter().map(|l| l.activation_bytes).sum::<u64>(),
        Phase::Inference => layers
            .iter()
            .map(|l| l.activation_bytes)
            .max()
            .unwrap_or(batch * tensor_bytes(input_elements, input_bits)),
    };
    Ok(FootprintReport {
        network: net.name.clone(),
        phase,
        batch,
        weight_bytes: layers.iter().map(|l| l.weight_bytes).sum(),
        activation_bytes,
        input_elements,
        input_bits,
        input_bytes,
        layers,
    })
}

pub const FOOTPRINT_CSV_HEADER: &str =
    "index,kind,output_elements,activation_bits,activation_bytes,weight_elements,weight_bits,weight_bytes";

impl FootprintReport {
    /// An `input` row, one row per layer, then a `total` row holding the
    /// report totals.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(FOOTPRINT_CSV_HEADER);
        s.push('\n');
        s += &format!(
            "input,input,{},{},{},0,0,0\n",
            self.input_elements, self.input_bits, self.input_bytes
        );
        for l in &self.layers {
            s += &format!(
                "{},{},{},{},{},{},{},{}\n",
                l.index,
                l.kind,
                l.output_elements,
                l.activation_bits,
                l.activation_bytes,
                l.weight_elements,
                l.weight_bits,
                l.weight_bytes
            );
        }
        s += &format!("total,,,,{},,,{}\n", self.activation_bytes, self.weight_bytes);
        s
    }
}
