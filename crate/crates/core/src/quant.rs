//! k-bit weight and activation quantizers, their straight-through backward
//! and the integer-code representation used by the integer inference path.
//!
//! Weights are clipped to `[-1, 1]` and mapped to
//! `round((2^(k-1) - 1) * w) / (2^(k-1) - 1)`: one bit carries the sign, so a
//! k-bit weight has `2^k - 1` symmetric levels. Activations are clipped to
//! `[0, 1]` and mapped to `round((2^k - 1) * a) / (2^k - 1)`, giving `2^k`
//! levels. Rounding is half-away-from-zero throughout, which keeps the
//! weight quantizer odd-symmetric.
//!
//! Two modes have no closed form in the level formula and are handled
//! separately:
//! * `k = 32` is full precision and the quantizer is the identity.
//! * `k = 1` weights are binary `{-1, +1}` via `sign(clip(w))` with
//!   `sign(0) = +1` (the level formula would divide by `2^0 - 1 = 0`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Gradient, Tensor};

pub const FULL_PRECISION_BITS: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantKind {
    Weight,
    Activation,
}

/// Precision of one class of tensor values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantSpec {
    bits: u32,
    kind: QuantKind,
}

impl QuantSpec {
    pub fn new(bits: u32, kind: QuantKind) -> Result<Self> {
        if !(1..=FULL_PRECISION_BITS).contains(&bits) {
            return Err(Error::Config(format!(
                "bit-width must be in 1..=32, got {bits}"
            )));
        }
        Ok(QuantSpec { bits, kind })
    }

    pub fn weight(bits: u32) -> Result<Self> {
        Self::new(bits, QuantKind::Weight)
    }

    pub fn activation(bits: u32) -> Result<Self> {
        Self::new(bits, QuantKind::Activation)
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn kind(&self) -> QuantKind {
        self.kind
    }

    pub fn is_full_precision(&self) -> bool {
        self.bits == FULL_PRECISION_BITS
    }

    pub fn is_binary_weight(&self) -> bool {
        self.kind == QuantKind::Weight && self.bits == 1
    }

    /// Clip interval applied before rounding.
    pub fn interval(&self) -> (f64, f64) {
        match self.kind {
            QuantKind::Weight => (-1.0, 1.0),
            QuantKind::Activation => (0.0, 1.0),
        }
    }

    /// Largest code magnitude, `None` at full precision.
    pub fn max_code(&self) -> Option<i64> {
        if self.is_full_precision() {
            return None;
        }
        Some(match self.kind {
            QuantKind::Weight if self.bits == 1 => 1,
            QuantKind::Weight => (1i64 << (self.bits - 1)) - 1,
            QuantKind::Activation => (1i64 << self.bits) - 1,
        })
    }

    /// Integer the clipped value is multiplied by before rounding.
    pub fn denominator(&self) -> Option<f64> {
        self.max_code().map(|c| c as f64)
    }

    /// Value of one code step, `1 / denominator`.
    pub fn scale(&self) -> Option<f64> {
        self.denominator().map(|d| 1.0 / d)
    }

    /// Number of distinct quantized values, `None` at full precision.
    pub fn levels(&self) -> Option<u64> {
        self.max_code().map(|c| match self.kind {
            QuantKind::Weight if self.bits == 1 => 2,
            QuantKind::Weight => 2 * c as u64 + 1,
            QuantKind::Activation => c as u64 + 1,
        })
    }

    /// Quantize one value according to this spec.
    #[inline]
    pub fn quantize_value(&self, x: f64) -> f64 {
        let Some(d) = self.denominator() else {
            return x;
        };
        let (lo, hi) = self.interval();
        let c = x.clamp(lo, hi);
        if self.is_binary_weight() {
            return if c >= 0.0 { 1.0 } else { -1.0 };
        }
        (d * c).round() / d
    }

    pub fn quantize(&self, t: &Tensor) -> Tensor {
        if self.is_full_precision() {
            return t.clone();
        }
        t.map(|x| self.quantize_value(x))
    }
}

/// Weight quantizer: clip to `[-1, 1]`, then `k`-bit symmetric levels.
pub fn quantize_weights(w: &Tensor, k: u32) -> Result<Tensor> {
    Ok(QuantSpec::weight(k)?.quantize(w))
}

/// Activation quantizer: clip to `[0, 1]`, then `2^k` evenly spaced levels.
pub fn quantize_activations(a: &Tensor, k: u32) -> Result<Tensor> {
    Ok(QuantSpec::activation(k)?.quantize(a))
}

/// Denominator choice for the activation quantizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ActivationFormula {
    /// `round((2^k - 1) a) / (2^k - 1)`; stays inside `[0, 1]`.
    #[default]
    Levels,
    /// `round((2^k - 1) a) / 2^(k-1)`. Exceeds 1 for `k >= 2`; kept only
    /// for comparing against that published form.
    Literal,
}

pub fn quantize_activations_with(a: &Tensor, k: u32, formula: ActivationFormula) -> Result<Tensor> {
    let spec = QuantSpec::activation(k)?;
    match formula {
        ActivationFormula::Levels => Ok(spec.quantize(a)),
        ActivationFormula::Literal => {
            if spec.is_full_precision() {
                return Ok(a.clone());
            }
            let num = ((1u64 << k) - 1) as f64;
            let den = (1u64 << (k - 1)) as f64;
            Ok(a.map(|x| (num * x.clamp(0.0, 1.0)).round() / den))
        }
    }
}

/// Straight-through backward: `round` is treated as the identity, so the
/// upstream gradient passes wherever the pre-clip input lies in
/// `[lo, hi]` (end points included) and is zero elsewhere.
pub fn quantizer_backward(upstream: &Gradient, pre_clip_input: &Tensor, interval: (f64, f64)) -> Result<Gradient> {
    crate::tensor::interval_mask_backward(upstream, pre_clip_input, interval.0, interval.1)
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuantizedData {
    Codes { codes: Vec<i64>, scale: f64 },
    /// `k = 32`: values are carried as-is and no codes exist.
    FullPrecision(Vec<f64>),
}

/// Integer codes plus one floating-point scale: `value = code * scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub shape: Vec<usize>,
    pub spec: QuantSpec,
    pub data: QuantizedData,
}

impl QuantizedTensor {
    pub fn codes(&self) -> Option<&[i64]> {
        match &self.data {
            QuantizedData::Codes { codes, .. } => Some(codes),
            QuantizedData::FullPrecision(_) => None,
        }
    }

    pub fn scale(&self) -> Option<f64> {
        match &self.data {
            QuantizedData::Codes { scale, .. } => Some(*scale),
            QuantizedData::FullPrecision(_) => None,
        }
    }
}

/// Quantize `t` (a no-op when it already sits on the levels) and extract its
/// integer codes.
pub fn to_codes(t: &Tensor, spec: QuantSpec) -> Result<QuantizedTensor> {
    let shape = t.shape().to_vec();
    let (Some(max), Some(d), Some(scale)) = (spec.max_code(), spec.denominator(), spec.scale()) else {
        return Ok(QuantizedTensor {
            shape,
            spec,
            data: QuantizedData::FullPrecision(t.data().to_vec()),
        });
    };
    let min = match spec.kind() {
        QuantKind::Weight => -max,
        QuantKind::Activation => 0,
    };
    let codes = t
        .data()
        .iter()
        .map(|&x| {
            let code = (d * spec.quantize_value(x)).round() as i64;
            if code < min || code > max {
                return Err(Error::Invariant(format!(
                    "code {code} outside [{min}, {max}] for {}-bit {:?}",
                    spec.bits(),
                    spec.kind()
                )));
            }
            Ok(code)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantizedTensor {
        shape,
        spec,
        data: QuantizedData::Codes { codes, scale },
    })
}

pub fn from_codes(q: &QuantizedTensor) -> Result<Tensor> {
    let data = match &q.data {
        QuantizedData::Codes { codes, scale } => codes.iter().map(|&c| c as f64 * scale).collect(),
        QuantizedData::FullPrecision(v) => v.clone(),
    };
    Tensor::new(q.shape.clone(), data)
}
