//! Whole-network cost ratios of a widened reduced-precision network against
//! its 1x full-precision baseline, under several conventions for the
//! precision of the first and last compute layers.

use serde::Serialize;

use super::cost::{compute_cost, cost_ratio, fma_ratio, Ratio};
use crate::error::{Error, Result};
use crate::model::{builtin, NetworkDescriptor};
use crate::quant::FULL_PRECISION_BITS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Every compute layer at the requested `(k_W, k_A)`.
    Uniform,
    /// First compute layer at 32/32.
    FirstFull,
    /// Last compute layer at 32/32.
    LastFull,
    /// First and last compute layers at 32/32.
    FirstLastFull,
    /// First layer reads 8-bit images; everything else uniform.
    Input8Bit,
    /// First layer reads 8-bit images and the last layer is 32/32.
    Input8BitLastFull,
}

impl Convention {
    pub const ALL: [Convention; 6] = [
        Convention::Uniform,
        Convention::FirstFull,
        Convention::LastFull,
        Convention::FirstLastFull,
        Convention::Input8Bit,
        Convention::Input8BitLastFull,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Convention::Uniform => "uniform",
            Convention::FirstFull => "first_full",
            Convention::LastFull => "last_full",
            Convention::FirstLastFull => "first_last_full",
            Convention::Input8Bit => "input_8bit",
            Convention::Input8BitLastFull => "input_8bit_last_full",
        }
    }

    /// `net` (already widened) with this convention's precisions applied.
    pub fn apply(&self, net: &NetworkDescriptor, weight_bits: u32, activation_bits: u32) -> Result<NetworkDescriptor> {
        let mut net = net.with_uniform_precision(weight_bits, activation_bits)?;
        let compute = net.compute_layer_indices();
        let (Some(&first), Some(&last)) = (compute.first(), compute.last()) else {
            return Err(Error::Config(format!("'{}' has no compute layers", net.name)));
        };
        let full = Some(FULL_PRECISION_BITS);
        match self {
            Convention::Uniform => {}
            Convention::FirstFull => net.set_layer_precision(first, full, full)?,
            Convention::LastFull => net.set_layer_precision(last, full, full)?,
            Convention::FirstLastFull => {
                net.set_layer_precision(first, full, full)?;
                net.set_layer_precision(last, full, full)?;
            }
            Convention::Input8Bit => net.set_layer_precision(first, None, Some(8))?,
            Convention::Input8BitLastFull => {
                net.set_layer_precision(first, None, Some(8))?;
                net.set_layer_precision(last, full, full)?;
            }
        }
        Ok(net)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityRow {
    pub network: String,
    pub widening: f64,
    pub weight_bits: u32,
    pub activation_bits: u32,
    pub convention: Convention,
    pub fma_ratio: Ratio,
    pub candidate_cost: u128,
    pub baseline_cost: u128,
    pub cost_ratio: Ratio,
}

/// One row per convention for `net` widened by `widening` at
/// `(weight_bits, activation_bits)`, against `net` at 1x and 32/32.
pub fn sensitivity_rows(net: &NetworkDescriptor, widening: f64, weight_bits: u32, activation_bits: u32) -> Result<Vec<SensitivityRow>> {
    let baseline_net = net.with_uniform_precision(FULL_PRECISION_BITS, FULL_PRECISION_BITS)?;
    let baseline = compute_cost(&baseline_net)?;
    let wide = net.widen(widening)?;
    Convention::ALL
        .iter()
        .map(|c| {
            let candidate = compute_cost(&c.apply(&wide, weight_bits, activation_bits)?)?;
            let none = || Error::Config(format!("'{}' has no compute", net.name));
            Ok(SensitivityRow {
                network: net.name.clone(),
                widening,
                weight_bits,
                activation_bits,
                convention: *c,
                fma_ratio: fma_ratio(&candidate, &baseline).ok_or_else(none)?,
                candidate_cost: candidate.total_cost,
                baseline_cost: baseline.total_cost,
                cost_ratio: cost_ratio(&candidate, &baseline).ok_or_else(none)?,
            })
        })
        .collect()
}

/// The shipped table: the AlexNet-like network 2x-wide at 4b/4b and the
/// ResNet-34-like network 2x-wide at 4b weights / 8b activations.
pub fn standard_sensitivity_table() -> Result<Vec<SensitivityRow>> {
    let mut rows = sensitivity_rows(&builtin("alexnet").expect("shipped"), 2.0, 4, 4)?;
    rows.extend(sensitivity_rows(&builtin("resnet34").expect("shipped"), 2.0, 4, 8)?);
    Ok(rows)
}

pub const SENSITIVITY_CSV_HEADER: &str =
    "network,widening,weight_bits,activation_bits,convention,fma_ratio,candidate_cost,baseline_cost,cost_ratio";

pub fn sensitivity_csv(rows: &[SensitivityRow]) -> String {
    let mut s = String::from(SENSITIVITY_CSV_HEADER);
    s.push('\n');
    for r in rows {
        s += &format!(
            "{},{},{},{},{},{:.6},{},{},{:.6}\n",
            r.network,
            r.widening,
            r.weight_bits,
            r.activation_bits,
            r.convention.name(),
            r.fma_ratio.value(),
            r.candidate_cost,
            r.baseline_cost,
            r.cost_ratio.value()
        );
    }
    s
}
