use serde::Serialize;

use crate::error::Result;
use crate::model::NetworkDescriptor;

/// Multiply-accumulates per sample for every layer, in layer order.
/// Non-compute layers report 0.
pub fn count_fmas(net: &NetworkDescriptor) -> Result<Vec<u64>> {
    Ok(net.resolve_shapes()?.iter().map(|r| r.fmas()).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerCost {
    pub index: usize,
    pub kind: &'static str,
    pub fmas: u64,
    pub weight_bits: u32,
    pub activation_bits: u32,
    /// `fmas * weight_bits * activation_bits`.
    pub cost: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub network: String,
    pub widening: f64,
    /// Compute layers only.
    pub layers: Vec<LayerCost>,
    pub total_fmas: u128,
    pub total_cost: u128,
}

/// Per-layer bit-cost of every compute layer: its FMAs times the weight and
/// activation operand widths.
pub fn compute_cost(net: &NetworkDescriptor) -> Result<CostReport> {
    let mut layers = Vec::new();
    for r in net.resolve_shapes()? {
        if r.param_shape.is_none() {
            continue;
        }
        let layer = &net.layers[r.index];
        let weight_bits = layer.weight_spec().expect("compute layer")?.bits();
        let activation_bits = net.input_operand_bits(r.index);
        let fmas = r.fmas();
        layers.push(LayerCost {
            index: r.index,
            kind: layer.kind_name(),
            fmas,
            weight_bits,
            activation_bits,
            cost: fmas as u128 * weight_bits as u128 * activation_bits as u128,
        });
    }
    Ok(CostReport {
        network: net.name.clone(),
        widening: net.widening,
        total_fmas: layers.iter().map(|l| l.fmas as u128).sum(),
        total_cost: layers.iter().map(|l| l.cost).sum(),
        layers,
    })
}

/// Exact ratio of two non-negative integers, kept in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Ratio {
    pub numerator: u128,
    pub denominator: u128,
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Ratio {
    /// `None` when `denominator` is 0.
    pub fn new(numerator: u128, denominator: u128) -> Option<Ratio> {
        if denominator == 0 {
            return None;
        }
        let g = gcd(numerator, denominator).max(1);
        Some(Ratio {
            numerator: numerator / g,
            denominator: denominator / g,
        })
    }

    pub fn value(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }
}

impl std::fmt::Display for Ratio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

/// `total_cost(candidate) / total_cost(baseline)`; `None` when the baseline
/// has no compute.
pub fn cost_ratio(candidate: &CostReport, baseline: &CostReport) -> Option<Ratio> {
    Ratio::new(candidate.total_cost, baseline.total_cost)
}

/// `total_fmas(candidate) / total_fmas(baseline)`.
pub fn fma_ratio(candidate: &CostReport, baseline: &CostReport) -> Option<Ratio> {
    Ratio::new(candidate.total_fmas, baseline.total_fmas)
}

pub const COST_CSV_HEADER: &str = "index,kind,fmas,weight_bits,activation_bits,cost";

impl CostReport {
    /// One row per compute layer, then a `total` row with empty bit columns.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(COST_CSV_HEADER);
        s.push('\n');
        for l in &self.layers {
            s += &format!(
                "{},{},{},{},{},{}\n",
                l.index, l.kind, l.fmas, l.weight_bits, l.activation_bits, l.cost
            );
        }
        s += &format!("total,,{},,,{}\n", self.total_fmas, self.total_cost);
        s
    }
}
