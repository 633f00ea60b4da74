//! Static analysis of descriptors: multiply-accumulate counts, the
//! bit-product compute cost model and activation/weight memory footprints.
//!
//! Compute cost of a layer is `FMAs * k_W * k_A`, where `k_A` is the width
//! of the activations the layer reads.

mod cost;
mod footprint;
mod sensitivity;

pub use cost::{compute_cost, cost_ratio, count_fmas, fma_ratio, CostReport, LayerCost, Ratio, COST_CSV_HEADER};
pub use footprint::{
    memory_footprint, tensor_bytes, FootprintReport, LayerFootprint, Phase, PrecisionOverride, FOOTPRINT_CSV_HEADER,
};
pub use sensitivity::{
    sensitivity_csv, sensitivity_rows, standard_sensitivity_table, Convention, SensitivityRow, SENSITIVITY_CSV_HEADER,
};
