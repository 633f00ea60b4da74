use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Quantization, TrainConfig};
use super::{load_config_dataset, train_on, EpochMetrics};
use crate::error::{Error, Result};

/// A sweep over `(k_W, k_A, widening, seed)`; every other setting comes from
/// `base`. Cells run in row-major order of the four lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub base: TrainConfig,
    pub weight_bits: Vec<u32>,
    pub activation_bits: Vec<u32>,
    #[serde(default = "unit")]
    pub widening: Vec<f64>,
    /// Defaults to `[base.seed]`.
    #[serde(default)]
    pub seeds: Vec<u64>,
}

fn unit() -> Vec<f64> {
    vec![1.0]
}

impl GridConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut grid: GridConfig = serde_json::from_str(&text)?;
        grid.base.resolve_paths(path.parent().unwrap_or(Path::new("")));
        Ok(grid)
    }

    pub fn seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.base.seed]
        } else {
            self.seeds.clone()
        }
    }

    /// Config of one cell.
    pub fn cell_config(&self, weight_bits: u32, activation_bits: u32, widening: f64, seed: u64) -> TrainConfig {
        let mut c = self.base.clone();
        c.quantization = Quantization {
            all: Quantization::uniform(weight_bits, activation_bits).all,
            ..self.base.quantization
        };
        c.widening = widening;
        c.seed = seed;
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub weight_bits: u32,
    pub activation_bits: u32,
    pub widening: f64,
    pub seed: u64,
    /// Final-epoch metrics, or the error that stopped this cell.
    pub outcome: std::result::Result<EpochMetrics, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridReport {
    pub weight_bits: Vec<u32>,
    pub activation_bits: Vec<u32>,
    pub widening: Vec<f64>,
    pub cells: Vec<GridCell>,
}

pub const GRID_CSV_HEADER: &str = "weight_bits,activation_bits,widening,seed,train_acc,test_acc,status";

fn csv_field(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

impl GridReport {
    /// One row per cell; failed cells have empty accuracies and the error
    /// message as status.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(GRID_CSV_HEADER);
        s.push('\n');
        for c in &self.cells {
            let (train, test, status) = match &c.outcome {
                Ok(m) => (format!("{:.6}", m.train_acc), format!("{:.6}", m.test_acc), "ok".to_string()),
                Err(e) => (String::new(), String::new(), csv_field(&format!("error: {e}"))),
            };
            s += &format!(
                "{},{},{},{},{train},{test},{status}\n",
                c.weight_bits, c.activation_bits, c.widening, c.seed
            );
        }
        s
    }

    /// Mean test accuracy over the successful seeds of one cell.
    pub fn mean_test_acc(&self, weight_bits: u32, activation_bits: u32, widening: f64) -> Option<f64> {
        let accs: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.weight_bits == weight_bits && c.activation_bits == activation_bits && c.widening == widening)
            .filter_map(|c| c.outcome.as_ref().ok().map(|m| m.test_acc))
            .collect();
        (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64)
    }

    /// Rows are `(widening, k_W)`, columns are `k_A`; entries are mean test
    /// accuracy over seeds, empty when every seed failed.
    pub fn table_csv(&self) -> String {
        let mut s = String::from("widening,weight_bits");
        for ka in &self.activation_bits {
            s += &format!(",a{ka}");
        }
        s.push('\n');
        for &w in &self.widening {
            for &kw in &self.weight_bits {
                s += &format!("{w},{kw}");
                for &ka in &self.activation_bits {
                    match self.mean_test_acc(kw, ka, w) {
                        Some(a) => s += &format!(",{a:.6}"),
                        None => s.push(','),
                    }
                }
                s.push('\n');
            }
        }
        s
    }
}

/// Trains every cell on the base config's dataset. A failing cell is
/// recorded and the sweep continues; `on_cell` sees each cell as it ends.
pub fn run_grid(grid: &GridConfig, on_cell: &mut dyn FnMut(&GridCell)) -> Result<GridReport> {
    if grid.weight_bits.is_empty() || grid.activation_bits.is_empty() || grid.widening.is_empty() {
        return Err(Error::Config("grid needs at least one value per axis".into()));
    }
    grid.base.validate()?;
    let data = load_config_dataset(&grid.base)?;
    let mut cells = Vec::new();
    for &kw in &grid.weight_bits {
        for &ka in &grid.activation_bits {
            for &w in &grid.widening {
                for seed in grid.seeds() {
                    let config = grid.cell_config(kw, ka, w, seed);
                    let outcome = config
                        .network()
                        .and_then(|net| train_on(&net, &data, &config, &mut |_| Ok(())))
                        .map(|o| o.final_metrics())
                        .map_err(|e| e.to_string());
                    let cell = GridCell {
                        weight_bits: kw,
                        activation_bits: ka,
                        widening: w,
                        seed,
                        outcome,
                    };
                    on_cell(&cell);
                    cells.push(cell);
                }
            }
        }
    }
    Ok(GridReport {
        weight_bits: grid.weight_bits.clone(),
        activation_bits: grid.activation_bits.clone(),
        widening: grid.widening.clone(),
        cells,
    })
}
