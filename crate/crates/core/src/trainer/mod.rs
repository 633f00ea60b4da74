//! From-scratch training with SGD and momentum through the fake-quantized
//! forward/backward pass, evaluation, dataset ingestion and experiment grids.
//!
//! A mini-batch is split into fixed-size chunks whose gradients are computed
//! independently (in parallel when threads are available) and summed in
//! chunk order, so results do not depend on the thread count.

mod config;
mod dataset;
mod grid;
mod idx;
mod synth;

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{LrSchedule, PrecisionPair, Quantization, TrainConfig};
pub use dataset::{
    ingest_idx, load_dataset_dir, Dataset, DatasetSplits, TEST_IMAGES_FILE, TEST_LABELS_FILE, TRAIN_IMAGES_FILE,
    TRAIN_LABELS_FILE,
};
pub use grid::{run_grid, GridCell, GridConfig, GridReport, GRID_CSV_HEADER};
pub use idx::{
    encode_idx_images, encode_idx_labels, parse_idx_images, parse_idx_labels, read_idx_images, read_idx_labels,
    IdxImages, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use synth::{synthesize, write_dataset_dir, SynthSpec};

use crate::engine::{argmax_rows, backward, forward, forward_recorded, Mode};
use crate::error::{Error, Result};
use crate::model::{init_parameters, Checkpoint, NetworkDescriptor, Parameters};
use crate::tensor::cross_entropy_terms;

/// Samples per gradient work unit. Fixed so the summation order is too.
pub const CHUNK: usize = 16;

/// Samples per forward call during evaluation.
const EVAL_CHUNK: usize = 64;

pub const METRICS_CSV_HEADER: &str = "epoch,loss,train_acc,test_acc";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    /// One-based.
    pub epoch: usize,
    /// Mean training cross-entropy over the epoch's mini-batches.
    pub loss: f64,
    /// Top-1 accuracy on the training split after the epoch, in `[0, 1]`.
    pub train_acc: f64,
    pub test_acc: f64,
}

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!("{},{:.6},{:.6},{:.6}", self.epoch, self.loss, self.train_acc, self.test_acc)
    }
}

pub fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let mut s = String::from(METRICS_CSV_HEADER);
    s.push('\n');
    for m in metrics {
        s += &m.csv_row();
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<EpochMetrics>,
}

impl TrainOutcome {
    pub fn final_metrics(&self) -> EpochMetrics {
        *self.metrics.last().expect("at least one epoch")
    }
}

struct ChunkResult {
    loss: f64,
    grads: Parameters,
}

fn chunk_gradient(net: &NetworkDescriptor, params: &Parameters, data: &Dataset, indices: &[usize], mode: Mode, scale: f64) -> Result<ChunkResult> {
    let (x, labels) = data.batch(indices);
    let out = forward_recorded(net, params, &x, mode)?;
    let (loss, g) = cross_entropy_terms(&out.logits, &labels, scale)?;
    let grads = backward(&out, &g)?;
    Ok(ChunkResult { loss, grads })
}

/// Number of correctly classified samples of `data`.
pub fn count_correct(net: &NetworkDescriptor, params: &Parameters, data: &Dataset, mode: Mode) -> Result<usize> {
    let indices: Vec<usize> = (0..data.len()).collect();
    let counts = indices
        .par_chunks(EVAL_CHUNK)
        .map(|idx| {
            let (x, labels) = data.batch(idx);
            let logits = forward(net, params, &x, mode)?.logits;
            Ok(argmax_rows(&logits).iter().zip(&labels).filter(|(p, l)| p == l).count())
        })
        .collect::<Result<Vec<usize>>>()?;
    Ok(counts.iter().sum())
}

/// Top-1 accuracy in `[0, 1]`; 0 for an empty dataset.
pub fn evaluate(net: &NetworkDescriptor, params: &Parameters, data: &Dataset, mode: Mode) -> Result<f64> {
    data.check_compatible(net)?;
    if data.is_empty() {
        return Ok(0.0);
    }
    Ok(count_correct(net, params, data, mode)? as f64 / data.len() as f64)
}

pub fn evaluate_checkpoint(checkpoint: &Checkpoint, data: &Dataset, mode: Mode) -> Result<f64> {
    evaluate(&checkpoint.descriptor, &checkpoint.master, data, mode)
}

/// `v = momentum * v + (g + weight_decay * w)`, `w -= lr * v`.
fn sgd_step(params: &mut Parameters, momentum: &mut Parameters, grads: &Parameters, lr: f64, mu: f64, wd: f64) {
    for ((p, v), g) in params.tensors.iter_mut().zip(&mut momentum.tensors).zip(&grads.tensors) {
        let (w, v, g) = (p.value.data_mut(), v.value.data_mut(), g.value.data());
        for i in 0..w.len() {
            v[i] = mu * v[i] + g[i] + wd * w[i];
            w[i] -= lr * v[i];
        }
    }
}

/// Trains `net` on `data.train` from a fresh initialization and reports
/// each epoch to `on_epoch` as soon as it finishes.
pub fn train_on(net: &NetworkDescriptor, data: &DatasetSplits, config: &TrainConfig, on_epoch: &mut dyn FnMut(&EpochMetrics) -> Result<()>) -> Result<TrainOutcome> {
    config.validate()?;
    net.validate()?;
    data.train.check_compatible(net)?;
    data.test.check_compatible(net)?;
    if data.train.is_empty() {
        return Err(Error::Input("training split is empty".into()));
    }
    let mode = config.mode()?;
    let mut params = init_parameters(net, config.seed)?;
    let mut momentum = params.zeros_like();
    let mut metrics = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64 + 1);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let lr = config.learning_rate.rate(epoch);
        let mut loss_total = 0.0;
        let mut batches = 0usize;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let scale = 1.0 / batch.len() as f64;
            let chunks = batch
                .par_chunks(CHUNK)
                .map(|idx| chunk_gradient(net, &params, &data.train, idx, mode, scale))
                .collect::<Result<Vec<_>>>()?;
            let mut grads = params.zeros_like();
            let mut loss = 0.0;
            for c in &chunks {
                loss += c.loss;
                grads.accumulate(&c.grads)?;
            }
            let loss = loss * scale;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::Divergence(format!(
                    "epoch {} batch {b}: loss is {loss} at learning rate {lr}",
                    epoch + 1
                )));
            }
            sgd_step(&mut params, &mut momentum, &grads, lr, config.momentum, config.weight_decay);
            if !params.all_finite() {
                return Err(Error::Divergence(format!(
                    "epoch {} batch {b}: master weights became non-finite",
                    epoch + 1
                )));
            }
            loss_total += loss;
            batches += 1;
        }
        let m = EpochMetrics {
            epoch: epoch + 1,
            loss: loss_total / batches as f64,
            train_acc: evaluate(net, &params, &data.train, mode)?,
            test_acc: evaluate(net, &params, &data.test, mode)?,
        };
        on_epoch(&m)?;
        metrics.push(m);
    }
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            descriptor: net.clone(),
            master: params,
            momentum,
            epoch: config.epochs as u64,
            seed: config.seed,
        },
        metrics,
    })
}

/// Loads the dataset named by `config`, applying its size limits.
pub fn load_config_dataset(config: &TrainConfig) -> Result<DatasetSplits> {
    let mut data = load_dataset_dir(&config.dataset)?;
    if let Some(n) = config.train_limit {
        data.train = data.train.truncated(n);
    }
    if let Some(n) = config.test_limit {
        data.test = data.test.truncated(n);
    }
    Ok(data)
}

/// Full run from a config. When `metrics_path` is given the CSV log is
/// (re)created there and one row is appended per finished epoch.
pub fn train(config: &TrainConfig, metrics_path: Option<&Path>) -> Result<TrainOutcome> {
    config.validate()?;
    let net = config.network()?;
    let data = load_config_dataset(config)?;
    let mut log = match metrics_path {
        Some(path) => {
            let mut f = std::fs::File::create(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
            writeln!(f, "{METRICS_CSV_HEADER}").map_err(|e| Error::io(path.to_path_buf(), e))?;
            Some((path, f))
        }
        None => None,
    };
    train_on(&net, &data, config, &mut |m| {
        if let Some((path, f)) = log.as_mut() {
            writeln!(f, "{}", m.csv_row()).map_err(|e| Error::io(path.to_path_buf(), e))?;
            f.flush().map_err(|e| Error::io(path.to_path_buf(), e))?;
        }
        Ok(())
    })
}
