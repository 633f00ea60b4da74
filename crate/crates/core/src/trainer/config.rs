use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::Mode;
use crate::error::{Error, Result};
use crate::model::NetworkDescriptor;

/// Precision applied to one class of compute layers. Absent fields keep
/// the descriptor's value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecisionPair {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_bits: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation_bits: Option<u32>,
}

impl PrecisionPair {
    pub fn is_empty(&self) -> bool {
        self.weight_bits.is_none() && self.activation_bits.is_none()
    }
}

/// Precision overrides by layer class, applied in the order `all`, then
/// `first`, then `last`. `activation_bits` refers to the activations the
/// layer reads.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quantization {
    #[serde(default, skip_serializing_if = "PrecisionPair::is_empty")]
    pub all: PrecisionPair,
    #[serde(default, skip_serializing_if = "PrecisionPair::is_empty")]
    pub first: PrecisionPair,
    #[serde(default, skip_serializing_if = "PrecisionPair::is_empty")]
    pub last: PrecisionPair,
}

impl Quantization {
    pub fn uniform(weight_bits: u32, activation_bits: u32) -> Self {
        Quantization {
            all: PrecisionPair {
                weight_bits: Some(weight_bits),
                activation_bits: Some(activation_bits),
            },
            ..Default::default()
        }
    }

    pub fn apply(&self, net: &NetworkDescriptor) -> Result<NetworkDescriptor> {
        let mut net = net.clone();
        let compute = net.compute_layer_indices();
        for i in &compute {
            net.set_layer_precision(*i, self.all.weight_bits, self.all.activation_bits)?;
        }
        if let (Some(&first), Some(&last)) = (compute.first(), compute.last()) {
            net.set_layer_precision(first, self.first.weight_bits, self.first.activation_bits)?;
            net.set_layer_precision(last, self.last.weight_bits, self.last.activation_bits)?;
        }
        Ok(net)
    }
}

/// Learning rate `initial * factor^(number of milestones <= epoch)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub initial: f64,
    /// Zero-based epochs at which the rate is multiplied by `factor`.
    #[serde(default)]
    pub milestones: Vec<usize>,
    #[serde(default = "default_decay")]
    pub factor: f64,
}

fn default_decay() -> f64 {
    0.1
}

impl LrSchedule {
    pub fn rate(&self, epoch: usize) -> f64 {
        let steps = self.milestones.iter().filter(|&&m| m <= epoch).count();
        self.initial * self.factor.powi(steps as i32)
    }
}

fn default_momentum() -> f64 {
    0.9
}
fn default_weight_decay() -> f64 {
    5e-4
}
fn default_widening() -> f64 {
    1.0
}
fn default_mode() -> String {
    "fakequant".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Seeds initialization and the per-epoch shuffle. Required.
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: LrSchedule,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    /// Descriptor file, or the name of a shipped descriptor.
    pub descriptor: PathBuf,
    /// Directory with MNIST-named IDX files.
    pub dataset: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_limit: Option<usize>,
    #[serde(default)]
    pub quantization: Quantization,
    /// Applied on top of the descriptor's own widening.
    #[serde(default = "default_widening")]
    pub widening: f64,
    /// `fakequant` or `float`.
    #[serde(default = "default_mode")]
    pub mode: String,
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_json(&text)?;
        config.resolve_paths(path.parent().unwrap_or(Path::new("")));
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && base.join(&*p).exists() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.descriptor);
        if self.dataset.is_relative() {
            self.dataset = base.join(&self.dataset);
        }
    }

    pub fn mode(&self) -> Result<Mode> {
        match self.mode.parse()? {
            Mode::IntegerPath => Err(Error::Config("training cannot run in the integer path".into())),
            m => Ok(m),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let checks = [
            (self.epochs >= 1, "epochs must be >= 1"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (positive(self.learning_rate.initial), "learning_rate.initial must be positive"),
            (positive(self.learning_rate.factor), "learning_rate.factor must be positive"),
            ((0.0..1.0).contains(&self.momentum), "momentum must lie in [0, 1)"),
            (self.weight_decay.is_finite() && self.weight_decay >= 0.0, "weight_decay must be >= 0"),
            (positive(self.widening), "widening must be positive"),
            (self.train_limit != Some(0), "train_limit must be >= 1"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg.into()));
            }
        }
        self.mode()?;
        Ok(())
    }

    /// The descriptor with quantization overrides and widening applied.
    pub fn network(&self) -> Result<NetworkDescriptor> {
        let base = NetworkDescriptor::load(&self.descriptor)?;
        let net = self.quantization.apply(&base)?.widen(self.widening)?;
        net.validate()?;
        Ok(net)
    }
}
