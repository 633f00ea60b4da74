use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::NetworkDescriptor;
use crate::quant::QuantSpec;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Weights of one compute layer, keyed by its index in the descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub layer: usize,
    pub value: Tensor,
}

/// Master (unquantized) weights of every compute layer, in layer order.
/// Gradients and optimizer state reuse the same container.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Parameters {
    pub tensors: Vec<ParamTensor>,
}

impl Parameters {
    pub fn get(&self, layer: usize) -> Option<&Tensor> {
        self.tensors.iter().find(|p| p.layer == layer).map(|p| &p.value)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn total_elements(&self) -> usize {
        self.tensors.iter().map(|p| p.value.len()).sum()
    }

    /// Same layout, all zeros.
    pub fn zeros_like(&self) -> Parameters {
        Parameters {
            tensors: self
                .tensors
                .iter()
                .map(|p| ParamTensor {
                    layer: p.layer,
                    value: Tensor::zeros(p.value.shape()),
                })
                .collect(),
        }
    }

    /// Elementwise `self += other`; layouts must match.
    pub fn accumulate(&mut self, other: &Parameters) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            return Err(Error::Dimension(format!(
                "parameter sets hold {} and {} tensors",
                self.tensors.len(),
                other.tensors.len()
            )));
        }
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            if a.layer != b.layer {
                return Err(Error::Dimension(format!(
                    "parameter layer {} paired with layer {}",
                    a.layer, b.layer
                )));
            }
            a.value.add_assign(&b.value)?;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|p| p.value.data().iter().all(|v| v.is_finite()))
    }

    /// Checks that the layout matches what `net` resolves to.
    pub fn check_layout(&self, net: &NetworkDescriptor) -> Result<()> {
        let expected: Vec<(usize, Vec<usize>)> = net
            .resolve_shapes()?
            .into_iter()
            .filter_map(|r| Some((r.index, r.param_shape?)))
            .collect();
        let actual: Vec<(usize, Vec<usize>)> = self
            .tensors
            .iter()
            .map(|p| (p.layer, p.value.shape().to_vec()))
            .collect();
        if expected != actual {
            return Err(Error::Dimension(format!(
                "parameters {actual:?} do not match descriptor layout {expected:?}"
            )));
        }
        Ok(())
    }
}

/// Mean of `q(w)^2` for `w ~ N(0, std^2)`, where `q` is the weight quantizer.
fn quantized_second_moment(spec: QuantSpec, std: f64) -> f64 {
    const STEPS: usize = 4096;
    let (lo, width) = (-8.0 * std, 16.0 * std / STEPS as f64);
    let norm = width / (std * (2.0 * std::f64::consts::PI).sqrt());
    (0..STEPS)
        .map(|i| {
            let w = lo + (i as f64 + 0.5) * width;
            let q = spec.quantize_value(w);
            q * q * (-0.5 * (w / std).powi(2)).exp() * norm
        })
        .sum()
}

/// Standard deviation whose quantized weights have second moment `target`.
/// Full precision gives `sqrt(target)`; unreachable targets (binary weights,
/// or `target >= 1`) fall back to it as well.
fn matched_std(spec: QuantSpec, target: f64) -> f64 {
    let he = target.sqrt();
    if spec.is_full_precision() || spec.is_binary_weight() || target >= 1.0 {
        return he;
    }
    let (mut lo, mut hi) = (he * 1e-3, 8.0);
    if quantized_second_moment(spec, hi) < target {
        return he;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if quantized_second_moment(spec, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// He-style initialization: each compute layer draws from `N(0, std^2)` and
/// clamps to `[-1, 1]`, with `std` chosen so the *quantized* weights have
/// second moment `2 / fan_in` (plain He at full precision). One ChaCha stream seeded from `seed` is consumed in layer
/// order, so the result is a pure function of `(net, seed)`.
pub fn init_parameters(net: &NetworkDescriptor, seed: u64) -> Result<Parameters> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tensors = Vec::new();
    for layer in net.resolve_shapes()? {
        let Some(shape) = layer.param_shape else {
            continue;
        };
        let fan_in: usize = shape[1..].iter().product();
        let target = 2.0 / fan_in as f64;
        let spec = net.layers[layer.index].weight_spec().expect("compute layer")?;
        let std = matched_std(spec, target);
        let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
        let value = Tensor::from_fn(&shape, |_| normal.sample(&mut rng).clamp(-1.0, 1.0))?;
        tensors.push(ParamTensor {
            layer: layer.index,
            value,
        });
    }
    Ok(Parameters { tensors })
}
