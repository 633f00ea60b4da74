//! Deterministic synthetic stand-in for a 10-class 28x28 digit set.
//!
//! Each class is a fixed set of line strokes drawn from the seed. A sample
//! jitters every stroke end point, shifts the whole figure, scales the ink
//! contrast, adds a background level and Gaussian pixel noise, then rounds
//! to bytes. The same `SynthSpec` always produces the same bytes.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, DatasetSplits, TEST_IMAGES_FILE, TEST_LABELS_FILE, TRAIN_IMAGES_FILE, TRAIN_LABELS_FILE};
use super::idx::{encode_idx_images, encode_idx_labels, IdxImages};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub train: usize,
    pub test: usize,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_size")]
    pub size: usize,
    #[serde(default = "default_strokes")]
    pub strokes_per_class: usize,
    /// Largest whole-figure shift in pixels, each axis.
    #[serde(default = "default_shift")]
    pub max_shift: f64,
    /// Largest per-end-point displacement in pixels, each axis.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    /// Ink contrast is drawn uniformly from this range.
    #[serde(default = "default_contrast")]
    pub contrast: (f64, f64),
    /// Background level is drawn uniformly from `[0, max_background]`.
    #[serde(default = "default_background")]
    pub max_background: f64,
    /// Standard deviation of additive pixel noise, in `[0, 1]` units.
    #[serde(default = "default_noise")]
    pub noise: f64,
}

fn default_classes() -> usize {
    10
}
fn default_size() -> usize {
    28
}
fn default_strokes() -> usize {
    3
}
fn default_shift() -> f64 {
    2.0
}
fn default_jitter() -> f64 {
    1.5
}
fn default_contrast() -> (f64, f64) {
    (0.3, 1.0)
}
fn default_background() -> f64 {
    0.2
}
fn default_noise() -> f64 {
    0.15
}

impl SynthSpec {
    pub fn new(seed: u64, train: usize, test: usize) -> Self {
        SynthSpec {
            seed,
            train,
            test,
            classes: default_classes(),
            size: default_size(),
            strokes_per_class: default_strokes(),
            max_shift: default_shift(),
            jitter: default_jitter(),
            contrast: default_contrast(),
            max_background: default_background(),
            noise: default_noise(),
        }
    }

    fn check(&self) -> Result<()> {
        let ok = (1..=256).contains(&self.classes)
            && self.size >= 8
            && self.strokes_per_class >= 1
            && self.max_shift >= 0.0
            && self.jitter >= 0.0
            && 0.0 <= self.contrast.0
            && self.contrast.0 <= self.contrast.1
            && self.contrast.1 <= 1.0
            && (0.0..=1.0).contains(&self.max_background)
            && self.noise >= 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid synthetic dataset spec {self:?}")));
        }
        Ok(())
    }
}

type Stroke = [(f64, f64); 2];

fn distance_to_segment(p: (f64, f64), s: &Stroke) -> f64 {
    let [(ax, ay), (bx, by)] = *s;
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - ax) * dx + (p.1 - ay) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (ax + t * dx, ay + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

fn prototypes(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<Stroke>> {
    let margin = spec.size as f64 * 0.2;
    let span = spec.size as f64 - 2.0 * margin;
    let point = |rng: &mut ChaCha8Rng| (margin + rng.random::<f64>() * span, margin + rng.random::<f64>() * span);
    (0..spec.classes)
        .map(|_| {
            (0..spec.strokes_per_class)
                .map(|_| {
                    let a = point(rng);
                    let mut b = point(rng);
                    // Keep strokes long enough to be visible after jitter.
                    while distance_to_segment(a, &[b, b]) < span * 0.35 {
                        b = point(rng);
                    }
                    [a, b]
                })
                .collect()
        })
        .collect()
}

fn render(spec: &SynthSpec, strokes: &[Stroke], rng: &mut ChaCha8Rng, noise: &Normal<f64>, out: &mut Vec<u8>) {
    let unit = |rng: &mut ChaCha8Rng| rng.random::<f64>() * 2.0 - 1.0;
    let shift = (unit(rng) * spec.max_shift, unit(rng) * spec.max_shift);
    let placed: Vec<Stroke> = strokes
        .iter()
        .map(|s| {
            let mut s = *s;
            for p in &mut s {
                p.0 += shift.0 + unit(rng) * spec.jitter;
                p.1 += shift.1 + unit(rng) * spec.jitter;
            }
            s
        })
        .collect();
    let width = 1.0 + rng.random::<f64>();
    let contrast = spec.contrast.0 + rng.random::<f64>() * (spec.contrast.1 - spec.contrast.0);
    let background = rng.random::<f64>() * spec.max_background;
    for y in 0..spec.size {
        for x in 0..spec.size {
            let p = (x as f64 + 0.5, y as f64 + 0.5);
            let d = placed.iter().map(|s| distance_to_segment(p, s)).fold(f64::INFINITY, f64::min);
            let ink = (width / 2.0 + 0.5 - d).clamp(0.0, 1.0);
            let v = background + contrast * ink + noise.sample(rng);
            out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
}

fn generate(spec: &SynthSpec, protos: &[Vec<Stroke>], count: usize, stream: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let noise = Normal::new(0.0, spec.noise).expect("noise std checked");
    let mut pixels = Vec::with_capacity(count * spec.size * spec.size);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let label = (i % spec.classes) as u8;
        render(spec, &protos[label as usize], &mut rng, &noise, &mut pixels);
        labels.push(label);
    }
    Dataset::new([1, spec.size, spec.size], pixels, labels).expect("consistent sizes")
}

/// Train and test splits; classes are interleaved so any prefix is balanced.
pub fn synthesize(spec: &SynthSpec) -> Result<DatasetSplits> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let protos = prototypes(spec, &mut rng);
    Ok(DatasetSplits {
        train: generate(spec, &protos, spec.train, 1),
        test: generate(spec, &protos, spec.test, 2),
    })
}

fn idx_images(d: &Dataset) -> IdxImages {
    IdxImages {
        count: d.len(),
        rows: d.sample_shape[1],
        cols: d.sample_shape[2],
        pixels: d.pixels.clone(),
    }
}

/// Writes both splits under `dir` with the MNIST file names.
pub fn write_dataset_dir(dir: &Path, splits: &DatasetSplits) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        (TRAIN_IMAGES_FILE, encode_idx_images(&idx_images(&splits.train))),
        (TRAIN_LABELS_FILE, encode_idx_labels(&splits.train.labels)),
        (TEST_IMAGES_FILE, encode_idx_images(&idx_images(&splits.test))),
        (TEST_LABELS_FILE, encode_idx_labels(&splits.test.labels)),
    ];
    for (name, bytes) in files {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
