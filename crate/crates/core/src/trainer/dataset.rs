use std::path::Path;

use super::idx::{read_idx_images, read_idx_labels, IdxImages};
use crate::error::{Error, Result};
use crate::model::NetworkDescriptor;
use crate::tensor::Tensor;

pub const TRAIN_IMAGES_FILE: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS_FILE: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES_FILE: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS_FILE: &str = "t10k-labels-idx1-ubyte";

/// Byte images with one label each. Pixels are kept as stored and mapped
/// to `[0, 1]` as `u / 255` when a batch is assembled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    /// `C x H x W` of one image.
    pub sample_shape: [usize; 3],
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplits {
    pub train: Dataset,
    pub test: Dataset,
}

impl Dataset {
    pub fn new(sample_shape: [usize; 3], pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        let per: usize = sample_shape.iter().product();
        if per == 0 || pixels.len() != per * labels.len() {
            return Err(Error::Input(format!(
                "{} pixels cannot hold {} images of {sample_shape:?}",
                pixels.len(),
                labels.len()
            )));
        }
        Ok(Dataset {
            sample_shape,
            pixels,
            labels,
        })
    }

    pub fn from_idx(images: IdxImages, labels: Vec<u8>) -> Result<Self> {
        if images.count != labels.len() {
            return Err(Error::parse(
                4,
                format!("{} images but {} labels", images.count, labels.len()),
            ));
        }
        Dataset::new([1, images.rows, images.cols], images.pixels, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.sample_len();
        &self.pixels[i * n..(i + 1) * n]
    }

    /// The first `n` samples (all of them when `n >= len`).
    pub fn truncated(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            sample_shape: self.sample_shape,
            pixels: self.pixels[..n * self.sample_len()].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    /// Normalized `N x C x H x W` batch and labels for `indices`.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let [c, h, w] = self.sample_shape;
        let mut data = Vec::with_capacity(indices.len() * self.sample_len());
        for &i in indices {
            data.extend(self.image(i).iter().map(|&p| p as f64 / 255.0));
        }
        let x = Tensor::new(vec![indices.len(), c, h, w], data).expect("batch shape");
        (x, indices.iter().map(|&i| self.labels[i] as usize).collect())
    }

    /// Image extents match the descriptor's input and every label is a
    /// valid class.
    pub fn check_compatible(&self, net: &NetworkDescriptor) -> Result<()> {
        if self.sample_shape != net.input_shape {
            return Err(Error::Input(format!(
                "dataset images are {:?}, '{}' expects {:?}",
                self.sample_shape, net.name, net.input_shape
            )));
        }
        if let Some(bad) = self.labels.iter().find(|&&l| l as usize >= net.class_count) {
            return Err(Error::Input(format!(
                "label {bad} outside the {} classes of '{}'",
                net.class_count, net.name
            )));
        }
        Ok(())
    }
}

pub fn ingest_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    Dataset::from_idx(read_idx_images(images_path)?, read_idx_labels(labels_path)?)
}

/// Reads a directory laid out like the MNIST distribution (uncompressed).
pub fn load_dataset_dir(dir: &Path) -> Result<DatasetSplits> {
    Ok(DatasetSplits {
        train: ingest_idx(&dir.join(TRAIN_IMAGES_FILE), &dir.join(TRAIN_LABELS_FILE))?,
        test: ingest_idx(&dir.join(TEST_IMAGES_FILE), &dir.join(TEST_LABELS_FILE))?,
    })
}
