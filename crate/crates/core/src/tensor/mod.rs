//! Dense binary64 tensors and the forward/backward primitives used by the
//! engine: convolution, fully-connected, max pooling, clipped activations
//! and softmax cross-entropy.
//!
//! Feature maps are laid out `N x C x H x W`, filters `Cout x Cin x Kh x Kw`,
//! both row-major. Every kernel accumulates in a fixed loop order, so the
//! float path is bitwise reproducible.

mod activation;
mod conv;
mod linear;
mod loss;
mod pool;

use std::ops::{Add, AddAssign, Mul};

pub use activation::{clip_pm1, clip_pm1_backward, clipped_relu, clipped_relu_backward};
pub use conv::{
    conv2d, conv2d_backward, conv2d_im2col, conv_output_extent, ConvGeometry,
};
pub use linear::{fully_connected, fully_connected_backward};
pub use loss::{cross_entropy_terms, softmax_cross_entropy, softmax_cross_entropy_backward};
pub use pool::{max_pool2d, max_pool2d_backward, PoolOutput};

pub(crate) use activation::interval_mask_backward;
pub(crate) use conv::conv2d_raw;
pub(crate) use linear::matmul_nt_raw;

use crate::error::{Error, Result};

/// Element type the generic kernels run on: `f64` for the float paths and
/// `i64` for integer-code accumulation.
pub(crate) trait Scalar:
    Copy + Default + PartialOrd + Add<Output = Self> + Mul<Output = Self> + AddAssign + Send + Sync
{
}

impl Scalar for f64 {}
impl Scalar for i64 {}

pub const MAX_RANK: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Gradients share the tensor representation; a gradient always has the
/// shape of the value it differentiates.
pub type Gradient = Tensor;

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(Error::Dimension(format!(
            "tensor rank must be 1..={MAX_RANK}, got shape {shape:?}"
        )));
    }
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::Dimension(format!(
            "tensor extents must be >= 1, got {shape:?}"
        )));
    }
    Ok(shape.iter().product())
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n = check_shape(&shape)?;
        if n != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} holds {n} elements but {} were supplied",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    /// Panics if `shape` violates the tensor invariants; callers pass shapes
    /// that were already validated.
    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = check_shape(shape).expect("invalid tensor shape");
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Result<Self> {
        let n = check_shape(shape)?;
        Ok(Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Extents of a rank-4 tensor, or a dimension error naming `what`.
    pub fn dims4(&self, what: &str) -> Result<[usize; 4]> {
        match self.shape[..] {
            [a, b, c, d] => Ok([a, b, c, d]),
            _ => Err(Error::Dimension(format!(
                "{what} must be rank 4, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Tensor::new(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, a: f64) -> Tensor {
        self.map(|x| a * x)
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "cannot add {:?} to {:?}",
                other.shape, self.shape
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Number of leading-axis entries (batch size for activations).
    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// Elements per leading-axis entry.
    pub fn row_len(&self) -> usize {
        self.data.len() / self.shape[0]
    }
}
