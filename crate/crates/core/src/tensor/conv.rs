use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Output extent of a strided, zero-padded window along one axis.
///
/// `(input + 2*padding - kernel)` must be a non-negative multiple of
/// `stride`; anything else is a configuration error rather than a silent
/// floor.
pub fn conv_output_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::Config("stride must be positive".into()));
    }
    if kernel == 0 {
        return Err(Error::Config("kernel extent must be positive".into()));
    }
    let span = input + 2 * padding;
    if kernel > span {
        return Err(Error::Config(format!(
            "kernel {kernel} exceeds padded input extent {span}"
        )));
    }
    if (span - kernel) % stride != 0 {
        return Err(Error::Config(format!(
            "output extent ({input} + 2*{padding} - {kernel})/{stride} + 1 is not integral"
        )));
    }
    Ok((span - kernel) / stride + 1)
}

/// Resolved shapes of one convolution call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(input: [usize; 4], filters: [usize; 4], stride: usize, padding: usize) -> Result<Self> {
        let [batch, in_channels, in_h, in_w] = input;
        let [out_channels, f_cin, kernel_h, kernel_w] = filters;
        if f_cin != in_channels {
            return Err(Error::Dimension(format!(
                "filters expect {f_cin} input channels but input has {in_channels}"
            )));
        }
        let out_h = conv_output_extent(in_h, kernel_h, stride, padding)?;
        let out_w = conv_output_extent(in_w, kernel_w, stride, padding)?;
        Ok(ConvGeometry {
            batch,
            in_channels,
            in_h,
            in_w,
            out_channels,
            kernel_h,
            kernel_w,
            stride,
            padding,
            out_h,
            out_w,
        })
    }

    pub fn input_shape(&self) -> [usize; 4] {
        [self.batch, self.in_channels, self.in_h, self.in_w]
    }

    pub fn filter_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel_h, self.kernel_w]
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.batch, self.out_channels, self.out_h, self.out_w]
    }

    /// Range of output positions whose tap `k` lands inside the unpadded input.
    fn valid_range(&self, k: usize, in_extent: usize, out_extent: usize) -> (usize, usize) {
        // position = o*stride + k - padding must satisfy 0 <= position < in_extent
        let lo = if k >= self.padding {
            0
        } else {
            (self.padding - k).div_ceil(self.stride)
        };
        let limit = in_extent + self.padding; // o*stride + k < limit
        let hi = if limit <= k {
            0
        } else {
            ((limit - k - 1) / self.stride + 1).min(out_extent)
        };
        (lo, hi.max(lo))
    }
}

/// Direct convolution over flat buffers. Per output element the products are
/// accumulated in `(ci, kh, kw)` order.
pub(crate) fn conv2d_raw<T: Scalar>(input: &[T], filters: &[T], g: &ConvGeometry) -> Vec<T> {
    let in_plane = g.in_h * g.in_w;
    let out_plane = g.out_h * g.out_w;
    let mut out = vec![T::default(); g.batch * g.out_channels * out_plane];
    for n in 0..g.batch {
        for co in 0..g.out_channels {
            let o_base = (n * g.out_channels + co) * out_plane;
            let out_map = &mut out[o_base..o_base + out_plane];
            for ci in 0..g.in_channels {
                let i_base = (n * g.in_channels + ci) * in_plane;
                let in_map = &input[i_base..i_base + in_plane];
                for kh in 0..g.kernel_h {
                    let (oh_lo, oh_hi) = g.valid_range(kh, g.in_h, g.out_h);
                    for kw in 0..g.kernel_w {
                        let w = filters[((co * g.in_channels + ci) * g.kernel_h + kh) * g.kernel_w + kw];
                        let (ow_lo, ow_hi) = g.valid_range(kw, g.in_w, g.out_w);
                        for oh in oh_lo..oh_hi {
                            let ih = oh * g.stride + kh - g.padding;
                            let in_row = &in_map[ih * g.in_w..(ih + 1) * g.in_w];
                            let out_row = &mut out_map[oh * g.out_w..(oh + 1) * g.out_w];
                            for ow in ow_lo..ow_hi {
                                let iw = ow * g.stride + kw - g.padding;
                                out_row[ow] += w * in_row[iw];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn geometry(input: &Tensor, filters: &Tensor, stride: usize, padding: usize) -> Result<ConvGeometry> {
    ConvGeometry::new(
        input.dims4("conv2d input")?,
        filters.dims4("conv2d filters")?,
        stride,
        padding,
    )
}

/// 2-D cross-correlation with zero padding.
pub fn conv2d(input: &Tensor, filters: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let g = geometry(input, filters, stride, padding)?;
    let out = conv2d_raw(input.data(), filters.data(), &g);
    Tensor::new(g.output_shape().to_vec(), out)
}

/// Same result as [`conv2d`], computed by unfolding input windows into a
/// `(Cin*Kh*Kw) x (Hout*Wout)` matrix and multiplying by the filter matrix.
/// The reduction runs over the unfolded axis in `(ci, kh, kw)` order, so
/// the two paths agree to within a zero-padding term.
pub fn conv2d_im2col(input: &Tensor, filters: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let g = geometry(input, filters, stride, padding)?;
    let patch = g.in_channels * g.kernel_h * g.kernel_w;
    let cols_n = g.out_h * g.out_w;
    let in_plane = g.in_h * g.in_w;
    let mut out = vec![0.0; g.batch * g.out_channels * cols_n];
    let mut cols = vec![0.0; patch * cols_n];
    for n in 0..g.batch {
        cols.iter_mut().for_each(|c| *c = 0.0);
        for ci in 0..g.in_channels {
            let in_map = &input.data()[(n * g.in_channels + ci) * in_plane..][..in_plane];
            for kh in 0..g.kernel_h {
                let (oh_lo, oh_hi) = g.valid_range(kh, g.in_h, g.out_h);
                for kw in 0..g.kernel_w {
                    let (ow_lo, ow_hi) = g.valid_range(kw, g.in_w, g.out_w);
                    let row = (ci * g.kernel_h + kh) * g.kernel_w + kw;
                    let col_row = &mut cols[row * cols_n..(row + 1) * cols_n];
                    for oh in oh_lo..oh_hi {
                        let ih = oh * g.stride + kh - g.padding;
                        for ow in ow_lo..ow_hi {
                            let iw = ow * g.stride + kw - g.padding;
                            col_row[oh * g.out_w + ow] = in_map[ih * g.in_w + iw];
                        }
                    }
                }
            }
        }
        // out[co, :] = sum_r F[co, r] * cols[r, :]
        for co in 0..g.out_channels {
            let out_row = &mut out[(n * g.out_channels + co) * cols_n..][..cols_n];
            let f_row = &filters.data()[co * patch..(co + 1) * patch];
            for (r, &w) in f_row.iter().enumerate() {
                let col_row = &cols[r * cols_n..(r + 1) * cols_n];
                for (o, &c) in out_row.iter_mut().zip(col_row) {
                    *o += w * c;
                }
            }
        }
    }
    Tensor::new(g.output_shape().to_vec(), out)
}

/// Analytic gradients of [`conv2d`] with respect to its input and filters.
pub fn conv2d_backward(
    output_grad: &Tensor,
    input: &Tensor,
    filters: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<(Tensor, Tensor)> {
    let g = geometry(input, filters, stride, padding)?;
    if output_grad.shape() != g.output_shape() {
        return Err(Error::Dimension(format!(
            "conv2d output gradient has shape {:?}, expected {:?}",
            output_grad.shape(),
            g.output_shape()
        )));
    }
    let in_plane = g.in_h * g.in_w;
    let out_plane = g.out_h * g.out_w;
    let x = input.data();
    let f = filters.data();
    let dy = output_grad.data();
    let mut dx = vec![0.0; x.len()];
    let mut df = vec![0.0; f.len()];
    for n in 0..g.batch {
        for co in 0..g.out_channels {
            let dy_map = &dy[(n * g.out_channels + co) * out_plane..][..out_plane];
            for ci in 0..g.in_channels {
                let i_base = (n * g.in_channels + ci) * in_plane;
                for kh in 0..g.kernel_h {
                    let (oh_lo, oh_hi) = g.valid_range(kh, g.in_h, g.out_h);
                    for kw in 0..g.kernel_w {
                        let fi = ((co * g.in_channels + ci) * g.kernel_h + kh) * g.kernel_w + kw;
                        let w = f[fi];
                        let (ow_lo, ow_hi) = g.valid_range(kw, g.in_w, g.out_w);
                        let mut acc = 0.0;
                        for oh in oh_lo..oh_hi {
                            let ih = oh * g.stride + kh - g.padding;
                            let row = i_base + ih * g.in_w;
                            for ow in ow_lo..ow_hi {
                                let iw = ow * g.stride + kw - g.padding;
                                let up = dy_map[oh * g.out_w + ow];
                                dx[row + iw] += w * up;
                                acc += up * x[row + iw];
                            }
                        }
                        df[fi] += acc;
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new(input.shape().to_vec(), dx)?,
        Tensor::new(filters.shape().to_vec(), df)?,
    ))
}
