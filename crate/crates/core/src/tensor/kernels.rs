//! Slice-level kernels behind the tape ops.
//!
//! Convolutions lower to im2col + GEMM. Every loop runs in a fixed order, so
//! results are bit-reproducible for a given input.

use super::Scalar;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadMode {
    Zeros,
    Reflect,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// Leaky ReLU with negative slope 0.2.
    LeakyRelu,
    Tanh,
    Sigmoid,
}

pub const LEAKY_SLOPE: f64 = 0.2;

impl Activation {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    x
                } else {
                    T::zero()
                }
            }
            Activation::LeakyRelu => {
                if x > T::zero() {
                    x
                } else {
                    x * T::from_f64_lossy(LEAKY_SLOPE)
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => T::one() / (T::one() + (-x).exp()),
        }
    }

    /// Derivative given the input `x` and output `y`. At exactly 0 the ReLU
    /// family takes the negative-side slope.
    pub fn derivative<T: Scalar>(self, x: T, y: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::LeakyRelu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::from_f64_lossy(LEAKY_SLOPE)
                }
            }
            Activation::Tanh => T::one() - y * y,
            Activation::Sigmoid => y * (T::one() - y),
        }
    }
}

/// Spatial geometry of one convolution, expressed from the point of view of
/// the "image" side (the conv2d input, or the conv_transpose2d output).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub pad_mode: PadMode,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    /// Geometry of a forward convolution over a `channels x height x width` image.
    pub fn conv(
        channels: usize,
        height: usize,
        width: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
        pad_mode: PadMode,
    ) -> Result<Self> {
        if stride == 0 || kernel_h == 0 || kernel_w == 0 {
            return Err(Error::InvalidShape("zero stride or kernel".into()));
        }
        if pad_mode == PadMode::Reflect
            && (padding >= kernel_h || padding >= kernel_w || padding >= height || padding >= width)
        {
            return Err(Error::InvalidPadding { padding, kernel: kernel_h.min(kernel_w) });
        }
        let padded_h = height + 2 * padding;
        let padded_w = width + 2 * padding;
        if padded_h < kernel_h || padded_w < kernel_w {
            return Err(Error::InvalidShape(format!(
                "kernel {kernel_h}x{kernel_w} larger than padded input {padded_h}x{padded_w}"
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            kernel_h,
            kernel_w,
            stride,
            padding,
            pad_mode,
            out_h: (padded_h - kernel_h) / stride + 1,
            out_w: (padded_w - kernel_w) / stride + 1,
        })
    }

    /// Rows of the column matrix: one per (channel, ky, kx).
    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel_h * self.kernel_w
    }

    /// Columns of the column matrix: one per output position.
    pub fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    fn source_index(&self, out: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (out * self.stride + k) as isize - self.padding as isize;
        let n = extent as isize;
        match self.pad_mode {
            PadMode::Zeros => (pos >= 0 && pos < n).then_some(pos as usize),
            PadMode::Reflect => {
                let r = if pos < 0 {
                    -pos
                } else if pos >= n {
                    2 * (n - 1) - pos
                } else {
                    pos
                };
                Some(r as usize)
            }
        }
    }

    /// Source row/column for each (kernel offset, output position).
    fn index_maps(&self) -> (Vec<Option<usize>>, Vec<Option<usize>>) {
        let rows = (0..self.kernel_h)
            .flat_map(|k| (0..self.out_h).map(move |o| (k, o)))
            .map(|(k, o)| self.source_index(o, k, self.height))
            .collect();
        let cols = (0..self.kernel_w)
            .flat_map(|k| (0..self.out_w).map(move |o| (k, o)))
            .map(|(k, o)| self.source_index(o, k, self.width))
            .collect();
        (rows, cols)
    }
}

/// Unfold one image (`channels x height x width`) into `col_rows x col_cols`.
pub fn im2col<T: Scalar>(image: &[T], g: &ConvGeometry, cols: &mut [T]) {
    debug_assert_eq!(image.len(), g.image_len());
    debug_assert_eq!(cols.len(), g.col_rows() * g.col_cols());
    let (ymap, xmap) = g.index_maps();
    let plane = g.height * g.width;
    let ncols = g.col_cols();
    let mut row = 0;
    for c in 0..g.channels {
        let src = &image[c * plane..(c + 1) * plane];
        for ky in 0..g.kernel_h {
            for kx in 0..g.kernel_w {
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    match ymap[ky * g.out_h + oy] {
                        None => line.fill(T::zero()),
                        Some(iy) => {
                            let srow = &src[iy * g.width..(iy + 1) * g.width];
                            let xm = &xmap[kx * g.out_w..(kx + 1) * g.out_w];
                            for (d, ix) in line.iter_mut().zip(xm) {
                                *d = match ix {
                                    Some(ix) => srow[*ix],
                                    None => T::zero(),
                                };
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add columns back into an image buffer.
pub fn col2im<T: Scalar>(cols: &[T], g: &ConvGeometry, image: &mut [T]) {
    debug_assert_eq!(image.len(), g.image_len());
    let (ymap, xmap) = g.index_maps();
    let plane = g.height * g.width;
    let ncols = g.col_cols();
    let mut row = 0;
    for c in 0..g.channels {
        let dst = &mut image[c * plane..(c + 1) * plane];
        for ky in 0..g.kernel_h {
            for kx in 0..g.kernel_w {
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let Some(iy) = ymap[ky * g.out_h + oy] else { continue };
                    let line = &src[oy * g.out_w..(oy + 1) * g.out_w];
                    let xm = &xmap[kx * g.out_w..(kx + 1) * g.out_w];
                    let drow = &mut dst[iy * g.width..(iy + 1) * g.width];
                    for (v, ix) in line.iter().zip(xm) {
                        if let Some(ix) = ix {
                            drow[*ix] += *v;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Forward conv2d for a batch. `weight` is `[cout, cin, kh, kw]`, no bias.
pub fn conv2d_forward<T: Scalar>(
    input: &[T],
    batch: usize,
    weight: &[T],
    cout: usize,
    g: &ConvGeometry,
) -> Vec<T> {
    let k = g.col_rows();
    let p = g.col_cols();
    let mut cols = vec![T::zero(); k * p];
    let mut out = vec![T::zero(); batch * cout * p];
    for n in 0..batch {
        im2col(&input[n * g.image_len()..(n + 1) * g.image_len()], g, &mut cols);
        let dst = &mut out[n * cout * p..(n + 1) * cout * p];
        T::gemm(cout, k, p, T::one(), weight, k as isize, 1, &cols, p as isize, 1, T::zero(), dst, p as isize, 1);
    }
    out
}

/// Gradients of conv2d. Either output may be skipped.
pub fn conv2d_backward<T: Scalar>(
    input: &[T],
    batch: usize,
    weight: &[T],
    cout: usize,
    g: &ConvGeometry,
    grad_out: &[T],
    want_input: bool,
    want_weight: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let k = g.col_rows();
    let p = g.col_cols();
    let mut grad_in = want_input.then(|| vec![T::zero(); batch * g.image_len()]);
    let mut grad_w = want_weight.then(|| vec![T::zero(); cout * k]);
    let mut cols = vec![T::zero(); k * p];
    for n in 0..batch {
        let gout = &grad_out[n * cout * p..(n + 1) * cout * p];
        if let Some(gw) = grad_w.as_mut() {
            im2col(&input[n * g.image_len()..(n + 1) * g.image_len()], g, &mut cols);
            // gw[cout, k] += gout[cout, p] * cols^T[p, k]
            T::gemm(cout, p, k, T::one(), gout, p as isize, 1, &cols, 1, p as isize, T::one(), gw, k as isize, 1);
        }
        if let Some(gi) = grad_in.as_mut() {
            // cols[k, p] = weight^T[k, cout] * gout[cout, p]
            T::gemm(k, cout, p, T::one(), weight, 1, k as isize, gout, p as isize, 1, T::zero(), &mut cols, p as isize, 1);
            col2im(&cols, g, &mut gi[n * g.image_len()..(n + 1) * g.image_len()]);
        }
    }
    (grad_in, grad_w)
}

/// Forward transposed convolution. `weight` is `[cin, cout, kh, kw]`; `g`
/// describes the equivalent forward conv from the (larger) output image with
/// `cout` channels down to the `cin x h x w` input grid.
pub fn conv_transpose2d_forward<T: Scalar>(
    input: &[T],
    batch: usize,
    weight: &[T],
    cin: usize,
    g: &ConvGeometry,
) -> Vec<T> {
    let k = g.col_rows();
    let p = g.col_cols();
    let mut cols = vec![T::zero(); k * p];
    let mut out = vec![T::zero(); batch * g.image_len()];
    for n in 0..batch {
        let x = &input[n * cin * p..(n + 1) * cin * p];
        // cols[k, p] = weight^T[k, cin] * x[cin, p]
        T::gemm(k, cin, p, T::one(), weight, 1, k as isize, x, p as isize, 1, T::zero(), &mut cols, p as isize, 1);
        col2im(&cols, g, &mut out[n * g.image_len()..(n + 1) * g.image_len()]);
    }
    out
}

pub fn conv_transpose2d_backward<T: Scalar>(
    input: &[T],
    batch: usize,
    weight: &[T],
    cin: usize,
    g: &ConvGeometry,
    grad_out: &[T],
    want_input: bool,
    want_weight: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let k = g.col_rows();
    let p = g.col_cols();
    let mut grad_in = want_input.then(|| vec![T::zero(); batch * cin * p]);
    let mut grad_w = want_weight.then(|| vec![T::zero(); cin * k]);
    let mut cols = vec![T::zero(); k * p];
    for n in 0..batch {
        im2col(&grad_out[n * g.image_len()..(n + 1) * g.image_len()], g, &mut cols);
        if let Some(gi) = grad_in.as_mut() {
            // gi[cin, p] = weight[cin, k] * cols[k, p]
            let dst = &mut gi[n * cin * p..(n + 1) * cin * p];
            T::gemm(cin, k, p, T::one(), weight, k as isize, 1, &cols, p as isize, 1, T::zero(), dst, p as isize, 1);
        }
        if let Some(gw) = grad_w.as_mut() {
            // gw[cin, k] += x[cin, p] * cols^T[p, k]
            let x = &input[n * cin * p..(n + 1) * cin * p];
            T::gemm(cin, p, k, T::one(), x, p as isize, 1, &cols, 1, p as isize, T::one(), gw, k as isize, 1);
        }
    }
    (grad_in, grad_w)
}

/// Non-affine instance norm over contiguous slices of length `plane`.
/// Returns the normalized output and the per-slice inverse standard deviation.
pub fn instance_norm_forward<T: Scalar>(input: &[T], plane: usize, eps: T) -> (Vec<T>, Vec<T>) {
    let slices = input.len() / plane;
    let mut out = vec![T::zero(); input.len()];
    let mut inv_std = Vec::with_capacity(slices);
    let count = T::from_usize(plane).expect("plane size");
    for (src, dst) in input.chunks_exact(plane).zip(out.chunks_exact_mut(plane)) {
        let mean = src.iter().fold(T::zero(), |a, &v| a + v) / count;
        let var = src.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / count;
        let inv = T::one() / (var + eps).sqrt();
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = (s - mean) * inv;
        }
        inv_std.push(inv);
    }
    (out, inv_std)
}

/// `dx = inv_std * (dy - mean(dy) - y * mean(dy * y))` per slice.
pub fn instance_norm_backward<T: Scalar>(output: &[T], inv_std: &[T], plane: usize, grad_out: &[T]) -> Vec<T> {
    let count = T::from_usize(plane).expect("plane size");
    let mut grad_in = vec![T::zero(); output.len()];
    for (((y, gy), gx), &inv) in output
        .chunks_exact(plane)
        .zip(grad_out.chunks_exact(plane))
        .zip(grad_in.chunks_exact_mut(plane))
        .zip(inv_std)
    {
        let mean_g = gy.iter().fold(T::zero(), |a, &v| a + v) / count;
        let mean_gy = y.iter().zip(gy).fold(T::zero(), |a, (&yv, &gv)| a + yv * gv) / count;
        for ((d, &yv), &gv) in gx.iter_mut().zip(y).zip(gy) {
            *d = inv * (gv - mean_g - yv * mean_gy);
        }
    }
    grad_in
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_index_mirrors_without_edge_repeat() {
        let g = ConvGeometry::conv(1, 3, 3, 7, 7, 1, 3, PadMode::Reflect);
        assert!(matches!(g, Err(Error::InvalidPadding { .. })));
        let g = ConvGeometry::conv(1, 5, 5, 3, 3, 1, 3, PadMode::Reflect);
        assert!(g.is_err(), "padding must be below kernel size");
        let g = ConvGeometry::conv(1, 5, 5, 3, 3, 1, 1, PadMode::Reflect).unwrap();
        assert_eq!(g.source_index(0, 0, 5), Some(1));
        assert_eq!(g.source_index(4, 2, 5), Some(3));
    }

    #[test]
    fn output_extent_formula() {
        let g = ConvGeometry::conv(3, 64, 64, 4, 4, 2, 1, PadMode::Zeros).unwrap();
        assert_eq!((g.out_h, g.out_w), (32, 32));
        let g = ConvGeometry::conv(3, 64, 64, 7, 7, 1, 3, PadMode::Reflect).unwrap();
        assert_eq!((g.out_h, g.out_w), (64, 64));
    }

    #[test]
    fn im2col_col2im_are_adjoint() {
        let g = ConvGeometry::conv(2, 5, 6, 3, 3, 2, 1, PadMode::Reflect).unwrap();
        let img: Vec<f64> = (0..g.image_len()).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        let colv: Vec<f64> = (0..g.col_rows() * g.col_cols()).map(|i| ((i * 13 % 7) as f64) - 3.0).collect();
        let mut cols = vec![0.0; colv.len()];
        im2col(&img, &g, &mut cols);
        let mut back = vec![0.0; img.len()];
        col2im(&colv, &g, &mut back);
        let lhs: f64 = cols.iter().zip(&colv).map(|(a, b)| a * b).sum();
        let rhs: f64 = img.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }
}
