//! Dense NCHW tensors and the convolution kernels (im2col / col2im / gemm)
//! that the autodiff graph is built on.

use std::fmt::Debug;
use std::ops::AddAssign;

use num_traits::Float;

/// Floating point element type usable by the engine.
///
/// Training runs in `f32`; gradient checks run the same code in `f64`.
pub trait Scalar: Float + AddAssign + Debug + Default + Send + Sync + 'static {
    fn of(x: f64) -> Self;

    /// `c = alpha * a * b + beta * c` with explicit row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );
}

fn check_gemm_bounds(len: usize, rows: usize, cols: usize, rs: isize, cs: isize) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows as isize - 1) * rs + (cols as isize - 1) * cs;
    assert!(rs >= 0 && cs >= 0 && (last as usize) < len, "gemm operand out of bounds");
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            #[inline]
            fn of(x: f64) -> Self {
                x as $t
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                check_gemm_bounds(a.len(), m, k, rsa, csa);
                check_gemm_bounds(b.len(), k, n, rsb, csb);
                check_gemm_bounds(c.len(), m, n, rsc, csc);
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: operand extents were bounds-checked above.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// A dense 4-D tensor in (batch, channel, height, width) order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F = f32> {
    shape: [usize; 4],
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self::full(shape, F::zero())
    }

    pub fn full(shape: [usize; 4], value: F) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    /// Panics if `data.len()` does not match the shape.
    pub fn from_vec(shape: [usize; 4], data: Vec<F>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data length does not match shape {shape:?}"
        );
        Tensor { shape, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<F> {
        self.data
    }

    /// Elements per batch sample.
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn sample(&self, n: usize) -> &[F] {
        let len = self.sample_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn plane(&self, n: usize, c: usize) -> &[F] {
        let hw = self.shape[2] * self.shape[3];
        let start = (n * self.shape[1] + c) * hw;
        &self.data[start..start + hw]
    }

    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> F {
        let [_, ch, h, w] = self.shape;
        self.data[((n * ch + c) * h + y) * w + x]
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape, other.shape, "shape mismatch in add_assign");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: F) {
        for v in &mut self.data {
            *v = *v * factor;
        }
    }

    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|v| G::of(v.to_f64().unwrap_or(f64::NAN)))
                .collect(),
        }
    }

    /// Stacks single-sample tensors of identical shape along the batch axis.
    pub fn stack(samples: &[Tensor<F>]) -> Self {
        assert!(!samples.is_empty(), "cannot stack zero tensors");
        let [_, c, h, w] = samples[0].shape;
        let mut data = Vec::with_capacity(samples.len() * c * h * w);
        let mut n = 0;
        for s in samples {
            assert_eq!([c, h, w], [s.shape[1], s.shape[2], s.shape[3]]);
            data.extend_from_slice(&s.data);
            n += s.shape[0];
        }
        Tensor::from_vec([n, c, h, w], data)
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(a: &Self, b: &Self) -> Self {
        let [n, ca, h, w] = a.shape;
        assert_eq!([n, h, w], [b.shape[0], b.shape[2], b.shape[3]], "concat shape mismatch");
        let cb = b.shape[1];
        let mut data = Vec::with_capacity(n * (ca + cb) * h * w);
        for i in 0..n {
            data.extend_from_slice(a.sample(i));
            data.extend_from_slice(b.sample(i));
        }
        Tensor::from_vec([n, ca + cb, h, w], data)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.to_f64().unwrap() - b.to_f64().unwrap()).abs())
            .fold(0.0, f64::max)
    }
}

/// Output spatial extent of a convolution with zero padding.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if padded < kernel || stride == 0 {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Geometry of one 2-D convolution over a single sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Option<Self> {
        Some(ConvGeom {
            channels,
            height,
            width,
            kernel,
            stride,
            pad,
            out_h: conv_out_dim(height, kernel, stride, pad)?,
            out_w: conv_out_dim(width, kernel, stride, pad)?,
        })
    }

    /// Rows of the column matrix: channels * kernel * kernel.
    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    /// Columns of the column matrix: output pixels.
    pub fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// True when the column matrix is the input itself.
    pub fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Unfolds one (C, H, W) sample into a (C*k*k, Ho*Wo) matrix.
pub fn im2col<F: Scalar>(input: &[F], g: &ConvGeom, cols: &mut [F]) {
    let (k, s, p) = (g.kernel, g.stride as isize, g.pad as isize);
    let (h, w) = (g.height as isize, g.width as isize);
    let plane = g.col_cols();
    debug_assert_eq!(cols.len(), g.col_rows() * plane);
    for c in 0..g.channels {
        let src = &input[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..g.out_h {
                    let iy = oy as isize * s - p + ky as isize;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= h {
                        line.fill(F::zero());
                        continue;
                    }
                    let src_row = &src[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = ox as isize * s - p + kx as isize;
                        *v = if ix >= 0 && ix < w {
                            src_row[ix as usize]
                        } else {
                            F::zero()
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-and-adds a column matrix into a sample.
pub fn col2im<F: Scalar>(cols: &[F], g: &ConvGeom, out: &mut [F]) {
    let (k, s, p) = (g.kernel, g.stride as isize, g.pad as isize);
    let (h, w) = (g.height as isize, g.width as isize);
    let plane = g.col_cols();
    for c in 0..g.channels {
        let dst = &mut out[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..g.out_h {
                    let iy = oy as isize * s - p + ky as isize;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    let dst_row = &mut dst[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for ox in 0..g.out_w {
                        let ix = ox as isize * s - p + kx as isize;
                        if ix >= 0 && ix < w {
                            dst_row[ix as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct convolution used as an oracle for the im2col path.
    fn naive_conv(x: &[f64], g: &ConvGeom, w: &[f64], cout: usize) -> Vec<f64> {
        let mut out = vec![0.0; cout * g.out_h * g.out_w];
        for co in 0..cout {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let mut acc = 0.0;
                    for c in 0..g.channels {
                        for ky in 0..g.kernel {
                            for kx in 0..g.kernel {
                                let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                                let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                if iy < 0 || ix < 0 || iy >= g.height as isize || ix >= g.width as isize {
                                    continue;
                                }
                                let wi = ((co * g.channels + c) * g.kernel + ky) * g.kernel + kx;
                                acc += w[wi] * x[(c * g.height + iy as usize) * g.width + ix as usize];
                            }
                        }
                    }
                    out[(co * g.out_h + oy) * g.out_w + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn im2col_gemm_matches_direct_convolution() {
        for &(c, h, w, k, s, p) in &[(2, 7, 5, 3, 1, 1), (3, 9, 9, 4, 2, 1), (1, 6, 6, 1, 1, 0), (2, 8, 6, 4, 1, 2)] {
            let g = ConvGeom::new(c, h, w, k, s, p).unwrap();
            let x: Vec<f64> = (0..c * h * w).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
            let cout = 3;
            let wt: Vec<f64> = (0..cout * g.col_rows()).map(|i| ((i * 13 % 7) as f64) * 0.5 - 1.0).collect();
            let mut cols = vec![0.0; g.col_rows() * g.col_cols()];
            im2col(&x, &g, &mut cols);
            let mut out = vec![0.0; cout * g.col_cols()];
            let n = g.col_cols();
            let kk = g.col_rows();
            f64::gemm(cout, kk, n, 1.0, &wt, kk as isize, 1, &cols, n as isize, 1, 0.0, &mut out, n as isize, 1);
            assert_eq!(out, naive_conv(&x, &g, &wt, cout));
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let g = ConvGeom::new(2, 6, 7, 4, 2, 1).unwrap();
        let x: Vec<f64> = (0..2 * 6 * 7).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..g.col_rows() * g.col_cols()).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut cols = vec![0.0; y.len()];
        im2col(&x, &g, &mut cols);
        let mut back = vec![0.0; x.len()];
        col2im(&y, &g, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn conv_out_dim_arithmetic() {
        assert_eq!(conv_out_dim(256, 4, 2, 1), Some(128));
        assert_eq!(conv_out_dim(32, 4, 1, 1), Some(31));
        assert_eq!(conv_out_dim(2, 4, 1, 0), None);
    }
}
