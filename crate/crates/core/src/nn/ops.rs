//! Layer kernels on channels-last images.
//!
//! Convolutions lower to a single matrix product through an im2col patch
//! matrix whose rows are output pixels and whose columns run over
//! `(kernel_row, kernel_col, channel)`. Weight layouts:
//!
//! - convolution: `[kh, kw, in, out]`
//! - transposed convolution: `[kh, kw, out, in]`, so that sharing one array
//!   between the two makes them adjoint
//! - fully connected: `[out, in]`

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::{gemm, MatLayout, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    /// Zero padding so that the output is `ceil(input / stride)`.
    Same,
    Valid,
}

/// Spatial bookkeeping shared by convolution and its transpose.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub channels: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(
        in_h: usize,
        in_w: usize,
        channels: usize,
        (kh, kw): (usize, usize),
        stride: usize,
        padding: Padding,
    ) -> Result<Self> {
        if kh == 0 || kw == 0 || stride == 0 {
            return Err(Error::shape("kernel and stride must be positive"));
        }
        let (out_h, out_w, pad_top, pad_left) = match padding {
            Padding::Valid => {
                if in_h < kh || in_w < kw {
                    return Err(Error::shape(format!(
                        "{kh}x{kw} kernel does not fit a {in_h}x{in_w} input"
                    )));
                }
                ((in_h - kh) / stride + 1, (in_w - kw) / stride + 1, 0, 0)
            }
            Padding::Same => {
                let oh = in_h.div_ceil(stride);
                let ow = in_w.div_ceil(stride);
                let ph = ((oh - 1) * stride + kh).saturating_sub(in_h);
                let pw = ((ow - 1) * stride + kw).saturating_sub(in_w);
                (oh, ow, ph / 2, pw / 2)
            }
        };
        Ok(ConvGeometry {
            in_h,
            in_w,
            channels,
            kh,
            kw,
            stride,
            pad_top,
            pad_left,
            out_h,
            out_w,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.kh * self.kw * self.channels
    }

    pub fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Source pixel of kernel tap `(a, b)` for output pixel `(oy, ox)`.
    #[inline]
    fn source(&self, oy: usize, ox: usize, a: usize, b: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + a).checked_sub(self.pad_top)?;
        let x = (ox * self.stride + b).checked_sub(self.pad_left)?;
        (y < self.in_h && x < self.in_w).then_some((y, x))
    }

    /// Patch matrix `[out_pixels, patch_len]` of `x` (`[in_h, in_w, channels]`).
    pub fn im2col<T: Scalar>(&self, x: &[T], cols: &mut Vec<T>) {
        let c = self.channels;
        let pl = self.patch_len();
        cols.clear();
        cols.resize(self.out_pixels() * pl, T::zero());
        for oy in 0..self.out_h {
            for ox in 0..self.out_w {
                let row = &mut cols[(oy * self.out_w + ox) * pl..][..pl];
                for a in 0..self.kh {
                    for b in 0..self.kw {
                        if let Some((y, xx)) = self.source(oy, ox, a, b) {
                            let dst = (a * self.kw + b) * c;
                            row[dst..dst + c].copy_from_slice(&x[(y * self.in_w + xx) * c..][..c]);
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`ConvGeometry::im2col`]: scatter-adds patch rows into `x`.
    pub fn col2im<T: Scalar>(&self, cols: &[T], x: &mut [T]) {
        let c = self.channels;
        let pl = self.patch_len();
        for oy in 0..self.out_h {
            for ox in 0..self.out_w {
                let row = &cols[(oy * self.out_w + ox) * pl..][..pl];
                for a in 0..self.kh {
                    for b in 0..self.kw {
                        if let Some((y, xx)) = self.source(oy, ox, a, b) {
                            let src = (a * self.kw + b) * c;
                            let dst = &mut x[(y * self.in_w + xx) * c..][..c];
                            for (d, &s) in dst.iter_mut().zip(&row[src..src + c]) {
                                *d += s;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn expect_shape<T>(t: &Tensor<T>, shape: &[usize], what: &str) -> Result<()> {
    if t.shape() != shape {
        return Err(Error::shape(format!(
            "{what}: expected {shape:?}, got {:?}",
            t.shape()
        )));
    }
    Ok(())
}

/// Gradients of a parameterised layer.
#[derive(Clone, Debug)]
pub struct LayerGrads<T> {
    /// `None` when the caller did not ask for the input gradient.
    pub dx: Option<Tensor<T>>,
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
}

fn conv_geometry_for<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<(ConvGeometry, usize)> {
    let (h, wd, cin) = x.hwc()?;
    let [kh, kw, wcin, cout] = w.shape()[..] else {
        return Err(Error::shape(format!("conv weight rank: {:?}", w.shape())));
    };
    if wcin != cin {
        return Err(Error::shape(format!(
            "conv expects {wcin} input channels, got {cin}"
        )));
    }
    Ok((ConvGeometry::new(h, wd, cin, (kh, kw), stride, padding)?, cout))
}

/// 2D cross-correlation `y[p, o] = b[o] + sum x[p + tap, i] * w[tap, i, o]`.
pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>> {
    let (g, cout) = conv_geometry_for(x, w, stride, padding)?;
    expect_shape(b, &[cout], "conv bias")?;
    let mut cols = Vec::new();
    g.im2col(x.data(), &mut cols);
    let mut y = Tensor::zeros(&[g.out_h, g.out_w, cout]);
    for row in y.data_mut().chunks_exact_mut(cout) {
        row.copy_from_slice(b.data());
    }
    gemm(
        &cols,
        MatLayout::row_major(g.out_pixels(), g.patch_len()),
        w.data(),
        MatLayout::row_major(g.patch_len(), cout),
        T::one(),
        y.data_mut(),
        MatLayout::row_major(g.out_pixels(), cout),
    );
    Ok(y)
}

pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    stride: usize,
    padding: Padding,
    need_dx: bool,
) -> Result<LayerGrads<T>> {
    let (g, cout) = conv_geometry_for(x, w, stride, padding)?;
    expect_shape(dy, &[g.out_h, g.out_w, cout], "conv output gradient")?;
    let (m, k) = (g.out_pixels(), g.patch_len());
    let mut cols = Vec::new();
    g.im2col(x.data(), &mut cols);

    let mut dw = Tensor::zeros(w.shape());
    gemm(
        &cols,
        MatLayout::row_major(m, k).t(),
        dy.data(),
        MatLayout::row_major(m, cout),
        T::zero(),
        dw.data_mut(),
        MatLayout::row_major(k, cout),
    );
    let db = channel_sums(dy.data(), cout);

    let dx = if need_dx {
        let mut dcols = vec![T::zero(); m * k];
        gemm(
            dy.data(),
            MatLayout::row_major(m, cout),
            w.data(),
            MatLayout::row_major(k, cout).t(),
            T::zero(),
            &mut dcols,
            MatLayout::row_major(m, k),
        );
        let mut dx = Tensor::zeros(x.shape());
        g.col2im(&dcols, dx.data_mut());
        Some(dx)
    } else {
        None
    };
    Ok(LayerGrads { dx, dw, db })
}

fn channel_sums<T: Scalar>(data: &[T], channels: usize) -> Tensor<T> {
    let mut s = Tensor::zeros(&[channels]);
    for row in data.chunks_exact(channels) {
        for (acc, &v) in s.data_mut().iter_mut().zip(row) {
            *acc += v;
        }
    }
    s
}

fn tconv_geometry_for<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
) -> Result<(ConvGeometry, usize)> {
    let (h, wd, cin) = x.hwc()?;
    let [kh, kw, cout, wcin] = w.shape()[..] else {
        return Err(Error::shape(format!(
            "transposed conv weight rank: {:?}",
            w.shape()
        )));
    };
    if wcin != cin {
        return Err(Error::shape(format!(
            "transposed conv expects {wcin} input channels, got {cin}"
        )));
    }
    if h == 0 || wd == 0 {
        return Err(Error::shape("empty transposed conv input"));
    }
    let out_h = (h - 1) * stride + kh;
    let out_w = (wd - 1) * stride + kw;
    // geometry of the forward convolution this layer transposes
    let g = ConvGeometry::new(out_h, out_w, cout, (kh, kw), stride, Padding::Valid)?;
    debug_assert_eq!((g.out_h, g.out_w), (h, wd));
    Ok((g, cout))
}

/// Output size of a transposed convolution: `(in - 1) * stride + kernel`.
pub fn transpose_conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    let (g, cout) = tconv_geometry_for(x, w, stride)?;
    expect_shape(b, &[cout], "transposed conv bias")?;
    let (m, k, cin) = (g.out_pixels(), g.patch_len(), x.shape()[2]);
    let mut cols = vec![T::zero(); m * k];
    gemm(
        x.data(),
        MatLayout::row_major(m, cin),
        w.data(),
        MatLayout::row_major(k, cin).t(),
        T::zero(),
        &mut cols,
        MatLayout::row_major(m, k),
    );
    let mut y = Tensor::zeros(&[g.in_h, g.in_w, cout]);
    g.col2im(&cols, y.data_mut());
    for row in y.data_mut().chunks_exact_mut(cout) {
        for (v, &bb) in row.iter_mut().zip(b.data()) {
            *v += bb;
        }
    }
    Ok(y)
}

pub fn transpose_conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    stride: usize,
    need_dx: bool,
) -> Result<LayerGrads<T>> {
    let (g, cout) = tconv_geometry_for(x, w, stride)?;
    expect_shape(dy, &[g.in_h, g.in_w, cout], "transposed conv output gradient")?;
    let (m, k, cin) = (g.out_pixels(), g.patch_len(), x.shape()[2]);
    let mut dcols = Vec::new();
    g.im2col(dy.data(), &mut dcols);

    let mut dw = Tensor::zeros(w.shape());
    gemm(
        &dcols,
        MatLayout::row_major(m, k).t(),
        x.data(),
        MatLayout::row_major(m, cin),
        T::zero(),
        dw.data_mut(),
        MatLayout::row_major(k, cin),
    );
    let db = channel_sums(dy.data(), cout);
    let dx = if need_dx {
        let mut dx = Tensor::zeros(x.shape());
        gemm(
            &dcols,
            MatLayout::row_major(m, k),
            w.data(),
            MatLayout::row_major(k, cin),
            T::zero(),
            dx.data_mut(),
            MatLayout::row_major(m, cin),
        );
        Some(dx)
    } else {
        None
    };
    Ok(LayerGrads { dx, dw, db })
}

/// Max pooling; also returns, per output element, the flat input index of
/// the maximum (first in row-major window order on ties).
pub fn maxpool2d_forward<T: Scalar>(
    x: &Tensor<T>,
    size: usize,
    stride: usize,
) -> Result<(Tensor<T>, Vec<usize>)> {
    let (h, w, c) = x.hwc()?;
    let (oh, ow) = pool_output(h, w, size, stride)?;
    let mut y = Tensor::zeros(&[oh, ow, c]);
    let mut arg = vec![0usize; oh * ow * c];
    let xd = x.data();
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best = (oy * stride * w + ox * stride) * c + ch;
                for a in 0..size {
                    for b in 0..size {
                        let i = ((oy * stride + a) * w + ox * stride + b) * c + ch;
                        if xd[i] > xd[best] {
                            best = i;
                        }
                    }
                }
                let o = (oy * ow + ox) * c + ch;
                y.data_mut()[o] = xd[best];
                arg[o] = best;
            }
        }
    }
    Ok((y, arg))
}

pub fn pool_output(h: usize, w: usize, size: usize, stride: usize) -> Result<(usize, usize)> {
    if size == 0 || stride == 0 || h < size || w < size {
        return Err(Error::shape(format!(
            "{size}x{size} pool does not fit a {h}x{w} input"
        )));
    }
    if !(h - size).is_multiple_of(stride) || !(w - size).is_multiple_of(stride) {
        return Err(Error::shape(format!(
            "{h}x{w} input is not tiled by a {size}x{size}/{stride} pool"
        )));
    }
    Ok(((h - size) / stride + 1, (w - size) / stride + 1))
}

/// Routes each output gradient to its stored argmax.
pub fn maxpool2d_backward<T: Scalar>(
    x_shape: &[usize],
    argmax: &[usize],
    dy: &Tensor<T>,
) -> Result<Tensor<T>> {
    if argmax.len() != dy.len() {
        return Err(Error::shape("pool gradient does not match argmax table"));
    }
    let mut dx = Tensor::zeros(x_shape);
    for (&i, &g) in argmax.iter().zip(dy.data()) {
        dx.data_mut()[i] += g;
    }
    Ok(dx)
}

/// `y = W x + b` on the flattened input.
pub fn fully_connected_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<Tensor<T>> {
    let [out, inp] = w.shape()[..] else {
        return Err(Error::shape(format!("dense weight rank: {:?}", w.shape())));
    };
    if x.len() != inp {
        return Err(Error::shape(format!(
            "dense layer expects {inp} inputs, got {}",
            x.len()
        )));
    }
    expect_shape(b, &[out], "dense bias")?;
    let mut y = b.clone();
    gemm(
        w.data(),
        MatLayout::row_major(out, inp),
        x.data(),
        MatLayout::row_major(inp, 1),
        T::one(),
        y.data_mut(),
        MatLayout::row_major(out, 1),
    );
    Ok(y)
}

pub fn fully_connected_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    need_dx: bool,
) -> Result<LayerGrads<T>> {
    let [out, inp] = w.shape()[..] else {
        return Err(Error::shape(format!("dense weight rank: {:?}", w.shape())));
    };
    if x.len() != inp || dy.len() != out {
        return Err(Error::shape("dense gradient shapes"));
    }
    let mut dw = Tensor::zeros(w.shape());
    gemm(
        dy.data(),
        MatLayout::row_major(out, 1),
        x.data(),
        MatLayout::row_major(1, inp),
        T::zero(),
        dw.data_mut(),
        MatLayout::row_major(out, inp),
    );
    let db = Tensor::from_vec(&[out], dy.data().to_vec())?;
    let dx = if need_dx {
        let mut dx = Tensor::zeros(x.shape());
        gemm(
            w.data(),
            MatLayout::row_major(out, inp).t(),
            dy.data(),
            MatLayout::row_major(out, 1),
            T::zero(),
            dx.data_mut(),
            MatLayout::row_major(inp, 1),
        );
        Some(dx)
    } else {
        None
    };
    Ok(LayerGrads { dx, dw, db })
}

pub fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut y = x.clone();
    for v in y.data_mut() {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    }
    y
}

/// Gradient passes where the input was strictly positive.
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = dy.clone();
    for (g, &v) in dx.data_mut().iter_mut().zip(x.data()) {
        if !(v > T::zero()) {
            *g = T::zero();
        }
    }
    dx
}

/// Concatenates images along the channel axis.
pub fn concat_channels_forward<T: Scalar>(xs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = xs.first().ok_or_else(|| Error::shape("concat of nothing"))?;
    let (h, w, _) = first.hwc()?;
    let mut chans = Vec::with_capacity(xs.len());
    for x in xs {
        let (xh, xw, c) = x.hwc()?;
        if (xh, xw) != (h, w) {
            return Err(Error::shape(format!(
                "concat spatial mismatch: {h}x{w} vs {xh}x{xw}"
            )));
        }
        chans.push(c);
    }
    let total: usize = chans.iter().sum();
    let mut y = Tensor::zeros(&[h, w, total]);
    for p in 0..h * w {
        let mut off = 0;
        for (x, &c) in xs.iter().zip(&chans) {
            y.data_mut()[p * total + off..p * total + off + c]
                .copy_from_slice(&x.data()[p * c..(p + 1) * c]);
            off += c;
        }
    }
    Ok(y)
}

/// Splits a concatenated gradient back into per-input pieces.
pub fn concat_channels_backward<T: Scalar>(
    channels: &[usize],
    dy: &Tensor<T>,
) -> Result<Vec<Tensor<T>>> {
    let (h, w, total) = dy.hwc()?;
    if channels.iter().sum::<usize>() != total {
        return Err(Error::shape("concat gradient channel count"));
    }
    let mut out: Vec<Tensor<T>> = channels.iter().map(|&c| Tensor::zeros(&[h, w, c])).collect();
    for p in 0..h * w {
        let mut off = 0;
        for (t, &c) in out.iter_mut().zip(channels) {
            t.data_mut()[p * c..(p + 1) * c]
                .copy_from_slice(&dy.data()[p * total + off..p * total + off + c]);
            off += c;
        }
    }
    Ok(out)
}
