//! Dense `H x W x C` tensors and the forward/backward kernels of every layer
//! the descriptor network uses.
//!
//! Storage is row-major with the channel index fastest (`(y, x, c)` order), so
//! a pixel's feature vector is one contiguous slice. All arithmetic is `f64`.

use crate::error::{ensure, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        ensure!(
            data.len() == height * width * channels,
            "tensor data length {} does not match {}x{}x{}",
            data.len(),
            height,
            width,
            channels
        );
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
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

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.index(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, value: f64) {
        let i = self.index(y, x, c);
        self.data[i] = value;
    }

    /// The feature vector at one pixel.
    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, y: usize, x: usize) -> &mut [f64] {
        let start = (y * self.width + x) * self.channels;
        &mut self.data[start..start + self.channels]
    }

    /// Copies channels `start..end` into a new tensor.
    pub fn slice_channels(&self, start: usize, end: usize) -> Result<Tensor> {
        ensure!(
            start < end && end <= self.channels,
            "channel range {start}..{end} invalid for {} channels",
            self.channels
        );
        let mut data = Vec::with_capacity(self.height * self.width * (end - start));
        for px in self.data.chunks_exact(self.channels) {
            data.extend_from_slice(&px[start..end]);
        }
        Tensor::from_vec(self.height, self.width, end - start, data)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn same_shape(&self, other: &Tensor) -> bool {
        self.shape() == other.shape()
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// A square, zero-padded, stride-1 convolution.
///
/// `kernel` is laid out `(out_channels, in_channels, k, k)` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    out_channels: usize,
    in_channels: usize,
    kernel_size: usize,
    dilation: usize,
    padding: usize,
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel_size: usize,
        dilation: usize,
        kernel: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        ensure!(
            out_channels >= 1 && in_channels >= 1,
            "conv layer needs at least one input and output channel"
        );
        ensure!(
            kernel_size == 1 || kernel_size == 3,
            "kernel size must be 1 or 3, got {kernel_size}"
        );
        ensure!(dilation >= 1, "dilation must be positive");
        ensure!(
            kernel.len() == out_channels * in_channels * kernel_size * kernel_size,
            "kernel has {} entries, expected {}",
            kernel.len(),
            out_channels * in_channels * kernel_size * kernel_size
        );
        ensure!(
            bias.len() == out_channels,
            "bias has {} entries, expected {out_channels}",
            bias.len()
        );
        Ok(Self {
            out_channels,
            in_channels,
            kernel_size,
            dilation,
            padding: (kernel_size - 1) / 2 * dilation,
            kernel,
            bias,
        })
    }

    pub fn zeros(out_channels: usize, in_channels: usize, kernel_size: usize, dilation: usize) -> Result<Self> {
        Self::new(
            out_channels,
            in_channels,
            kernel_size,
            dilation,
            vec![0.0; out_channels * in_channels * kernel_size * kernel_size],
            vec![0.0; out_channels],
        )
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    pub fn padding(&self) -> usize {
        self.padding
    }

    #[inline]
    pub fn kernel_index(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_channels + i) * self.kernel_size + ky) * self.kernel_size + kx
    }

    pub fn parameter_count(&self) -> usize {
        self.kernel.len() + self.bias.len()
    }

    /// Kernel regrouped as `[tap][in][out]` so the innermost loop runs over
    /// contiguous output channels.
    fn tap_major(&self) -> Vec<f64> {
        let (co, ci, k) = (self.out_channels, self.in_channels, self.kernel_size);
        let mut out = vec![0.0; k * k * ci * co];
        for o in 0..co {
            for i in 0..ci {
                for ky in 0..k {
                    for kx in 0..k {
                        let tap = ky * k + kx;
                        out[(tap * ci + i) * co + o] = self.kernel[self.kernel_index(o, i, ky, kx)];
                    }
                }
            }
        }
        out
    }
}

/// Gradient of a scalar objective with respect to one [`ConvLayer`].
#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrad {
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvGrad {
    pub fn zeros_like(layer: &ConvLayer) -> Self {
        Self {
            kernel: vec![0.0; layer.kernel.len()],
            bias: vec![0.0; layer.bias.len()],
        }
    }

    pub fn add_assign(&mut self, other: &ConvGrad) {
        for (a, b) in self.kernel.iter_mut().zip(&other.kernel) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }
}

/// Source offset for kernel tap `k` at output coordinate `pos`, or `None` when
/// the read falls into the zero padding.
#[inline]
fn tap_source(pos: usize, tap: usize, layer: &ConvLayer, extent: usize) -> Option<usize> {
    let src = pos as isize + (tap * layer.dilation) as isize - layer.padding as isize;
    (src >= 0 && (src as usize) < extent).then_some(src as usize)
}

pub fn conv2d(input: &Tensor, layer: &ConvLayer) -> Result<Tensor> {
    ensure!(
        input.channels == layer.in_channels,
        "conv2d: input has {} channels, layer expects {}",
        input.channels,
        layer.in_channels
    );
    let (h, w) = (input.height, input.width);
    let (ci, co, k) = (layer.in_channels, layer.out_channels, layer.kernel_size);
    let weights = layer.tap_major();
    let mut out = Tensor::zeros(h, w, co);
    for px in out.data.chunks_exact_mut(co) {
        px.copy_from_slice(&layer.bias);
    }
    for y in 0..h {
        for ky in 0..k {
            let Some(sy) = tap_source(y, ky, layer, h) else {
                continue;
            };
            for x in 0..w {
                let dst_start = (y * w + x) * co;
                let dst = &mut out.data[dst_start..dst_start + co];
                for kx in 0..k {
                    let Some(sx) = tap_source(x, kx, layer, w) else {
                        continue;
                    };
                    let tap = ky * k + kx;
                    let src = input.pixel(sy, sx);
                    for (i, &s) in src.iter().enumerate() {
                        if s == 0.0 {
                            continue;
                        }
                        let row = &weights[(tap * ci + i) * co..(tap * ci + i + 1) * co];
                        for (d, &wv) in dst.iter_mut().zip(row) {
                            *d += s * wv;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Returns `(d input, d layer)` for `conv2d(input, layer)` given the output gradient.
pub(crate) fn conv2d_backward(input: &Tensor, layer: &ConvLayer, grad_out: &Tensor) -> (Tensor, ConvGrad) {
    let (h, w) = (input.height, input.width);
    let (ci, co, k) = (layer.in_channels, layer.out_channels, layer.kernel_size);
    let weights = layer.tap_major();
    let mut grad_in = Tensor::zeros(h, w, ci);
    let mut grad_taps = vec![0.0; k * k * ci * co];
    let mut grad_bias = vec![0.0; co];
    for g in grad_out.data.chunks_exact(co) {
        for (b, v) in grad_bias.iter_mut().zip(g) {
            *b += v;
        }
    }
    for y in 0..h {
        for ky in 0..k {
            let Some(sy) = tap_source(y, ky, layer, h) else {
                continue;
            };
            for x in 0..w {
                let g = grad_out.pixel(y, x);
                if g.iter().all(|&v| v == 0.0) {
                    continue;
                }
                for kx in 0..k {
                    let Some(sx) = tap_source(x, kx, layer, w) else {
                        continue;
                    };
                    let tap = ky * k + kx;
                    let src_start = (sy * w + sx) * ci;
                    for i in 0..ci {
                        let off = (tap * ci + i) * co;
                        let row = &weights[off..off + co];
                        let dot: f64 = row.iter().zip(g).map(|(a, b)| a * b).sum();
                        grad_in.data[src_start + i] += dot;
                        let s = input.data[src_start + i];
                        if s != 0.0 {
                            for (gw, &gv) in grad_taps[off..off + co].iter_mut().zip(g) {
                                *gw += s * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    let mut grad_kernel = vec![0.0; layer.kernel.len()];
    for o in 0..co {
        for i in 0..ci {
            for ky in 0..k {
                for kx in 0..k {
                    let tap = ky * k + kx;
                    grad_kernel[layer.kernel_index(o, i, ky, kx)] = grad_taps[(tap * ci + i) * co + o];
                }
            }
        }
    }
    (
        grad_in,
        ConvGrad {
            kernel: grad_kernel,
            bias: grad_bias,
        },
    )
}

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in &mut out.data {
        *v = v.max(0.0);
    }
    out
}

/// Subgradient convention: the derivative at exactly zero is taken as 0.
pub(crate) fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut g = grad_out.clone();
    for (gv, &x) in g.data.iter_mut().zip(&input.data) {
        if x <= 0.0 {
            *gv = 0.0;
        }
    }
    g
}

/// Pooling windows after clamping to the image extent, per axis.
fn pool_windows(input: &Tensor, window: usize) -> (usize, usize) {
    (window.min(input.height), window.min(input.width))
}

/// Non-overlapping average pooling with stride equal to the window.
///
/// Edge blocks cover whatever remains and average over their actual area.
/// Output size is `ceil(H / window) x ceil(W / window)`.
pub fn avg_pool_blocks(input: &Tensor, window: usize) -> Result<Tensor> {
    ensure!(window >= 1, "pooling window must be at least 1");
    let (wy, wx) = pool_windows(input, window);
    let (oh, ow) = (input.height.div_ceil(wy), input.width.div_ceil(wx));
    let c = input.channels;
    let mut out = Tensor::zeros(oh, ow, c);
    for by in 0..oh {
        let y0 = by * wy;
        let y1 = (y0 + wy).min(input.height);
        for bx in 0..ow {
            let x0 = bx * wx;
            let x1 = (x0 + wx).min(input.width);
            let dst = out.pixel_mut(by, bx);
            for y in y0..y1 {
                for x in x0..x1 {
                    for (d, s) in dst.iter_mut().zip(input.pixel(y, x)) {
                        *d += s;
                    }
                }
            }
            let area = ((y1 - y0) * (x1 - x0)) as f64;
            for d in dst.iter_mut() {
                *d /= area;
            }
        }
    }
    Ok(out)
}

pub(crate) fn avg_pool_blocks_backward(input: &Tensor, window: usize, grad_out: &Tensor) -> Tensor {
    let (wy, wx) = pool_windows(input, window);
    let mut g = Tensor::zeros(input.height, input.width, input.channels);
    for y in 0..input.height {
        let by = y / wy;
        let rows = ((by * wy + wy).min(input.height) - by * wy) as f64;
        for x in 0..input.width {
            let bx = x / wx;
            let cols = ((bx * wx + wx).min(input.width) - bx * wx) as f64;
            let area = rows * cols;
            let src = grad_out.pixel(by, bx);
            for (d, s) in g.pixel_mut(y, x).iter_mut().zip(src) {
                *d = s / area;
            }
        }
    }
    g
}

/// Per-axis bilinear sampling table: for each output coordinate, the two
/// source indices and the weight of the second one.
fn resample_axis(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let ratio = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let u = ((o as f64 + 0.5) * ratio - 0.5).clamp(0.0, (n_in - 1) as f64);
            let i0 = u.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, u - i0 as f64)
        })
        .collect()
}

/// Center-aligned bilinear resize: source coordinate
/// `u = (x + 0.5) * W_in / W_out - 0.5`, clamped to the source extent.
pub fn bilinear_upsample(input: &Tensor, out_height: usize, out_width: usize) -> Result<Tensor> {
    ensure!(
        out_height >= 1 && out_width >= 1,
        "upsample target must be at least 1x1"
    );
    let rows = resample_axis(input.height, out_height);
    let cols = resample_axis(input.width, out_width);
    let c = input.channels;
    let mut out = Tensor::zeros(out_height, out_width, c);
    for (y, &(y0, y1, fy)) in rows.iter().enumerate() {
        for (x, &(x0, x1, fx)) in cols.iter().enumerate() {
            let (a, b) = (input.pixel(y0, x0), input.pixel(y0, x1));
            let (cc, d) = (input.pixel(y1, x0), input.pixel(y1, x1));
            let dst = out.pixel_mut(y, x);
            for ch in 0..c {
                let top = (1.0 - fx) * a[ch] + fx * b[ch];
                let bottom = (1.0 - fx) * cc[ch] + fx * d[ch];
                dst[ch] = (1.0 - fy) * top + fy * bottom;
            }
        }
    }
    Ok(out)
}

pub(crate) fn bilinear_upsample_backward(input: &Tensor, grad_out: &Tensor) -> Tensor {
    let rows = resample_axis(input.height, grad_out.height);
    let cols = resample_axis(input.width, grad_out.width);
    let c = input.channels;
    let mut g = Tensor::zeros(input.height, input.width, c);
    for (y, &(y0, y1, fy)) in rows.iter().enumerate() {
        for (x, &(x0, x1, fx)) in cols.iter().enumerate() {
            let src = grad_out.pixel(y, x);
            let taps = [
                (y0, x0, (1.0 - fy) * (1.0 - fx)),
                (y0, x1, (1.0 - fy) * fx),
                (y1, x0, fy * (1.0 - fx)),
                (y1, x1, fy * fx),
            ];
            for (ty, tx, wgt) in taps {
                if wgt == 0.0 {
                    continue;
                }
                for (d, s) in g.pixel_mut(ty, tx).iter_mut().zip(src) {
                    *d += wgt * s;
                }
            }
        }
    }
    g
}

pub const DEFAULT_EPSILON: f64 = 1e-10;

/// Per-pixel `d / max(|d|, epsilon)`.
pub fn l2_normalize_channels(input: &Tensor, epsilon: f64) -> Result<Tensor> {
    ensure!(epsilon > 0.0, "epsilon must be positive, got {epsilon}");
    let mut out = input.clone();
    for px in out.data.chunks_exact_mut(input.channels) {
        let norm = px.iter().map(|v| v * v).sum::<f64>().sqrt();
        let denom = norm.max(epsilon);
        for v in px.iter_mut() {
            *v /= denom;
        }
    }
    Ok(out)
}

pub(crate) fn l2_normalize_backward(input: &Tensor, epsilon: f64, grad_out: &Tensor) -> Tensor {
    let c = input.channels;
    let mut g = Tensor::zeros(input.height, input.width, c);
    for ((gx, x), gy) in g
        .data
        .chunks_exact_mut(c)
        .zip(input.data.chunks_exact(c))
        .zip(grad_out.data.chunks_exact(c))
    {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > epsilon {
            // d(x/|x|) = (g - y (y.g)) / |x| with y = x/|x|
            let dot: f64 = x.iter().zip(gy).map(|(a, b)| a * b).sum::<f64>() / norm;
            for ((d, &xv), &gv) in gx.iter_mut().zip(x).zip(gy) {
                *d = (gv - xv / norm * dot) / norm;
            }
        } else {
            for (d, &gv) in gx.iter_mut().zip(gy) {
                *d = gv / epsilon;
            }
        }
    }
    g
}

/// Stacks `b`'s channels after `a`'s. A zero-channel `b` is accepted and
/// returns `a` unchanged.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    ensure!(
        a.height == b.height && a.width == b.width,
        "concat: spatial sizes differ ({}x{} vs {}x{})",
        a.height,
        a.width,
        b.height,
        b.width
    );
    let c = a.channels + b.channels;
    let mut data = Vec::with_capacity(a.height * a.width * c);
    for y in 0..a.height {
        for x in 0..a.width {
            data.extend_from_slice(a.pixel(y, x));
            data.extend_from_slice(b.pixel(y, x));
        }
    }
    Ok(Tensor {
        height: a.height,
        width: a.width,
        channels: c,
        data,
    })
}

/// Empty-channel placeholder; only meaningful as the second concat operand.
pub fn empty_channels(height: usize, width: usize) -> Tensor {
    Tensor {
        height,
        width,
        channels: 0,
        data: Vec::new(),
    }
}

pub(crate) fn concat_backward(a_channels: usize, grad_out: &Tensor) -> (Tensor, Tensor) {
    let c = grad_out.channels;
    let (h, w) = (grad_out.height, grad_out.width);
    let mut ga = Vec::with_capacity(h * w * a_channels);
    let mut gb = Vec::with_capacity(h * w * (c - a_channels));
    for px in grad_out.data.chunks_exact(c) {
        ga.extend_from_slice(&px[..a_channels]);
        gb.extend_from_slice(&px[a_channels..]);
    }
    (
        Tensor {
            height: h,
            width: w,
            channels: a_channels,
            data: ga,
        },
        Tensor {
            height: h,
            width: w,
            channels: c - a_channels,
            data: gb,
        },
    )
}
