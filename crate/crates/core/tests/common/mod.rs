//! Independent reference implementations used as test oracles. They follow
//! the textbook definitions with plain loops and share no code with the
//! library kernels.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdn_core::matcher::Keypoint;
use rdn_core::tensor::ConvLayer;
use rdn_core::trainer::{Correspondence, NegativeSide};
use rdn_core::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Tensor {
    let data = (0..h * w * c).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(h, w, c, data).unwrap()
}

pub fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Tensor {
    let data = (0..h * w * 3).map(|_| rng.random_range(0.0..1.0)).collect();
    Tensor::from_vec(h, w, 3, data).unwrap()
}

pub fn random_layer(rng: &mut ChaCha8Rng, out_c: usize, in_c: usize, k: usize, dilation: usize) -> ConvLayer {
    let kernel = (0..out_c * in_c * k * k).map(|_| rng.random_range(-0.5..0.5)).collect();
    let bias = (0..out_c).map(|_| rng.random_range(-0.5..0.5)).collect();
    ConvLayer::new(out_c, in_c, k, dilation, kernel, bias).unwrap()
}

/// Zero-padded "same" convolution, straight from the definition.
pub fn naive_conv(input: &Tensor, layer: &ConvLayer) -> Tensor {
    let (h, w, _) = input.shape();
    let k = layer.kernel_size() as i64;
    let d = layer.dilation() as i64;
    let pad = (k - 1) / 2 * d;
    Tensor::from_fn(h, w, layer.out_channels(), |y, x, o| {
        let mut acc = layer.bias[o];
        for i in 0..layer.in_channels() {
            for ky in 0..k {
                for kx in 0..k {
                    let sy = y as i64 + ky * d - pad;
                    let sx = x as i64 + kx * d - pad;
                    if sy < 0 || sx < 0 || sy >= h as i64 || sx >= w as i64 {
                        continue;
                    }
                    let wgt = layer.kernel[((o * layer.in_channels() + i) * k as usize + ky as usize) * k as usize + kx as usize];
                    acc += wgt * input.get(sy as usize, sx as usize, i);
                }
            }
        }
        acc
    })
}

/// Mean over each block of the partition into `window`-sized tiles, where
/// the window is first clamped to the image extent on each axis.
pub fn block_mean(input: &Tensor, window: usize) -> Tensor {
    let (h, w, c) = input.shape();
    let (wy, wx) = (window.min(h), window.min(w));
    let oh = (h + wy - 1) / wy;
    let ow = (w + wx - 1) / wx;
    Tensor::from_fn(oh, ow, c, |by, bx, ch| {
        let cells: Vec<f64> = (by * wy..((by + 1) * wy).min(h))
            .flat_map(|y| (bx * wx..((bx + 1) * wx).min(w)).map(move |x| (y, x)))
            .map(|(y, x)| input.get(y, x, ch))
            .collect();
        cells.iter().sum::<f64>() / cells.len() as f64
    })
}

/// Bilinear resize with source coordinate `(o + 0.5) * n_in / n_out - 0.5`
/// clamped to `[0, n_in - 1]`.
pub fn upsample_formula(input: &Tensor, oh: usize, ow: usize) -> Tensor {
    let (h, w, c) = input.shape();
    let src = |o: usize, n_in: usize, n_out: usize| {
        ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64)
    };
    Tensor::from_fn(oh, ow, c, |y, x, ch| {
        let (v, u) = (src(y, h, oh), src(x, w, ow));
        let (y0, x0) = (v.floor() as usize, u.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
        let (a, b) = (v - y0 as f64, u - x0 as f64);
        (1.0 - a) * ((1.0 - b) * input.get(y0, x0, ch) + b * input.get(y0, x1, ch))
            + a * ((1.0 - b) * input.get(y1, x0, ch) + b * input.get(y1, x1, ch))
    })
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s
}

/// All mutually-nearest pairs, found by filling the full distance matrix.
pub fn brute_mutual_nn(a: &[Vec<f64>], b: &[Vec<f64>]) -> BTreeSet<(usize, usize)> {
    let d: Vec<Vec<f64>> = a.iter().map(|x| b.iter().map(|y| dist2(x, y)).collect()).collect();
    let argmin = |row: &mut dyn Iterator<Item = f64>| {
        let mut best = (usize::MAX, f64::INFINITY);
        for (j, v) in row.enumerate() {
            if v < best.1 {
                best = (j, v);
            }
        }
        best.0
    };
    let mut out = BTreeSet::new();
    for i in 0..a.len() {
        let j = argmin(&mut d[i].iter().copied());
        let back = argmin(&mut d.iter().map(|row| row[j]));
        if back == i {
            out.insert((i, j));
        }
    }
    out
}

/// Scans every pixel of both images; candidates are pixels on the
/// `stride` lattice farther than `radius` (Chebyshev) from the true match.
pub fn brute_hardest_negative(
    c: &Correspondence,
    f1: &Tensor,
    f2: &Tensor,
    stride: usize,
    radius: usize,
) -> Option<(f64, NegativeSide, Keypoint)> {
    // squared distance while scanning
    let mut best: Option<(f64, NegativeSide, Keypoint)> = None;
    let anchors = [
        (NegativeSide::Image2, f1.pixel(c.p1.y, c.p1.x), f2, c.p2),
        (NegativeSide::Image1, f2.pixel(c.p2.y, c.p2.x), f1, c.p1),
    ];
    for (side, anchor, field, center) in anchors {
        for y in 0..field.height() {
            for x in 0..field.width() {
                if x % stride != 0 || y % stride != 0 {
                    continue;
                }
                if x.abs_diff(center.x).max(y.abs_diff(center.y)) <= radius {
                    continue;
                }
                let d = dist2(anchor, field.pixel(y, x));
                if best.map_or(true, |b| d < b.0) {
                    best = Some((d, side, Keypoint::new(x, y)));
                }
            }
        }
    }
    best.map(|(d, side, k)| (d.sqrt(), side, k))
}
