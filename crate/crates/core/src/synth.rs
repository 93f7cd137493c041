//! Synthetic supervision: random homographies, warped and photometrically
//! jittered image pairs with exact correspondences, procedural textures, and
//! the flat-region fixture.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{ensure, Error, Result};
use crate::geometry::{dlt_homography, ModelKind, PlanarModel, PointPair};
use crate::linalg::{mat3_apply, mat3_mul};
use crate::matcher::{uniform_grid, Keypoint};
use crate::tensor::Tensor;
use crate::trainer::{Correspondence, PairSample};

/// Correspondences are only taken from grid points at least this far from the border.
pub const CORRESPONDENCE_MARGIN: usize = 16;

/// Mean gradient magnitude (intensity units per pixel) below which a 9x9
/// neighbourhood counts as flat.
pub const FLAT_THRESHOLD: f64 = 0.01;
pub const FLAT_WINDOW_RADIUS: usize = 4;

/// Ranges of the random geometric and photometric perturbation.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpSpec {
    pub max_rotation_deg: f64,
    /// Scale is `exp(u)` with `u` uniform in `[-max_scale_log, max_scale_log]`.
    pub max_scale_log: f64,
    pub max_translation: f64,
    /// Per-corner jitter as a fraction of the frame size.
    pub max_perspective: f64,
    /// Additive brightness offset drawn from `[-brightness, brightness]`.
    pub brightness: f64,
    /// Contrast gain drawn from `[1 - contrast, 1 + contrast]`.
    pub contrast: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for WarpSpec {
    fn default() -> Self {
        Self {
            max_rotation_deg: 15.0,
            max_scale_log: 1.25f64.ln(),
            max_translation: 8.0,
            max_perspective: 0.05,
            brightness: 0.1,
            contrast: 0.2,
            noise_sigma: 0.01,
            seed: 0,
        }
    }
}

impl WarpSpec {
    pub fn none() -> Self {
        Self {
            max_rotation_deg: 0.0,
            max_scale_log: 0.0,
            max_translation: 0.0,
            max_perspective: 0.0,
            brightness: 0.0,
            contrast: 0.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("max_rotation_deg", self.max_rotation_deg),
            ("max_scale_log", self.max_scale_log),
            ("max_translation", self.max_translation),
            ("max_perspective", self.max_perspective),
            ("brightness", self.brightness),
            ("contrast", self.contrast),
            ("noise_sigma", self.noise_sigma),
        ];
        for (name, v) in fields {
            ensure!(v >= 0.0 && v.is_finite(), "warp range {name} must be non-negative, got {v}");
        }
        ensure!(self.contrast < 1.0, "contrast range must stay below 1");
        Ok(())
    }
}

fn symmetric(rng: &mut ChaCha8Rng, range: f64) -> f64 {
    if range == 0.0 {
        0.0
    } else {
        rng.random_range(-range..=range)
    }
}

const MAX_REDRAWS: usize = 16;

/// Rotation and log-uniform scale about the frame centre, then translation,
/// then independent jitter of the four frame corners.
pub fn random_homography(spec: &WarpSpec, width: usize, height: usize) -> Result<PlanarModel> {
    spec.validate()?;
    ensure!(width >= 2 && height >= 2, "frame must be at least 2x2");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = ((width - 1) as f64, (height - 1) as f64);
    let (cx, cy) = (w / 2.0, h / 2.0);
    for _ in 0..MAX_REDRAWS {
        let theta = symmetric(&mut rng, spec.max_rotation_deg).to_radians();
        let scale = symmetric(&mut rng, spec.max_scale_log).exp();
        let tx = symmetric(&mut rng, spec.max_translation);
        let ty = symmetric(&mut rng, spec.max_translation);
        let jitter: Vec<f64> = (0..8)
            .map(|i| symmetric(&mut rng, spec.max_perspective * if i % 2 == 0 { w } else { h }))
            .collect();

        let to_origin = [[1.0, 0.0, -cx], [0.0, 1.0, -cy], [0.0, 0.0, 1.0]];
        let (s, c) = theta.sin_cos();
        let rot_scale = [[scale * c, -scale * s, 0.0], [scale * s, scale * c, 0.0], [0.0, 0.0, 1.0]];
        let back = [[1.0, 0.0, cx + tx], [0.0, 1.0, cy + ty], [0.0, 0.0, 1.0]];
        let similarity = mat3_mul(&back, &mat3_mul(&rot_scale, &to_origin));

        let m = if spec.max_perspective == 0.0 {
            similarity
        } else {
            let corners = [[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]];
            let pairs: Vec<PointPair> = corners
                .iter()
                .enumerate()
                .map(|(k, &p)| {
                    let q = mat3_apply(&similarity, [p[0], p[1], 1.0]);
                    (p, [q[0] / q[2] + jitter[2 * k], q[1] / q[2] + jitter[2 * k + 1]])
                })
                .collect();
            match dlt_homography(&pairs) {
                Ok(model) => *model.matrix(),
                Err(_) => continue,
            }
        };
        let Ok(model) = PlanarModel::homography(m) else {
            continue;
        };
        // reject draws that fold the frame over the horizon
        let corner_w: Vec<f64> = [[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]]
            .iter()
            .map(|p| mat3_apply(model.matrix(), [p[0], p[1], 1.0])[2])
            .collect();
        if corner_w.iter().all(|&z| z > 0.0) || corner_w.iter().all(|&z| z < 0.0) {
            return Ok(model);
        }
    }
    Err(Error::Degenerate(format!(
        "no invertible homography after {MAX_REDRAWS} draws"
    )))
}

/// Per-pixel visibility in both frames.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl ValidMask {
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }
}

/// Rounds coordinates that are within `1e-9` of an integer, so integer shifts
/// resample exactly.
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

fn bilinear_at(image: &Tensor, sx: f64, sy: f64, out: &mut [f64]) {
    let (w, h) = (image.width(), image.height());
    let x0 = (sx.floor() as usize).min(w - 1);
    let y0 = (sy.floor() as usize).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
    let (a, b, c, d) = (image.pixel(y0, x0), image.pixel(y0, x1), image.pixel(y1, x0), image.pixel(y1, x1));
    for (ch, o) in out.iter_mut().enumerate() {
        let top = if fx == 0.0 { a[ch] } else { (1.0 - fx) * a[ch] + fx * b[ch] };
        let bottom = if fx == 0.0 { c[ch] } else { (1.0 - fx) * c[ch] + fx * d[ch] };
        *o = if fy == 0.0 { top } else { (1.0 - fy) * top + fy * bottom };
    }
}

/// Inverse warping: output pixel `q` samples the input at `H^-1 q` with
/// bilinear interpolation. Pixels whose source leaves the frame are zero and
/// marked invalid.
pub fn warp_image(image: &Tensor, model: &PlanarModel) -> Result<(Tensor, ValidMask)> {
    ensure!(model.kind() == ModelKind::Homography, "warp needs a homography");
    let inv = model.inverse()?;
    let (w, h, c) = (image.width(), image.height(), image.channels());
    let mut out = Tensor::zeros(h, w, c);
    let mut mask = ValidMask {
        width: w,
        height: h,
        data: vec![false; w * h],
    };
    let (max_x, max_y) = ((w - 1) as f64, (h - 1) as f64);
    for y in 0..h {
        for x in 0..w {
            let s = inv.project([x as f64, y as f64]);
            let (sx, sy) = (snap(s[0]), snap(s[1]));
            if !(sx >= 0.0 && sy >= 0.0 && sx <= max_x && sy <= max_y) {
                continue;
            }
            bilinear_at(image, sx, sy, out.pixel_mut(y, x));
            mask.data[y * w + x] = true;
        }
    }
    Ok((out, mask))
}

/// Two views of a scene with ground truth.
#[derive(Clone, Debug)]
pub struct TrainingPair {
    pub image1: Tensor,
    pub image2: Tensor,
    /// Maps image-1 pixels to image-2 pixels.
    pub homography: PlanarModel,
    pub correspondences: Vec<Correspondence>,
    pub mask: ValidMask,
}

impl TrainingPair {
    pub fn sample(&self) -> PairSample<'_> {
        PairSample {
            image1: &self.image1,
            image2: &self.image2,
            correspondences: &self.correspondences,
        }
    }
}

/// Grid points of a `width x height` image 1 whose rounded projections land
/// on valid pixels of image 2.
pub fn grid_correspondences(
    width: usize,
    height: usize,
    model: &PlanarModel,
    mask: &ValidMask,
    stride: usize,
) -> Result<Vec<Correspondence>> {
    let grid = uniform_grid(height, width, stride, CORRESPONDENCE_MARGIN)?;
    let mut out = Vec::new();
    for p1 in grid {
        let q = model.project(p1.as_point());
        let (qx, qy) = (q[0].round(), q[1].round());
        if !(qx >= 0.0 && qy >= 0.0 && qx < mask.width as f64 && qy < mask.height as f64) {
            continue;
        }
        let p2 = Keypoint::new(qx as usize, qy as usize);
        if mask.get(p2.x, p2.y) {
            out.push(Correspondence { p1, p2 });
        }
    }
    Ok(out)
}

/// Warps `image` by a random homography, jitters brightness, contrast and
/// noise on the valid part of the second view, and collects correspondences
/// on a grid of the first view.
pub fn make_pair(image: &Tensor, spec: &WarpSpec, grid_stride: usize) -> Result<TrainingPair> {
    let (w, h) = (image.width(), image.height());
    let homography = random_homography(spec, w, h)?;
    let (mut image2, mask) = warp_image(image, &homography)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let offset = symmetric(&mut rng, spec.brightness);
    let gain = 1.0 + symmetric(&mut rng, spec.contrast);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Contract(e.to_string()))?;
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let n = if spec.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            for v in image2.pixel_mut(y, x) {
                *v = (gain * *v + offset + n).clamp(0.0, 1.0);
            }
        }
    }

    let correspondences = grid_correspondences(w, h, &homography, &mask, grid_stride)?;
    if correspondences.is_empty() {
        return Err(Error::Fixture(format!(
            "no correspondence survives the warp (seed {})",
            spec.seed
        )));
    }
    Ok(TrainingPair {
        image1: image.clone(),
        image2,
        homography,
        correspondences,
        mask,
    })
}

pub fn crop(image: &Tensor, x0: usize, y0: usize, width: usize, height: usize) -> Result<Tensor> {
    ensure!(
        x0 + width <= image.width() && y0 + height <= image.height() && width > 0 && height > 0,
        "crop {width}x{height}+{x0}+{y0} exceeds {}x{}",
        image.width(),
        image.height()
    );
    Ok(Tensor::from_fn(height, width, image.channels(), |y, x, c| image.get(y0 + y, x0 + x, c)))
}

fn gray(height: usize, width: usize, values: &[f64]) -> Tensor {
    Tensor::from_fn(height, width, 3, |y, x, _| values[y * width + x])
}

/// Sum of random plane waves around mid-grey; smooth everywhere.
pub fn smooth_texture(height: usize, width: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = plane_waves(&mut rng, height, width, 6, 0.04..0.3, 0.08);
    gray(height, width, &values)
}

fn plane_waves(
    rng: &mut ChaCha8Rng,
    height: usize,
    width: usize,
    count: usize,
    freq: std::ops::Range<f64>,
    amplitude: f64,
) -> Vec<f64> {
    let waves: Vec<(f64, f64, f64, f64)> = (0..count)
        .map(|_| {
            let f = rng.random_range(freq.clone());
            let theta = rng.random_range(0.0..std::f64::consts::PI);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let a = amplitude * rng.random_range(0.5..1.0);
            (f * theta.cos(), f * theta.sin(), phase, a)
        })
        .collect();
    let mut out = vec![0.5; height * width];
    for y in 0..height {
        for x in 0..width {
            let v: f64 = waves
                .iter()
                .map(|&(fx, fy, ph, a)| a * (fx * x as f64 + fy * y as f64 + ph).sin())
                .sum();
            out[y * width + x] += v;
        }
    }
    out
}

fn box_blur3(values: &[f64], height: usize, width: usize) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for y in 0..height {
        for x in 0..width {
            let (mut acc, mut n) = (0.0, 0.0);
            for yy in y.saturating_sub(1)..(y + 2).min(height) {
                for xx in x.saturating_sub(1)..(x + 2).min(width) {
                    acc += values[yy * width + xx];
                    n += 1.0;
                }
            }
            out[y * width + x] = acc / n;
        }
    }
    out
}

/// Plane waves overlaid with random rectangles and discs of random grey
/// level, lightly blurred. Structure at several scales, so every region is
/// distinctive.
pub fn procedural_texture(height: usize, width: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = plane_waves(&mut rng, height, width, 5, 0.03..0.35, 0.12);
    let shapes = (height * width / 160).max(8);
    for _ in 0..shapes {
        let cx = rng.random_range(0.0..width as f64);
        let cy = rng.random_range(0.0..height as f64);
        let rx = rng.random_range(1.5..9.0);
        let ry = rng.random_range(1.5..9.0);
        let level = rng.random_range(0.0..1.0);
        let disc = rng.random_bool(0.5);
        fill_shape(&mut values, height, width, (cx, cy, rx, ry), disc, |_, _| level);
    }
    let values: Vec<f64> = box_blur3(&values, height, width).into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    gray(height, width, &values)
}

/// Scene-like image: a uniform background with large flat shapes of random
/// grey level and a few small textured patches, lightly blurred. Most pixels
/// are flat, so only context tells many of them apart.
pub fn scene_image(height: usize, width: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![rng.random_range(0.2..0.8); height * width];
    let area = (height * width) as f64 / 4096.0;
    let big = (6.0 * area).round().max(3.0) as usize;
    for _ in 0..big {
        let cx = rng.random_range(0.0..width as f64);
        let cy = rng.random_range(0.0..height as f64);
        let rx = rng.random_range(6.0..20.0);
        let ry = rng.random_range(6.0..20.0);
        let level = rng.random_range(0.0..1.0);
        let disc = rng.random_bool(0.4);
        fill_shape(&mut values, height, width, (cx, cy, rx, ry), disc, |_, _| level);
    }
    let patches = (4.0 * area).round().max(2.0) as usize;
    for _ in 0..patches {
        let cx = rng.random_range(0.0..width as f64);
        let cy = rng.random_range(0.0..height as f64);
        let r = rng.random_range(3.0..8.0);
        let pattern: Box<dyn Fn(usize, usize) -> f64> = if rng.random_bool(0.5) {
            Box::new(stripes(&mut rng))
        } else {
            Box::new(checker(&mut rng))
        };
        fill_shape(&mut values, height, width, (cx, cy, r, r), false, pattern);
    }
    let values: Vec<f64> = box_blur3(&values, height, width).into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    gray(height, width, &values)
}

fn fill_shape(
    values: &mut [f64],
    height: usize,
    width: usize,
    (cx, cy, rx, ry): (f64, f64, f64, f64),
    disc: bool,
    level: impl Fn(usize, usize) -> f64,
) {
    let (y0, y1) = ((cy - ry).floor().max(0.0) as usize, ((cy + ry).ceil().max(0.0) as usize).min(height));
    let (x0, x1) = ((cx - rx).floor().max(0.0) as usize, ((cx + rx).ceil().max(0.0) as usize).min(width));
    for y in y0..y1 {
        for x in x0..x1 {
            let (dx, dy) = ((x as f64 - cx) / rx, (y as f64 - cy) / ry);
            if !disc || dx * dx + dy * dy <= 1.0 {
                values[y * width + x] = level(x, y);
            }
        }
    }
}

/// Axis-aligned pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn center(&self) -> Keypoint {
        Keypoint::new((self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2)
    }

    fn grow(&self, by: usize) -> Rect {
        Rect {
            x0: self.x0 - by,
            y0: self.y0 - by,
            x1: self.x1 + by,
            y1: self.y1 + by,
        }
    }
}

pub const FLAT_LEVEL: f64 = 0.5;

/// Positions of the two flat squares and the width of their textured borders
/// for a fixture of the given size.
pub fn flat_fixture_layout(size: usize) -> ([Rect; 2], usize) {
    let band = (size / 16).max(4);
    let side = size / 3;
    let top = (size - side) / 2;
    let rects = [size / 4, 3 * size / 4].map(|cx| Rect {
        x0: cx - side / 2,
        y0: top,
        x1: cx - side / 2 + side,
        y1: top + side,
    });
    (rects, band)
}

fn stripes(rng: &mut ChaCha8Rng) -> impl Fn(usize, usize) -> f64 {
    let f = rng.random_range(0.6..1.2);
    let theta = rng.random_range(0.0..std::f64::consts::PI);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let (fx, fy) = (f * theta.cos(), f * theta.sin());
    move |x, y| 0.5 + 0.45 * (fx * x as f64 + fy * y as f64 + phase).sin()
}

fn checker(rng: &mut ChaCha8Rng) -> impl Fn(usize, usize) -> f64 {
    let cell = rng.random_range(2..5usize);
    let levels: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..1.0)).collect();
    move |x, y| levels[((y / cell) * 7 + (x / cell) * 13) % levels.len()]
}

/// Textured background with two identical flat squares, each framed by a
/// different texture. Locally the square interiors are indistinguishable;
/// only context beyond the frame tells them apart.
pub fn flat_fixture(size: usize, seed: u64) -> Result<Tensor> {
    ensure!(size >= 64, "flat fixture needs size >= 64, got {size}");
    let mut image = procedural_texture(size, size, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let (rects, band) = flat_fixture_layout(size);
    let framed: Vec<(Rect, Box<dyn Fn(usize, usize) -> f64>)> = vec![
        (rects[0], Box::new(stripes(&mut rng))),
        (rects[1], Box::new(checker(&mut rng))),
    ];
    for (rect, pattern) in &framed {
        let outer = rect.grow(band);
        for y in outer.y0..outer.y1 {
            for x in outer.x0..outer.x1 {
                let v = if rect.contains(x, y) { FLAT_LEVEL } else { pattern(x, y) };
                for c in image.pixel_mut(y, x) {
                    *c = v;
                }
            }
        }
    }
    Ok(image)
}

/// Per-pixel gradient magnitude of the channel-mean intensity, by central
/// differences (one-sided at the border).
pub fn gradient_magnitude(image: &Tensor) -> Vec<f64> {
    let (w, h) = (image.width(), image.height());
    let c = image.channels() as f64;
    let g: Vec<f64> = image.data().chunks_exact(image.channels()).map(|p| p.iter().sum::<f64>() / c).collect();
    let at = |x: usize, y: usize| g[y * w + x];
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
            let gx = if xr > xl { (at(xr, y) - at(xl, y)) / (xr - xl) as f64 } else { 0.0 };
            let gy = if yd > yu { (at(x, yd) - at(x, yu)) / (yd - yu) as f64 } else { 0.0 };
            out[y * w + x] = gx.hypot(gy);
        }
    }
    out
}

/// Mean of `grad` over the `(2r+1)^2` window around `kp`, clipped to the image.
pub fn mean_gradient_around(grad: &[f64], width: usize, height: usize, kp: Keypoint, radius: usize) -> f64 {
    let (mut acc, mut n) = (0.0, 0usize);
    for y in kp.y.saturating_sub(radius)..(kp.y + radius + 1).min(height) {
        for x in kp.x.saturating_sub(radius)..(kp.x + radius + 1).min(width) {
            acc += grad[y * width + x];
            n += 1;
        }
    }
    acc / n as f64
}

/// Flat / textured label per keypoint using [`FLAT_THRESHOLD`] over 9x9 windows.
pub fn flat_keypoints(image: &Tensor, keypoints: &[Keypoint]) -> Vec<bool> {
    let grad = gradient_magnitude(image);
    keypoints
        .iter()
        .map(|&k| mean_gradient_around(&grad, image.width(), image.height(), k, FLAT_WINDOW_RADIUS) < FLAT_THRESHOLD)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_spec_is_identity() {
        let h = random_homography(&WarpSpec::none().with_seed(5), 64, 64).unwrap();
        assert_eq!(h, PlanarModel::identity());
    }

    #[test]
    fn seeded_draws_repeat() {
        let spec = WarpSpec::default().with_seed(42);
        assert_eq!(random_homography(&spec, 64, 64).unwrap(), random_homography(&spec, 64, 64).unwrap());
        assert_ne!(
            random_homography(&spec, 64, 64).unwrap(),
            random_homography(&spec.clone().with_seed(43), 64, 64).unwrap()
        );
    }

    #[test]
    fn identity_warp_is_exact() {
        let img = procedural_texture(20, 24, 1);
        let (out, mask) = warp_image(&img, &PlanarModel::identity()).unwrap();
        assert_eq!(out, img);
        assert_eq!(mask.count(), 20 * 24);
    }

    #[test]
    fn integer_shift_is_pixel_exact() {
        let img = procedural_texture(16, 16, 2);
        let (out, mask) = warp_image(&img, &PlanarModel::translation(3.0, 0.0)).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                assert_eq!(mask.get(x, y), x >= 3);
                if x >= 3 {
                    assert_eq!(out.pixel(y, x), img.pixel(y, x - 3));
                } else {
                    assert!(out.pixel(y, x).iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    #[test]
    fn identity_pair_uses_interior_grid() {
        let img = procedural_texture(64, 64, 3);
        let pair = make_pair(&img, &WarpSpec::none(), 8).unwrap();
        assert_eq!(pair.correspondences.len(), 16);
        assert!(pair.correspondences.iter().all(|c| c.p1 == c.p2));
        assert_eq!(pair.image2, img);
    }

    #[test]
    fn fixture_requires_size() {
        assert!(flat_fixture(32, 0).is_err());
    }

    #[test]
    fn flat_labels_on_fixture() {
        let img = flat_fixture(96, 4).unwrap();
        let (rects, _) = flat_fixture_layout(96);
        let centers: Vec<Keypoint> = rects.iter().map(Rect::center).collect();
        assert_eq!(flat_keypoints(&img, &centers), vec![true, true]);
    }
}
