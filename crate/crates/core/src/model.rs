//! The region-based descriptor network.
//!
//! ```text
//! image (H x W x 3)
//!   └─ FEN: six 3x3 dilated convs ──────────────► d_low  (H x W x C)
//!        └─ HFFM: for each pyramid window w:
//!             avg-pool(w) → 1x1 conv → ReLU → upsample to H x W
//!           concat of the four branches ─────────► d_high (H x W x C)
//!   concat(d_low, d_high) → per-pixel L2 norm ──► descriptors (H x W x 2C)
//! ```
//!
//! Every convolution is zero-padded and stride 1, so all feature maps stay at
//! full input resolution; the FEN widens its receptive field with dilation
//! instead of downsampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ensure, Error, Result};
use crate::matcher::Keypoint;
use crate::tape::{GradTape, ParamId, Var};
use crate::tensor::{l2_normalize_channels, ConvGrad, ConvLayer, Tensor, DEFAULT_EPSILON};

pub const FEN_DEPTH: usize = 6;
pub const PYRAMID_LEVELS: usize = 4;

/// Named width presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    /// 32/32/64/64/128/128 channels, 256-d descriptors.
    Full,
    /// 8/8/16/16/32/32 channels, 64-d descriptors. Used for fast training and tests.
    Quarter,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Profile::Full),
            "quarter" => Ok(Profile::Quarter),
            other => Err(Error::Contract(format!(
                "unknown profile {other:?} (expected full or quarter)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RdnConfig {
    pub fen_channels: Vec<usize>,
    pub fen_dilations: Vec<usize>,
    /// Pooling window sizes in pixels, largest first.
    pub spp_windows: Vec<usize>,
    pub branch_channels: usize,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for RdnConfig {
    fn default() -> Self {
        Self::profile(Profile::Full)
    }
}

impl RdnConfig {
    pub fn profile(profile: Profile) -> Self {
        let fen_channels = match profile {
            Profile::Full => vec![32, 32, 64, 64, 128, 128],
            Profile::Quarter => vec![8, 8, 16, 16, 32, 32],
        };
        let branch_channels = fen_channels[FEN_DEPTH - 1] / PYRAMID_LEVELS;
        Self {
            fen_channels,
            fen_dilations: vec![1, 1, 2, 2, 4, 4],
            spp_windows: vec![64, 32, 16, 8],
            branch_channels,
            epsilon: DEFAULT_EPSILON,
            seed: 0,
        }
    }

    pub fn quarter() -> Self {
        Self::profile(Profile::Quarter)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn fen_out_channels(&self) -> usize {
        self.fen_channels[FEN_DEPTH - 1]
    }

    pub fn descriptor_dim(&self) -> usize {
        2 * self.fen_out_channels()
    }

    /// Radius in pixels of the FEN receptive field (each 3x3 layer adds its dilation).
    pub fn fen_receptive_radius(&self) -> usize {
        self.fen_dilations.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.fen_channels.len() == FEN_DEPTH,
            "fen_channels needs {FEN_DEPTH} entries, got {}",
            self.fen_channels.len()
        );
        ensure!(
            self.fen_dilations.len() == FEN_DEPTH,
            "fen_dilations needs {FEN_DEPTH} entries, got {}",
            self.fen_dilations.len()
        );
        ensure!(
            self.fen_channels.iter().all(|&c| c >= 1),
            "fen channel counts must be positive"
        );
        ensure!(
            self.fen_dilations.iter().all(|&d| d >= 1),
            "fen dilations must be positive"
        );
        ensure!(
            self.fen_out_channels() % PYRAMID_LEVELS == 0,
            "last fen width {} is not divisible by {PYRAMID_LEVELS}",
            self.fen_out_channels()
        );
        ensure!(
            self.spp_windows.len() == PYRAMID_LEVELS,
            "spp_windows needs {PYRAMID_LEVELS} entries, got {}",
            self.spp_windows.len()
        );
        ensure!(
            self.spp_windows.iter().all(|&w| w >= 1)
                && self.spp_windows.windows(2).all(|p| p[0] > p[1]),
            "spp_windows must be strictly decreasing and positive: {:?}",
            self.spp_windows
        );
        ensure!(
            self.branch_channels * PYRAMID_LEVELS == self.fen_out_channels(),
            "{PYRAMID_LEVELS} branches of {} channels do not reassemble to {}",
            self.branch_channels,
            self.fen_out_channels()
        );
        ensure!(self.epsilon > 0.0, "epsilon must be positive");
        Ok(())
    }

    /// `(out, in, kernel, dilation)` of every layer in storage order: six FEN
    /// layers followed by the four pyramid reducers.
    pub fn layer_shapes(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut shapes = Vec::with_capacity(FEN_DEPTH + PYRAMID_LEVELS);
        let mut in_c = 3;
        for (&c, &d) in self.fen_channels.iter().zip(&self.fen_dilations) {
            shapes.push((c, in_c, 3, d));
            in_c = c;
        }
        for _ in 0..PYRAMID_LEVELS {
            shapes.push((self.branch_channels, in_c, 1, 1));
        }
        shapes
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RdnWeights {
    pub fen: Vec<ConvLayer>,
    pub reducers: Vec<ConvLayer>,
}

/// Parameter id of FEN layer `i` on a tape.
pub fn fen_param(i: usize) -> ParamId {
    i
}

/// Parameter id of pyramid reducer `j` on a tape.
pub fn reducer_param(j: usize) -> ParamId {
    FEN_DEPTH + j
}

impl RdnWeights {
    pub fn layers(&self) -> impl Iterator<Item = &ConvLayer> {
        self.fen.iter().chain(&self.reducers)
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut ConvLayer> {
        self.fen.iter_mut().chain(self.reducers.iter_mut())
    }

    pub fn layer_names() -> Vec<String> {
        (1..=FEN_DEPTH)
            .map(|i| format!("fen{i}"))
            .chain((0..PYRAMID_LEVELS).map(|j| format!("spp{j}")))
            .collect()
    }

    /// Builds weights from layers in storage order.
    pub fn from_layers(mut layers: Vec<ConvLayer>) -> Result<Self> {
        ensure!(
            layers.len() == FEN_DEPTH + PYRAMID_LEVELS,
            "expected {} layers, got {}",
            FEN_DEPTH + PYRAMID_LEVELS,
            layers.len()
        );
        let reducers = layers.split_off(FEN_DEPTH);
        Ok(Self { fen: layers, reducers })
    }

    pub fn validate(&self, config: &RdnConfig) -> Result<()> {
        config.validate()?;
        let shapes = config.layer_shapes();
        ensure!(
            self.fen.len() == FEN_DEPTH && self.reducers.len() == PYRAMID_LEVELS,
            "weights have {} fen and {} pyramid layers",
            self.fen.len(),
            self.reducers.len()
        );
        for ((layer, shape), name) in self.layers().zip(shapes).zip(Self::layer_names()) {
            let have = (
                layer.out_channels(),
                layer.in_channels(),
                layer.kernel_size(),
                layer.dilation(),
            );
            ensure!(have == shape, "layer {name} has shape {have:?}, config expects {shape:?}");
            ensure!(
                layer.kernel.iter().chain(&layer.bias).all(|v| v.is_finite()),
                "layer {name} has non-finite weights"
            );
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().map(ConvLayer::parameter_count).sum()
    }

    /// Every weight rounded through `f32`, as stored on disk.
    pub fn quantized(&self) -> Self {
        let mut q = self.clone();
        for layer in q.layers_mut() {
            for v in layer.kernel.iter_mut().chain(layer.bias.iter_mut()) {
                *v = *v as f32 as f64;
            }
        }
        q
    }

    /// Flat `(name, values)` blocks: kernel then bias for each layer.
    pub fn to_blocks(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = Vec::new();
        for (layer, name) in self.layers().zip(Self::layer_names()) {
            out.push((format!("{name}.kernel"), layer.kernel.clone()));
            out.push((format!("{name}.bias"), layer.bias.clone()));
        }
        out
    }

    /// Inverse of [`RdnWeights::to_blocks`]; block sizes must match.
    pub fn set_from_blocks(&mut self, blocks: &[(String, Vec<f64>)]) {
        for (i, layer) in self.layers_mut().enumerate() {
            layer.kernel.copy_from_slice(&blocks[2 * i].1);
            layer.bias.copy_from_slice(&blocks[2 * i + 1].1);
        }
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in self.layers_mut() {
            out.push(layer.kernel.as_mut_slice());
            out.push(layer.bias.as_mut_slice());
        }
        out
    }
}

/// Gradients for every layer, in storage order.
#[derive(Clone, Debug, PartialEq)]
pub struct RdnGrads {
    pub layers: Vec<ConvGrad>,
}

impl RdnGrads {
    pub fn zeros_like(weights: &RdnWeights) -> Self {
        Self {
            layers: weights.layers().map(ConvGrad::zeros_like).collect(),
        }
    }

    pub fn accumulate(&mut self, params: &std::collections::BTreeMap<ParamId, ConvGrad>) {
        for (&id, g) in params {
            self.layers[id].add_assign(g);
        }
    }

    /// Same layout as [`RdnWeights::to_blocks`].
    pub fn to_blocks(&self) -> Vec<Vec<f64>> {
        self.layers
            .iter()
            .flat_map(|g| [g.kernel.clone(), g.bias.clone()])
            .collect()
    }

    pub fn block_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|g| [g.kernel.as_slice(), g.bias.as_slice()])
            .collect()
    }
}

/// He-style initialization: kernel entries `N(0, 2 / fan_in)`, zero biases.
pub fn init_weights(config: &RdnConfig) -> Result<RdnWeights> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let layers = config
        .layer_shapes()
        .into_iter()
        .map(|(out_c, in_c, k, dil)| {
            let fan_in = (in_c * k * k) as f64;
            let scale = (2.0 / fan_in).sqrt();
            let kernel = (0..out_c * in_c * k * k)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * scale
                })
                .collect();
            ConvLayer::new(out_c, in_c, k, dil, kernel, vec![0.0; out_c])
        })
        .collect::<Result<Vec<_>>>()?;
    RdnWeights::from_layers(layers)
}

pub fn fen_forward_taped(tape: &mut GradTape, image: Var, weights: &RdnWeights) -> Result<Var> {
    ensure!(
        tape.value(image).channels() == 3,
        "fen expects a 3-channel image, got {} channels",
        tape.value(image).channels()
    );
    let mut x = image;
    for (i, layer) in weights.fen.iter().enumerate() {
        x = tape.conv2d(x, layer, fen_param(i))?;
        if i + 1 < weights.fen.len() {
            x = tape.relu(x);
        }
    }
    Ok(x)
}

pub fn hffm_forward_taped(
    tape: &mut GradTape,
    d_low: Var,
    weights: &RdnWeights,
    config: &RdnConfig,
) -> Result<Var> {
    let (h, w, c) = tape.value(d_low).shape();
    ensure!(
        c == config.fen_out_channels(),
        "hffm expects {} channels, got {c}",
        config.fen_out_channels()
    );
    let mut fused: Option<Var> = None;
    for (j, (&window, reducer)) in config.spp_windows.iter().zip(&weights.reducers).enumerate() {
        let pooled = tape.avg_pool_blocks(d_low, window)?;
        let reduced = tape.conv2d(pooled, reducer, reducer_param(j))?;
        let act = tape.relu(reduced);
        let up = tape.bilinear_upsample(act, h, w)?;
        fused = Some(match fused {
            None => up,
            Some(prev) => tape.concat_channels(prev, up)?,
        });
    }
    fused.ok_or_else(|| Error::Contract("no pyramid levels configured".into()))
}

/// Records the full network on `tape` and returns the normalized descriptor variable.
pub fn describe_taped(
    tape: &mut GradTape,
    image: Var,
    weights: &RdnWeights,
    config: &RdnConfig,
) -> Result<Var> {
    let d_low = fen_forward_taped(tape, image, weights)?;
    let d_high = hffm_forward_taped(tape, d_low, weights, config)?;
    let fused = tape.concat_channels(d_low, d_high)?;
    tape.l2_normalize_channels(fused, config.epsilon)
}

pub fn fen_forward(image: &Tensor, weights: &RdnWeights) -> Result<Tensor> {
    let mut tape = GradTape::new();
    let x = tape.input(image.clone());
    let out = fen_forward_taped(&mut tape, x, weights)?;
    Ok(tape.into_value(out))
}

pub fn hffm_forward(d_low: &Tensor, weights: &RdnWeights, config: &RdnConfig) -> Result<Tensor> {
    let mut tape = GradTape::new();
    let x = tape.input(d_low.clone());
    let out = hffm_forward_taped(&mut tape, x, weights, config)?;
    Ok(tape.into_value(out))
}

pub fn describe(image: &Tensor, weights: &RdnWeights, config: &RdnConfig) -> Result<DescriptorField> {
    ensure!(
        image.height() >= 1 && image.width() >= 1,
        "image must be at least 1x1"
    );
    let mut tape = GradTape::new();
    let x = tape.input(image.clone());
    let out = describe_taped(&mut tape, x, weights, config)?;
    Ok(DescriptorField::from_normalized(tape.into_value(out)))
}

/// FEN-only ablation: the normalized local features alone. Computed from the
/// FEN output directly rather than by slicing [`describe`], whose shared norm
/// would leave rounding-level traces of the context channels behind.
pub fn describe_local(image: &Tensor, weights: &RdnWeights, config: &RdnConfig) -> Result<DescriptorField> {
    let d_low = fen_forward(image, weights)?;
    Ok(DescriptorField::from_normalized(l2_normalize_channels(&d_low, config.epsilon)?))
}

/// Dense per-pixel descriptors; each pixel vector has unit norm or is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorField(Tensor);

impl DescriptorField {
    /// Wraps a tensor after checking every pixel norm is 0 or within 1e-5 of 1.
    pub fn new(tensor: Tensor) -> Result<Self> {
        for y in 0..tensor.height() {
            for x in 0..tensor.width() {
                let n = tensor.pixel(y, x).iter().map(|v| v * v).sum::<f64>().sqrt();
                ensure!(
                    n == 0.0 || (n - 1.0).abs() <= 1e-5,
                    "pixel ({x}, {y}) has norm {n}"
                );
            }
        }
        Ok(Self(tensor))
    }

    pub(crate) fn from_normalized(tensor: Tensor) -> Self {
        Self(tensor)
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn dim(&self) -> usize {
        self.0.channels()
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn contains(&self, kp: Keypoint) -> bool {
        kp.x < self.width() && kp.y < self.height()
    }

    pub fn vector(&self, kp: Keypoint) -> &[f64] {
        self.0.pixel(kp.y, kp.x)
    }

}

/// Looks up the descriptor at each keypoint, preserving order.
pub fn sample_descriptors(field: &DescriptorField, keypoints: &[Keypoint]) -> Result<Vec<Vec<f64>>> {
    keypoints
        .iter()
        .enumerate()
        .map(|(index, &kp)| {
            if !field.contains(kp) {
                return Err(Error::OutOfBounds {
                    index,
                    x: kp.x as i64,
                    y: kp.y as i64,
                    width: field.width(),
                    height: field.height(),
                });
            }
            Ok(field.vector(kp).to_vec())
        })
        .collect()
}
