//! Correspondence-driven triplet training.
//!
//! For an image pair with ground-truth correspondences `C` the loss is
//!
//! ```text
//! L(I1, I2) = sum over c in C of max(0, M + p(c)^2 - n(c)^2)
//! ```
//!
//! where `p(c)` is the descriptor distance of the corresponding pixels and
//! `n(c)` the distance to the hardest non-matching pixel from either image,
//! mined from a coarse grid outside a Chebyshev safe radius around the match.
//! Optimization is Adam with batch size 1 and a learning rate halved every
//! fixed number of epochs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Error, Result};
use crate::matcher::{squared_distance, uniform_grid, Keypoint};
use crate::model::{describe_taped, RdnConfig, RdnGrads, RdnWeights};
use crate::tape::{backward, GradTape};
use crate::tensor::Tensor;

/// Ground-truth pixel correspondence between image 1 and image 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Correspondence {
    pub p1: Keypoint,
    pub p2: Keypoint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub margin: f64,
    /// Chebyshev radius around the true match excluded from negatives.
    pub safe_radius: usize,
    pub negative_pool_stride: usize,
    pub epochs: usize,
    pub lr0: f64,
    pub lr_halving_period: usize,
    pub adam: AdamParams,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            safe_radius: 4,
            negative_pool_stride: 4,
            epochs: 50,
            lr0: 1e-3,
            lr_halving_period: 10,
            adam: AdamParams::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.margin > 0.0, "margin must be positive");
        ensure!(self.lr0 > 0.0, "initial learning rate must be positive");
        ensure!(self.negative_pool_stride >= 1, "negative pool stride must be positive");
        ensure!(self.lr_halving_period >= 1, "halving period must be positive");
        Ok(())
    }
}

/// `max(0, margin + p^2 - n^2)`
pub fn triplet_term(p: f64, n: f64, margin: f64) -> f64 {
    (margin + p * p - n * n).max(0.0)
}

/// Which image the hardest negative came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NegativeSide {
    /// Negative pixel in image 2, compared against `d1(c.p1)`.
    Image2,
    /// Negative pixel in image 1, compared against `d2(c.p2)`.
    Image1,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HardNegative {
    pub distance: f64,
    pub side: NegativeSide,
    pub keypoint: Keypoint,
}

/// Scans `pool` for the candidate closest to `anchor`, skipping anything
/// within `safe_radius` of `center`. Ties keep the earliest candidate.
fn scan_pool(anchor: &[f64], field: &Tensor, pool: &[Keypoint], center: Keypoint, safe_radius: usize) -> Option<(f64, Keypoint)> {
    let mut best: Option<(f64, Keypoint)> = None;
    for &k in pool {
        if k.chebyshev(&center) <= safe_radius {
            continue;
        }
        let d = squared_distance(anchor, field.pixel(k.y, k.x));
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, k));
        }
    }
    best
}

/// Hardest negative for correspondence `c`, mined from both images. The
/// image-2 side wins ties.
pub fn hardest_negative(
    c: &Correspondence,
    field1: &Tensor,
    field2: &Tensor,
    pool1: &[Keypoint],
    pool2: &[Keypoint],
    safe_radius: usize,
) -> Option<HardNegative> {
    let d1 = field1.pixel(c.p1.y, c.p1.x);
    let d2 = field2.pixel(c.p2.y, c.p2.x);
    let in2 = scan_pool(d1, field2, pool2, c.p2, safe_radius);
    let in1 = scan_pool(d2, field1, pool1, c.p1, safe_radius);
    let pick = match (in2, in1) {
        (Some(a), Some(b)) if b.0 < a.0 => Some((b, NegativeSide::Image1)),
        (Some(a), _) => Some((a, NegativeSide::Image2)),
        (None, Some(b)) => Some((b, NegativeSide::Image1)),
        (None, None) => None,
    };
    pick.map(|((d, k), side)| HardNegative {
        distance: d.sqrt(),
        side,
        keypoint: k,
    })
}

/// One training example: two images and their correspondences.
#[derive(Clone, Copy, Debug)]
pub struct PairSample<'a> {
    pub image1: &'a Tensor,
    pub image2: &'a Tensor,
    pub correspondences: &'a [Correspondence],
}

#[derive(Clone, Debug)]
pub struct PairLoss {
    pub loss: f64,
    pub grads: RdnGrads,
    pub positive: Vec<f64>,
    pub negatives: Vec<HardNegative>,
}

fn check_in_bounds(kp: Keypoint, t: &Tensor, index: usize) -> Result<()> {
    if kp.x < t.width() && kp.y < t.height() {
        Ok(())
    } else {
        Err(Error::OutOfBounds {
            index,
            x: kp.x as i64,
            y: kp.y as i64,
            width: t.width(),
            height: t.height(),
        })
    }
}

fn add_scaled(dst: &mut [f64], diff_a: &[f64], diff_b: &[f64], scale: f64) {
    for ((d, a), b) in dst.iter_mut().zip(diff_a).zip(diff_b) {
        *d += scale * (a - b);
    }
}

/// Triplet loss of one pair, together with gradients for every weight. The
/// hardest-negative choice is held fixed while differentiating.
pub fn pair_loss(sample: PairSample<'_>, weights: &RdnWeights, model: &RdnConfig, cfg: &TrainConfig) -> Result<PairLoss> {
    ensure!(!sample.correspondences.is_empty(), "pair has no correspondences");
    let mut tape1 = GradTape::new();
    let x1 = tape1.input(sample.image1.clone());
    let out1 = describe_taped(&mut tape1, x1, weights, model)?;
    let mut tape2 = GradTape::new();
    let x2 = tape2.input(sample.image2.clone());
    let out2 = describe_taped(&mut tape2, x2, weights, model)?;
    let (f1, f2) = (tape1.value(out1), tape2.value(out2));
    for (i, c) in sample.correspondences.iter().enumerate() {
        check_in_bounds(c.p1, f1, i)?;
        check_in_bounds(c.p2, f2, i)?;
    }
    let pool1 = uniform_grid(f1.height(), f1.width(), cfg.negative_pool_stride, 0)?;
    let pool2 = uniform_grid(f2.height(), f2.width(), cfg.negative_pool_stride, 0)?;

    let mut g1 = Tensor::zeros(f1.height(), f1.width(), f1.channels());
    let mut g2 = Tensor::zeros(f2.height(), f2.width(), f2.channels());
    let mut loss = 0.0;
    let mut positive = Vec::with_capacity(sample.correspondences.len());
    let mut negatives = Vec::with_capacity(sample.correspondences.len());
    for (i, c) in sample.correspondences.iter().enumerate() {
        let neg = hardest_negative(c, f1, f2, &pool1, &pool2, cfg.safe_radius).ok_or(Error::DegeneratePool(i))?;
        let a = f1.pixel(c.p1.y, c.p1.x);
        let b = f2.pixel(c.p2.y, c.p2.x);
        let p = squared_distance(a, b).sqrt();
        positive.push(p);
        negatives.push(neg);
        let term = triplet_term(p, neg.distance, cfg.margin);
        loss += term;
        if term <= 0.0 {
            continue;
        }
        // d(p^2) = 2 (a - b) . (da - db)
        add_scaled(g1.pixel_mut(c.p1.y, c.p1.x), a, b, 2.0);
        add_scaled(g2.pixel_mut(c.p2.y, c.p2.x), a, b, -2.0);
        // d(-n^2) = -2 (anchor - neg) . (d anchor - d neg)
        let k = neg.keypoint;
        match neg.side {
            NegativeSide::Image2 => {
                let nb = f2.pixel(k.y, k.x);
                add_scaled(g1.pixel_mut(c.p1.y, c.p1.x), a, nb, -2.0);
                add_scaled(g2.pixel_mut(k.y, k.x), a, nb, 2.0);
            }
            NegativeSide::Image1 => {
                let na = f1.pixel(k.y, k.x);
                add_scaled(g2.pixel_mut(c.p2.y, c.p2.x), b, na, -2.0);
                add_scaled(g1.pixel_mut(k.y, k.x), b, na, 2.0);
            }
        }
    }
    let mut grads = RdnGrads::zeros_like(weights);
    grads.accumulate(&backward(&tape1, out1, &g1)?.params);
    grads.accumulate(&backward(&tape2, out2, &g2)?.params);
    Ok(PairLoss {
        loss,
        grads,
        positive,
        negatives,
    })
}

/// Forward-only loss plus a tag of the ReLU pattern and negative choices,
/// used by finite-difference checks to skip probes that cross a kink.
pub fn pair_loss_probe(
    sample: PairSample<'_>,
    weights: &RdnWeights,
    model: &RdnConfig,
    cfg: &TrainConfig,
) -> Result<crate::gradcheck::Probe> {
    let mut tape1 = GradTape::new();
    let x1 = tape1.input(sample.image1.clone());
    let out1 = describe_taped(&mut tape1, x1, weights, model)?;
    let mut tape2 = GradTape::new();
    let x2 = tape2.input(sample.image2.clone());
    let out2 = describe_taped(&mut tape2, x2, weights, model)?;
    let (f1, f2) = (tape1.value(out1), tape2.value(out2));
    let pool1 = uniform_grid(f1.height(), f1.width(), cfg.negative_pool_stride, 0)?;
    let pool2 = uniform_grid(f2.height(), f2.width(), cfg.negative_pool_stride, 0)?;
    let mut regime = tape1.activation_signature() ^ tape2.activation_signature().rotate_left(17);
    let mut loss = 0.0;
    for (i, c) in sample.correspondences.iter().enumerate() {
        let neg = hardest_negative(c, f1, f2, &pool1, &pool2, cfg.safe_radius).ok_or(Error::DegeneratePool(i))?;
        let p = squared_distance(f1.pixel(c.p1.y, c.p1.x), f2.pixel(c.p2.y, c.p2.x)).sqrt();
        let term = triplet_term(p, neg.distance, cfg.margin);
        loss += term;
        let tag = (neg.keypoint.x as u64) << 32 | (neg.keypoint.y as u64) << 1 | u64::from(neg.side == NegativeSide::Image1);
        regime = regime.rotate_left(7) ^ tag ^ u64::from(term > 0.0) << 63;
    }
    Ok(crate::gradcheck::Probe { value: loss, regime })
}

/// `lr0 / 2^floor(epoch / period)`
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    let halvings = (epoch / cfg.lr_halving_period).min(1074) as i32;
    cfg.lr0 * 0.5f64.powi(halvings)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment accumulators, one per named parameter block.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub names: Vec<String>,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(blocks: &[(String, usize)]) -> Self {
        Self {
            names: blocks.iter().map(|(n, _)| n.clone()).collect(),
            m: blocks.iter().map(|&(_, len)| vec![0.0; len]).collect(),
            v: blocks.iter().map(|&(_, len)| vec![0.0; len]).collect(),
            t: 0,
        }
    }

    pub fn for_weights(weights: &RdnWeights) -> Self {
        let blocks: Vec<(String, usize)> = weights.to_blocks().into_iter().map(|(n, v)| (n, v.len())).collect();
        Self::new(&blocks)
    }
}

/// One bias-corrected Adam update. Nothing is modified if any gradient is
/// non-finite.
pub fn adam_step(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut AdamState, lr: f64, hp: &AdamParams) -> Result<()> {
    ensure!(lr > 0.0, "learning rate must be positive");
    ensure!(
        params.len() == grads.len() && params.len() == state.m.len(),
        "adam: {} param blocks, {} grad blocks, {} state blocks",
        params.len(),
        grads.len(),
        state.m.len()
    );
    for (b, (p, g)) in params.iter().zip(grads).enumerate() {
        ensure!(
            p.len() == g.len() && p.len() == state.m[b].len(),
            "adam: block {} shape mismatch",
            state.names[b]
        );
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(state.names[b].clone()));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    for (b, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[b], &mut state.v[b]);
        for i in 0..p.len() {
            m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g[i];
            v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + hp.epsilon);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
    /// Mean number of correspondences per pair, since the loss is a sum over them.
    pub mean_correspondences: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub weights: RdnWeights,
    pub curve: Vec<EpochStats>,
}

/// Batch-1 Adam training. Pair order is reshuffled every epoch from a
/// generator seeded with `cfg.seed`, so the whole run is reproducible.
pub fn train(
    dataset: &[PairSample<'_>],
    initial: RdnWeights,
    model: &RdnConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    initial.validate(model)?;
    ensure!(!dataset.is_empty(), "training set is empty");
    let mut weights = initial;
    let mut state = AdamState::for_weights(&weights);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = lr_schedule(epoch, cfg);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut corr = 0usize;
        for &i in &order {
            let sample = dataset[i];
            let out = pair_loss(sample, &weights, model, cfg)?;
            if !out.loss.is_finite() {
                return Err(Error::NonFinite(out.loss));
            }
            total += out.loss;
            corr += sample.correspondences.len();
            let grads = out.grads.block_slices();
            let mut params = weights.blocks_mut();
            adam_step(&mut params, &grads, &mut state, lr, &cfg.adam)?;
        }
        let stats = EpochStats {
            epoch,
            mean_loss: total / dataset.len() as f64,
            lr,
            mean_correspondences: corr as f64 / dataset.len() as f64,
        };
        log::info!(
            "epoch {epoch}: mean loss {:.6} over {:.1} correspondences, lr {lr:e}",
            stats.mean_loss,
            stats.mean_correspondences
        );
        on_epoch(&stats);
        curve.push(stats);
    }
    Ok(TrainOutcome { weights, curve })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplet_examples() {
        assert_eq!(triplet_term(0.0, 1.2, 1.0), 0.0);
        assert_eq!(triplet_term(0.7, 0.7, 1.0), 1.0);
        assert!((triplet_term(0.5, 0.6, 1.0) - 0.89).abs() < 1e-15);
    }

    #[test]
    fn schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_schedule(0, &cfg), 1e-3);
        assert_eq!(lr_schedule(9, &cfg), 1e-3);
        assert_eq!(lr_schedule(10, &cfg), 5e-4);
        assert_eq!(lr_schedule(49, &cfg), 6.25e-5);
    }

    #[test]
    fn adam_first_step_and_null_gradient() {
        let mut p = vec![1.0, -2.0];
        let mut st = AdamState::new(&[("w".into(), 2)]);
        adam_step(&mut [&mut p], &[&[1.0, 1.0]], &mut st, 0.1, &AdamParams::default()).unwrap();
        for (a, b) in p.iter().zip([0.9, -2.1]) {
            assert!((a - b).abs() < 1e-6);
        }
        let before = p.clone();
        let m_before = st.m[0].clone();
        adam_step(&mut [&mut p], &[&[0.0, 0.0]], &mut st, 0.1, &AdamParams::default()).unwrap();
        // zero gradient still moves along the decayed first moment
        assert_ne!(p, before);
        assert_eq!(st.m[0], m_before.iter().map(|m| 0.9 * m).collect::<Vec<_>>());

        let mut fresh = vec![0.5];
        let mut st = AdamState::new(&[("w".into(), 1)]);
        adam_step(&mut [&mut fresh], &[&[0.0]], &mut st, 0.1, &AdamParams::default()).unwrap();
        assert_eq!(fresh, vec![0.5]);
    }

    #[test]
    fn adam_non_finite_names_block() {
        let mut a = vec![0.0];
        let mut b = vec![0.0];
        let mut st = AdamState::new(&[("a".into(), 1), ("b".into(), 1)]);
        let err = adam_step(&mut [&mut a, &mut b], &[&[1.0], &[f64::NAN]], &mut st, 0.1, &AdamParams::default()).unwrap_err();
        assert!(matches!(err, Error::Divergence(ref n) if n == "b"));
        assert_eq!(a, vec![0.0]);
        assert_eq!(st.t, 0);
    }

    #[test]
    fn exclusion_semantics() {
        // 1-channel fields: image 2 has the true match at (2,2) and a far point at (10,2)
        let f1 = Tensor::from_fn(4, 12, 1, |_, _, _| 0.0);
        let f2 = Tensor::from_fn(4, 12, 1, |_, x, _| if x == 10 { 0.5 } else { 0.0 });
        let c = Correspondence {
            p1: Keypoint::new(2, 2),
            p2: Keypoint::new(2, 2),
        };
        let pool2 = vec![Keypoint::new(2, 2), Keypoint::new(10, 2)];
        let neg = hardest_negative(&c, &f1, &f2, &[], &pool2, 4).unwrap();
        assert_eq!(neg.keypoint, Keypoint::new(10, 2));
        assert_eq!(neg.side, NegativeSide::Image2);
        assert!((neg.distance - 0.5).abs() < 1e-15);
        // everything within the radius on both sides
        assert!(hardest_negative(&c, &f1, &f2, &[Keypoint::new(3, 3)], &[Keypoint::new(2, 2)], 4).is_none());
    }
}
