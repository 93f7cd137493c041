//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p rdn-cli --test acceptance --release`. Criteria 6
//! and 7 train a model through the `rdn` binary and take several minutes.

#[allow(dead_code)]
#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use common::{block_mean, brute_hardest_negative, brute_mutual_nn, naive_conv, random_image, random_layer, random_tensor, rng};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rdn_core::geometry::{dlt_homography, eight_point_fundamental, ransac, ModelKind, PlanarModel, PointPair, RansacParams};
use rdn_core::gradcheck::{grad_check, GradCheckOptions, Probe};
use rdn_core::matcher::{mutual_nn_match, uniform_grid, Keypoint};
use rdn_core::model::{describe, init_weights, Profile, RdnConfig, RdnWeights};
use rdn_core::synth::{random_homography, WarpSpec};
use rdn_core::tape::{backward, GradTape, Var};
use rdn_core::tensor::{avg_pool_blocks, conv2d, ConvLayer, DEFAULT_EPSILON};
use rdn_core::trainer::{hardest_negative, lr_schedule, pair_loss, pair_loss_probe, Correspondence, PairSample, TrainConfig};
use rdn_core::Tensor;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    check(elapsed <= Duration::from_secs(limit_s), || {
        format!("runtime {:.1}s exceeds {limit_s}s", elapsed.as_secs_f64())
    })
}

// ---------------------------------------------------------------- criterion 1

const GRAD_TOLERANCE: f64 = 1e-4;

type Build = dyn Fn(&mut GradTape, Var, &[(String, Vec<f64>)]) -> rdn_core::Result<Var>;

/// Worst relative error of `sum(r * op(x))` over inputs and parameters.
fn op_error(input: Tensor, extra: Vec<(String, Vec<f64>)>, build: &Build, seed: u64) -> Result<f64, String> {
    let (h, w, c) = input.shape();
    let mut tape = GradTape::new();
    let x = tape.input(input.clone());
    let out = build(&mut tape, x, &extra).map_err(|e| e.to_string())?;
    let (oh, ow, oc) = tape.value(out).shape();
    let r = random_tensor(&mut rng(seed ^ 0xabc), oh, ow, oc);
    let grads = backward(&tape, out, &r).map_err(|e| e.to_string())?;
    let mut analytic = vec![grads.inputs[&x].data().to_vec()];
    if let Some(g) = grads.params.get(&0) {
        analytic.push(g.kernel.clone());
        analytic.push(g.bias.clone());
    }
    let mut params = vec![("input".to_string(), input.into_data())];
    params.extend(extra);
    let forward = |p: &[(String, Vec<f64>)]| -> rdn_core::Result<Probe> {
        let mut tape = GradTape::new();
        let x = tape.input(Tensor::from_vec(h, w, c, p[0].1.clone())?);
        let out = build(&mut tape, x, &p[1..])?;
        let value = tape.value(out).data().iter().zip(r.data()).map(|(a, b)| a * b).sum();
        Ok(Probe {
            value,
            regime: tape.activation_signature(),
        })
    };
    let report = grad_check(forward, &mut params, &analytic, &GradCheckOptions::default()).map_err(|e| e.to_string())?;
    check(report.tolerance == GRAD_TOLERANCE, || format!("tolerance {}", report.tolerance))?;
    Ok(report.max_relative_error())
}

fn conv_error(k: usize, dilation: usize, seed: u64) -> Result<f64, String> {
    let mut r = rng(seed);
    let layer = random_layer(&mut r, 3, 2, k, dilation);
    let input = random_tensor(&mut r, 6, 7, 2);
    let build = move |t: &mut GradTape, x: Var, p: &[(String, Vec<f64>)]| {
        let l = ConvLayer::new(3, 2, k, dilation, p[0].1.clone(), p[1].1.clone())?;
        t.conv2d(x, &l, 0)
    };
    let extra = vec![("kernel".into(), layer.kernel.clone()), ("bias".into(), layer.bias.clone())];
    op_error(input, extra, &build, seed)
}

fn criterion_gradients() -> Outcome {
    let start = Instant::now();
    let mut worst: Vec<(&str, f64)> = Vec::new();
    let mut record = |name, e: Result<f64, String>| -> Result<(), String> {
        let e = e?;
        check(e <= GRAD_TOLERANCE, || format!("{name}: relative error {e:e}"))?;
        worst.push((name, e));
        Ok(())
    };
    record("conv3x3", conv_error(3, 1, 1))?;
    record("conv3x3 d2", conv_error(3, 2, 2))?;
    record("conv3x3 d4", conv_error(3, 4, 3))?;
    record("conv1x1", conv_error(1, 1, 4))?;
    let t = random_tensor(&mut rng(5), 5, 6, 3);
    record("relu", op_error(t, vec![], &|t, x, _| Ok(t.relu(x)), 5))?;
    for window in [2, 3, 8, 64] {
        let t = random_tensor(&mut rng(6), 7, 9, 2);
        record("pool", op_error(t, vec![], &move |t, x, _| t.avg_pool_blocks(x, window), 6))?;
    }
    let t = random_tensor(&mut rng(7), 3, 4, 2);
    record("upsample", op_error(t, vec![], &|t, x, _| t.bilinear_upsample(x, 8, 11), 7))?;
    let t = random_tensor(&mut rng(8), 4, 5, 6);
    record("l2norm", op_error(t, vec![], &|t, x, _| t.l2_normalize_channels(x, DEFAULT_EPSILON), 8))?;
    let t = random_tensor(&mut rng(9), 4, 5, 3);
    let concat = |t: &mut GradTape, x: Var, _: &[(String, Vec<f64>)]| {
        let y = t.relu(x);
        t.concat_channels(x, y)
    };
    record("concat", op_error(t, vec![], &concat, 9))?;

    // end to end: quarter-width model, 8x8 pair, four correspondences
    let model = RdnConfig::quarter().with_seed(5);
    let cfg = TrainConfig::default();
    let mut r = rng(90);
    let i1 = random_image(&mut r, 8, 8);
    let i2 = random_image(&mut r, 8, 8);
    let c: Vec<Correspondence> = [(7, 7), (6, 1), (1, 6), (0, 7)]
        .into_iter()
        .map(|(x, y)| Correspondence {
            p1: Keypoint::new(x, y),
            p2: Keypoint::new(x, y),
        })
        .collect();
    let sample = PairSample {
        image1: &i1,
        image2: &i2,
        correspondences: &c,
    };
    let weights = init_weights(&model).map_err(|e| e.to_string())?;
    let out = pair_loss(sample, &weights, &model, &cfg).map_err(|e| e.to_string())?;
    let analytic = out.grads.to_blocks();
    let mut params = weights.to_blocks();
    let forward = |p: &[(String, Vec<f64>)]| {
        let mut w: RdnWeights = weights.clone();
        w.set_from_blocks(p);
        pair_loss_probe(sample, &w, &model, &cfg)
    };
    let opts = GradCheckOptions {
        max_probes_per_block: Some(48),
        ..GradCheckOptions::default()
    };
    let report = grad_check(forward, &mut params, &analytic, &opts).map_err(|e| e.to_string())?;
    let probed: usize = report.blocks.iter().map(|b| b.probed).sum();
    let e2e = report.max_relative_error();
    check(report.passed() && e2e <= GRAD_TOLERANCE, || format!("pair_loss relative error {e2e:e}"))?;
    check(probed > 0, || "no pair_loss probes".into())?;
    let ops = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    let elapsed = start.elapsed();
    within(elapsed, 60)?;
    Ok(format!(
        "ops max rel err {ops:.1e}, pair_loss max rel err {e2e:.1e} over {probed} probes, {:.1}s",
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------- criterion 2

fn criterion_descriptors() -> Outcome {
    let model = RdnConfig::profile(Profile::Full);
    let weights = init_weights(&model).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut r = rng(2024);
    for i in 0..20 {
        let image = random_image(&mut r, 64, 64);
        let a = describe(&image, &weights, &model).map_err(|e| e.to_string())?;
        let b = describe(&image, &weights, &model).map_err(|e| e.to_string())?;
        let shape = a.as_tensor().shape();
        check(shape == (64, 64, 256), || format!("image {i}: field shape {shape:?}"))?;
        let same = a.as_tensor().data().iter().zip(b.as_tensor().data()).all(|(x, y)| x.to_bits() == y.to_bits());
        check(same, || format!("image {i}: repeated runs differ"))?;
        for d in a.as_tensor().data().chunks_exact(256) {
            worst = worst.max((d.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs());
        }
    }
    check(worst <= 1e-5, || format!("max |norm - 1| = {worst:e}"))?;
    Ok(format!("20 fields of 64x64x256, max |norm - 1| = {worst:.1e}, bit-identical reruns"))
}

// ---------------------------------------------------------------- criterion 3

fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn criterion_oracles() -> Outcome {
    let mut r = rng(33);
    let mut pool_err = 0.0f64;
    for window in [1, 2, 3, 5, 8, 16, 32, 64] {
        let t = random_tensor(&mut r, 37, 29, 3);
        let got = avg_pool_blocks(&t, window).map_err(|e| e.to_string())?;
        let want = block_mean(&t, window);
        check(got.shape() == want.shape(), || format!("pool {window}: shape"))?;
        pool_err = pool_err.max(max_abs_diff(&got, &want));
    }
    check(pool_err <= 1e-12, || format!("avg_pool_blocks error {pool_err:e}"))?;

    let n = 500;
    let a: Vec<Vec<f64>> = (0..n).map(|_| (0..16).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let b: Vec<Vec<f64>> = (0..n).map(|_| (0..16).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let got: BTreeSet<(usize, usize)> = mutual_nn_match(&a, &b).map_err(|e| e.to_string())?.iter().map(|m| (m.idx_a, m.idx_b)).collect();
    let want = brute_mutual_nn(&a, &b);
    check(got == want, || format!("mutual NN: {} vs {} pairs", got.len(), want.len()))?;

    let mut negatives = 0;
    for trial in 0..10 {
        let (h, w) = (r.random_range(12..40), r.random_range(12..40));
        let f1 = random_tensor(&mut r, h, w, 8);
        let f2 = random_tensor(&mut r, h, w, 8);
        let (stride, radius) = ([1, 2, 4][trial % 3], [0, 1, 4][trial % 3]);
        let pool = uniform_grid(h, w, stride, 0).map_err(|e| e.to_string())?;
        for _ in 0..20 {
            let c = Correspondence {
                p1: Keypoint::new(r.random_range(0..w), r.random_range(0..h)),
                p2: Keypoint::new(r.random_range(0..w), r.random_range(0..h)),
            };
            let got = hardest_negative(&c, &f1, &f2, &pool, &pool, radius).map(|n| (n.distance, n.side, n.keypoint));
            check(got == brute_hardest_negative(&c, &f1, &f2, stride, radius), || {
                format!("hardest negative differs in trial {trial}")
            })?;
            negatives += 1;
        }
    }

    let mut conv_err = 0.0f64;
    for (k, d) in [(3, 1), (3, 2), (3, 4), (1, 1)] {
        let layer = random_layer(&mut r, 5, 4, k, d);
        let t = random_tensor(&mut r, 13, 11, 4);
        let got = conv2d(&t, &layer).map_err(|e| e.to_string())?;
        conv_err = conv_err.max(max_abs_diff(&got, &naive_conv(&t, &layer)));
    }
    check(conv_err <= 1e-12, || format!("conv2d error {conv_err:e}"))?;
    Ok(format!(
        "pool err {pool_err:.1e}, conv err {conv_err:.1e}, mutual NN {} pairs equal at N=500, {negatives} hardest negatives equal",
        got.len()
    ))
}

// ---------------------------------------------------------------- criterion 4

const FRAME: (f64, f64) = (640.0, 480.0);

fn strong_homography(seed: u64) -> Result<PlanarModel, String> {
    let spec = WarpSpec {
        max_rotation_deg: 30.0,
        max_scale_log: 0.4,
        max_translation: 40.0,
        max_perspective: 0.1,
        ..WarpSpec::none()
    };
    random_homography(&spec.with_seed(seed), FRAME.0 as usize, FRAME.1 as usize).map_err(|e| e.to_string())
}

fn singular_values(m: &[[f64; 3]; 3]) -> Vec<f64> {
    let n = nalgebra::Matrix3::from_row_slice(&m.iter().flatten().copied().collect::<Vec<_>>());
    let mut s: Vec<f64> = n.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Correspondences between two pinhole views of a random point cloud.
fn two_view_pairs(seed: u64, n: usize) -> Vec<PointPair> {
    let mut r = rng(seed);
    let k = nalgebra::Matrix3::new(500.0, 0.0, 320.0, 0.0, 500.0, 240.0, 0.0, 0.0, 1.0);
    let axis = nalgebra::Vector3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
    let rot = nalgebra::Rotation3::new(axis.normalize() * r.random_range(0.05..0.3)).into_inner();
    let t = nalgebra::Vector3::new(r.random_range(0.5..1.5), r.random_range(-0.3..0.3), r.random_range(-0.2..0.2));
    (0..n)
        .map(|_| {
            let x = nalgebra::Vector3::new(r.random_range(-2.0..2.0), r.random_range(-1.5..1.5), r.random_range(4.0..10.0));
            let a = k * x;
            let b = k * (rot * x + t);
            ([a.x / a.z, a.y / a.z], [b.x / b.z, b.y / b.z])
        })
        .collect()
}

fn criterion_geometry() -> Outcome {
    let start = Instant::now();
    let (w, h) = FRAME;
    let mut dlt_err = 0.0f64;
    for seed in 0..10 {
        let truth = strong_homography(seed)?;
        let mut r = rng(100 + seed);
        let pairs: Vec<PointPair> = (0..30)
            .map(|_| {
                let p = [r.random_range(0.0..w), r.random_range(0.0..h)];
                (p, truth.project(p))
            })
            .collect();
        let est = dlt_homography(&pairs).map_err(|e| e.to_string())?;
        dlt_err = dlt_err.max(est.corner_error(&truth, w, h));
    }
    check(dlt_err <= 1e-6, || format!("DLT corner error {dlt_err:e} px"))?;

    let (mut epi, mut rank) = (0.0f64, 0.0f64);
    for seed in 0..10 {
        let pairs = two_view_pairs(seed, 40);
        let f = eight_point_fundamental(&pairs).map_err(|e| e.to_string())?;
        let m = f.matrix();
        for (p, q) in &pairs {
            let x1 = [p[0], p[1], 1.0];
            let x2 = [q[0], q[1], 1.0];
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += x2[i] * m[i][j] * x1[j];
                }
            }
            epi = epi.max(s.abs());
        }
        let s = singular_values(m);
        rank = rank.max(s[2] / s[0]);
    }
    check(epi <= 1e-8, || format!("eight-point residual {epi:e}"))?;
    check(rank <= 1e-12, || format!("eight-point sigma3/sigma1 {rank:e}"))?;

    let truth = strong_homography(21)?;
    let mut r = rng(22);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let n = 200;
    let mut pairs = Vec::with_capacity(n);
    let mut is_inlier = Vec::with_capacity(n);
    for i in 0..n {
        let p = [r.random_range(0.0..w), r.random_range(0.0..h)];
        if i < n / 2 {
            pairs.push((p, [r.random_range(0.0..w), r.random_range(0.0..h)]));
            is_inlier.push(false);
        } else {
            let q = truth.project(p);
            pairs.push((p, [q[0] + noise.sample(&mut r), q[1] + noise.sample(&mut r)]));
            is_inlier.push(true);
        }
    }
    let params = RansacParams {
        threshold: 3.0,
        seed: 7,
        ..RansacParams::for_kind(ModelKind::Homography)
    };
    let res = ransac(&pairs, ModelKind::Homography, &params).map_err(|e| e.to_string())?;
    let recovered = res.inliers.iter().filter(|&&i| is_inlier[i]).count();
    let total = is_inlier.iter().filter(|&&b| b).count();
    let recall = recovered as f64 / total as f64;
    let corner = res.model.corner_error(&truth, w, h);
    check(recall >= 0.95, || format!("RANSAC recovered {recovered}/{total}"))?;
    check(corner <= 1.0, || format!("RANSAC corner error {corner} px"))?;
    let elapsed = start.elapsed();
    within(elapsed, 30)?;
    Ok(format!(
        "DLT {dlt_err:.1e} px, eight-point residual {epi:.1e} sigma3/sigma1 {rank:.1e}, RANSAC recall {recall:.3} corner {corner:.3} px, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------- criterion 5

fn criterion_schedule() -> Outcome {
    let cfg = TrainConfig::default();
    let got = [lr_schedule(0, &cfg), lr_schedule(10, &cfg), lr_schedule(49, &cfg)];
    check(got == [1e-3, 5e-4, 6.25e-5], || format!("got {got:?}"))?;
    Ok(format!("lr(0)={:e} lr(10)={:e} lr(49)={:e}", got[0], got[1], got[2]))
}

// ------------------------------------------------------- command-line runs

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().expect("temporary directory"),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Runs `rdn` with a clean configuration environment.
    fn rdn(&self, args: &[&str]) -> Result<String, String> {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_rdn"));
        cmd.args(args).current_dir(self.dir.path()).env("RUST_LOG", "warn");
        for (k, _) in std::env::vars() {
            if k.starts_with("RDN_") {
                cmd.env_remove(k);
            }
        }
        let out = cmd.output().map_err(|e| format!("cannot run rdn: {e}"))?;
        if !out.status.success() {
            return Err(format!("rdn {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()));
        }
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    }
}

/// Column `name` of the `total` row of stratum `stratum` in an eval report.
fn report_value(report: &str, stratum: &str, name: &str) -> Result<f64, String> {
    let mut lines = report.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().ok_or("empty report")?.split('\t').collect();
    let col = header.iter().position(|h| *h == name).ok_or_else(|| format!("no column {name}"))?;
    for line in lines {
        let f: Vec<&str> = line.split('\t').collect();
        if f[0] == "total" && f[1] == stratum {
            return f[col].parse().map_err(|e| format!("{name}: {e}"));
        }
    }
    Err(format!("no total row for {stratum}"))
}

fn curve(path: &Path) -> Result<Vec<f64>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    Ok(text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .filter_map(|l| l.split('\t').nth(1)?.parse().ok())
        .collect())
}

/// Trained quarter-width weights shared by criteria 6 and 7.
struct Trained {
    ws: Workspace,
    outcome: Outcome,
}

fn criterion_training() -> Trained {
    let ws = Workspace::new();
    let outcome = (|| {
        let start = Instant::now();
        ws.rdn(&["synth", "--generator", "scene", "--count", "200", "--size", "64", "--seed", "1", "--out-dir", "train"])?;
        ws.rdn(&["synth", "--generator", "scene", "--count", "20", "--size", "64", "--seed", "2", "--out-dir", "heldout"])?;
        ws.rdn(&["train", "--manifest", "train/manifest.tsv", "--epochs", "0", "--profile", "quarter", "--seed", "0", "--weights-out", "init.rdnw"])?;
        ws.rdn(&["train", "--manifest", "train/manifest.tsv", "--epochs", "15", "--profile", "quarter", "--seed", "0", "--weights-out", "trained.rdnw"])?;
        let elapsed = start.elapsed();
        let losses = curve(&ws.path("trained.loss.tsv"))?;
        check(losses.len() == 15, || format!("{} loss-curve lines", losses.len()))?;
        let (first, last) = (losses[0], losses[14]);
        let mma = |weights: &str| -> Result<f64, String> {
            let report = ws.rdn(&["eval", "--manifest", "heldout/manifest.tsv", "--weights", weights, "--profile", "quarter", "--thresholds", "3"])?;
            report_value(&report, "all", "mma@3")
        };
        let (init, trained) = (mma("init.rdnw")?, mma("trained.rdnw")?);
        let detail = format!(
            "loss {first:.3} -> {last:.3} (ratio {:.3}), MMA@3 init {init:.4} -> trained {trained:.4} (ratio {:.3}), {:.0}s",
            last / first,
            trained / init,
            elapsed.as_secs_f64()
        );
        check(last < 0.5 * first, || format!("final loss not below half the first: {detail}"))?;
        check(trained >= 2.0 * init, || format!("MMA@3 below twice random init: {detail}"))?;
        within(elapsed, 30 * 60).map_err(|e| format!("{e}: {detail}"))?;
        Ok(detail)
    })();
    Trained { ws, outcome }
}

// ---------------------------------------------------------------- criterion 7

fn criterion_flat_regions(trained: &Trained) -> Outcome {
    let ws = &trained.ws;
    if !ws.path("trained.rdnw").is_file() {
        return Err("no trained weights from criterion 6".into());
    }
    ws.rdn(&["synth", "--generator", "fixture", "--count", "20", "--size", "192", "--seed", "3", "--out-dir", "fixture"])?;
    let rate = |ablation: &str| -> Result<(f64, f64, f64), String> {
        let report = ws.rdn(&[
            "eval", "--manifest", "fixture/manifest.tsv", "--weights", "trained.rdnw", "--profile", "quarter", "--thresholds", "3",
            "--ablation", ablation,
        ])?;
        Ok((
            report_value(&report, "flat", "rate@3")?,
            report_value(&report, "flat", "keypoints")?,
            report_value(&report, "flat", "mma@3")?,
        ))
    };
    let (full, keypoints, full_mma) = rate("full")?;
    let (fen, _, fen_mma) = rate("fen-only")?;
    let detail = format!(
        "flat keypoints {keypoints}, correct-match rate@3 full {:.1}% vs fen-only {:.1}% (+{:.1} pp); MMA@3 {full_mma:.3} vs {fen_mma:.3}",
        100.0 * full,
        100.0 * fen,
        100.0 * (full - fen)
    );
    check(keypoints > 0.0, || "no flat keypoints".into())?;
    check(full - fen >= 0.10, || format!("margin below 10 pp: {detail}"))?;
    Ok(detail)
}

// ---------------------------------------------------------------- criterion 8

fn read_all(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files = Vec::new();
    let mut entries: Vec<_> = std::fs::read_dir(dir).map_err(|e| e.to_string())?.collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        if e.path().is_file() {
            files.push((e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).map_err(|e| e.to_string())?));
        }
    }
    Ok(files)
}

fn criterion_determinism() -> Outcome {
    let runs: Vec<Vec<(String, Vec<u8>)>> = (0..2)
        .map(|_| {
            let ws = Workspace::new();
            ws.rdn(&["synth", "--count", "4", "--seed", "11", "--out-dir", "s"])?;
            ws.rdn(&["train", "--manifest", "s/manifest.tsv", "--epochs", "2", "--profile", "quarter", "--seed", "5", "--weights-out", "s/w.rdnw"])?;
            for side in ["1", "2"] {
                ws.rdn(&[
                    "describe", "--weights", "s/w.rdnw", "--profile", "quarter", "--stride", "4", "--image",
                    &format!("s/pair_0000_{side}.pgm"), "--out", &format!("s/d{side}.rdnd"),
                ])?;
            }
            ws.rdn(&["match", "--a", "s/d1.rdnd", "--b", "s/d2.rdnd", "--seed", "3", "--out", "s/m.tsv"])?;
            read_all(&ws.path("s"))
        })
        .collect::<Result<_, _>>()?;
    let names: Vec<&str> = runs[0].iter().map(|f| f.0.as_str()).collect();
    for (a, b) in runs[0].iter().zip(&runs[1]) {
        check(a == b, || format!("{} differs between runs", a.0))?;
    }
    check(runs[0].len() == runs[1].len(), || "file sets differ".into())?;
    for needed in ["manifest.tsv", "w.rdnw", "w.loss.tsv", "m.tsv", "m.model.txt"] {
        check(names.contains(&needed), || format!("{needed} missing"))?;
    }
    Ok(format!("{} synth/train/describe/match outputs byte-identical across two runs", names.len()))
}

// ---------------------------------------------------------------------- main

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into())),
    }
}

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, outcome: Outcome| {
        match &outcome {
            Ok(detail) => println!("criterion {n} ({name}): PASS - {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL - {detail}");
            }
        }
    };
    report(1, "gradient integrity", guarded(criterion_gradients));
    report(2, "descriptor contract", guarded(criterion_descriptors));
    report(3, "oracle equivalences", guarded(criterion_oracles));
    report(4, "geometry recovery", guarded(criterion_geometry));
    report(5, "schedule", guarded(criterion_schedule));
    let trained = criterion_training();
    report(6, "desk-scale training", trained.outcome.clone());
    report(7, "flat-region matching", guarded(|| criterion_flat_regions(&trained)));
    report(8, "determinism", guarded(criterion_determinism));
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
