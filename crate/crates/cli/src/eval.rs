//! Matching accuracy on a manifest of pairs with known homographies, split
//! into keypoints in flat and textured neighbourhoods.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use rdn_core::io::{load_weights, read_image, read_manifest, read_model};
use rdn_core::matcher::{match_descriptors, match_errors, uniform_grid, Keypoint, MatchOptions};
use rdn_core::model::{describe, describe_local, sample_descriptors, DescriptorField, Profile, RdnConfig, RdnWeights};
use rdn_core::synth::{flat_keypoints, FLAT_THRESHOLD, FLAT_WINDOW_RADIUS};
use rdn_core::{Error, ModelKind, Tensor};

use crate::config::RunConfig;
use crate::{CliError, CliResult};

/// Which part of the descriptor is matched.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ablation {
    /// Full local + context descriptor.
    Full,
    /// Only the local feature-extraction channels, re-normalised.
    FenOnly,
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full" => Ok(Ablation::Full),
            "fen-only" | "fen_only" => Ok(Ablation::FenOnly),
            other => Err(format!("unknown ablation {other:?} (full, fen-only)")),
        }
    }
}

impl Ablation {
    fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::FenOnly => "fen-only",
        }
    }
}

/// Comma-separated pixel thresholds.
#[derive(Clone, Debug, PartialEq)]
pub struct Thresholds(pub Vec<f64>);

impl FromStr for Thresholds {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v = s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| format!("threshold {t:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        if v.is_empty() || v.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(format!("thresholds must be non-negative numbers, got {s:?}"));
        }
        Ok(Thresholds(v))
    }
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub profile: Option<Profile>,
    /// Pixel thresholds, e.g. `1,3,5`.
    #[arg(long)]
    pub thresholds: Option<Thresholds>,
    /// full or fen-only.
    #[arg(long)]
    pub ablation: Option<Ablation>,
    /// Keypoint grid spacing.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Keypoint-free border width.
    #[arg(long)]
    pub margin: Option<usize>,
    /// Report file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Keep every forward nearest neighbour instead of mutual pairs only.
    #[arg(long)]
    pub no_mutual: bool,
}

const STRATA: [&str; 3] = ["all", "flat", "textured"];

/// Counts for one stratum of keypoints.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Tally {
    /// Image-1 keypoints whose true projection lands inside image 2.
    pub visible: usize,
    pub matches: usize,
    /// Matches within each threshold.
    pub correct: Vec<usize>,
}

impl Tally {
    fn new(n: usize) -> Self {
        Self {
            correct: vec![0; n],
            ..Self::default()
        }
    }

    fn add(&mut self, other: &Tally) {
        self.visible += other.visible;
        self.matches += other.matches;
        for (a, b) in self.correct.iter_mut().zip(&other.correct) {
            *a += b;
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 { 0.0 } else { num as f64 / den as f64 }
}

fn field_for(image: &Tensor, weights: &RdnWeights, model: &RdnConfig, ablation: Ablation) -> CliResult<DescriptorField> {
    Ok(match ablation {
        Ablation::Full => describe(image, weights, model)?,
        Ablation::FenOnly => describe_local(image, weights, model)?,
    })
}

fn visible(p: [f64; 2], image: &Tensor) -> bool {
    p[0].is_finite()
        && p[1].is_finite()
        && p[0] >= 0.0
        && p[1] >= 0.0
        && p[0] <= (image.width() - 1) as f64
        && p[1] <= (image.height() - 1) as f64
}

pub fn run(a: &EvalArgs, cfg: &RunConfig) -> CliResult<()> {
    let profile: Profile = cfg.resolve("profile", a.profile, Profile::Full)?;
    let thresholds: Thresholds = cfg.resolve("thresholds", a.thresholds.clone(), Thresholds(vec![1.0, 3.0, 5.0]))?;
    let ablation: Ablation = cfg.resolve("ablation", a.ablation, Ablation::Full)?;
    let stride: usize = cfg.resolve("stride", a.stride, 4)?;
    let margin: usize = cfg.resolve("margin", a.margin, 16)?;
    let taus = &thresholds.0;
    let model = RdnConfig::profile(profile);
    let weights = load_weights(&a.weights, &model)?;
    let entries = read_manifest(&a.manifest)?;
    let options = MatchOptions {
        mutual: !a.no_mutual,
        ratio: None,
    };

    let mut report = String::new();
    let _ = writeln!(
        report,
        "# ablation={} profile={profile:?} stride={stride} margin={margin} mutual={} flat: mean gradient over {w}x{w} < {FLAT_THRESHOLD}",
        ablation.name(),
        !a.no_mutual,
        w = 2 * FLAT_WINDOW_RADIUS + 1,
    );
    let mut header = "pair\tstratum\tkeypoints\tmatches".to_string();
    for t in taus {
        let _ = write!(header, "\tcorrect@{t}\tmma@{t}\trate@{t}");
    }
    let _ = writeln!(report, "{header}");

    let mut totals: Vec<Tally> = STRATA.iter().map(|_| Tally::new(taus.len())).collect();
    for (i, e) in entries.iter().enumerate() {
        let truth = read_model(&e.model)?;
        if truth.kind() != ModelKind::Homography {
            return Err(CliError::Core(Error::Contract(format!(
                "{}: evaluation needs a homography ground truth",
                e.model.display()
            ))));
        }
        let (img1, img2) = (read_image(&e.image1)?, read_image(&e.image2)?);
        let kps1 = uniform_grid(img1.height(), img1.width(), stride, margin)?;
        let kps2 = uniform_grid(img2.height(), img2.width(), stride, margin)?;
        let flat = flat_keypoints(&img1, &kps1);
        let d1 = sample_descriptors(&field_for(&img1, &weights, &model, ablation)?, &kps1)?;
        let d2 = sample_descriptors(&field_for(&img2, &weights, &model, ablation)?, &kps2)?;
        let matches = if kps1.is_empty() || kps2.is_empty() {
            Vec::new()
        } else {
            match_descriptors(&d1, &d2, &options)?
        };
        let errors = match_errors(&matches, &kps1, &kps2, &truth)?;

        let in_stratum = |s: usize, k: usize| match s {
            0 => true,
            1 => flat[k],
            _ => !flat[k],
        };
        for (s, name) in STRATA.iter().enumerate() {
            let mut t = Tally::new(taus.len());
            t.visible = kps1
                .iter()
                .enumerate()
                .filter(|&(k, kp): &(usize, &Keypoint)| in_stratum(s, k) && visible(truth.project(kp.as_point()), &img2))
                .count();
            for (m, err) in matches.iter().zip(&errors) {
                if !in_stratum(s, m.idx_a) {
                    continue;
                }
                t.matches += 1;
                for (c, tau) in t.correct.iter_mut().zip(taus) {
                    if *err <= *tau {
                        *c += 1;
                    }
                }
            }
            write_row(&mut report, &i.to_string(), name, &t, taus);
            totals[s].add(&t);
        }
    }
    for (s, name) in STRATA.iter().enumerate() {
        write_row(&mut report, "total", name, &totals[s], taus);
    }

    match &a.out {
        Some(path) => std::fs::write(path, &report).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?,
        None => print!("{report}"),
    }
    let all = &totals[0];
    if let Some(k) = taus.iter().position(|&t| t == 3.0) {
        log::info!(
            "{} pairs, {} matches, MMA@3 {:.4}",
            entries.len(),
            all.matches,
            ratio(all.correct[k], all.matches)
        );
    }
    Ok(())
}

fn write_row(out: &mut String, pair: &str, stratum: &str, t: &Tally, taus: &[f64]) {
    let _ = write!(out, "{pair}\t{stratum}\t{}\t{}", t.visible, t.matches);
    for (k, _) in taus.iter().enumerate() {
        let _ = write!(
            out,
            "\t{}\t{:.6}\t{:.6}",
            t.correct[k],
            ratio(t.correct[k], t.matches),
            ratio(t.correct[k], t.visible)
        );
    }
    let _ = writeln!(out);
}
