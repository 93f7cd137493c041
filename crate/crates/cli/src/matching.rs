use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use rdn_core::geometry::{ransac, ModelKind, PointPair, RansacParams};
use rdn_core::io::{load_descriptors, read_image, write_matches, write_model, MatchRecord};
use rdn_core::matcher::{match_descriptors, MatchOptions};

use crate::config::RunConfig;
use crate::{overlay, CliError, CliResult};

/// Geometric screening applied after descriptor matching.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Screening {
    None,
    Model(ModelKind),
}

impl FromStr for Screening {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Screening::None),
            other => other
                .parse::<ModelKind>()
                .map(Screening::Model)
                .map_err(|_| format!("unknown model {other:?} (homography, fundamental, none)")),
        }
    }
}

#[derive(Args, Debug)]
pub struct MatchArgs {
    /// Descriptor file of the first image.
    #[arg(long)]
    pub a: PathBuf,
    /// Descriptor file of the second image.
    #[arg(long)]
    pub b: PathBuf,
    /// homography, fundamental or none.
    #[arg(long)]
    pub model: Option<Screening>,
    /// RANSAC inlier threshold in pixels (default 3 for homographies, 1 for
    /// fundamental matrices).
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the fitted model (default: match file with `.model.txt`).
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    /// Keep every forward nearest neighbour instead of mutual pairs only.
    #[arg(long)]
    pub no_mutual: bool,
    /// Lowe ratio test on descriptor distances.
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub confidence: Option<f64>,
    /// Side-by-side PPM of the written matches; needs --image-a and --image-b.
    #[arg(long, requires_all = ["image_a", "image_b"])]
    pub overlay: Option<PathBuf>,
    #[arg(long)]
    pub image_a: Option<PathBuf>,
    #[arg(long)]
    pub image_b: Option<PathBuf>,
}

pub fn run(a: &MatchArgs, cfg: &RunConfig) -> CliResult<()> {
    let screening: Screening = cfg.resolve("model", a.model, Screening::Model(ModelKind::Homography))?;
    let seed: u64 = cfg.resolve("seed", a.seed, 0)?;
    let ratio: Option<f64> = cfg.resolve_opt("ratio", a.ratio)?;
    let set_a = load_descriptors(&a.a)?;
    let set_b = load_descriptors(&a.b)?;
    if set_a.dim() != set_b.dim() {
        return Err(CliError::Core(rdn_core::Error::Contract(format!(
            "descriptor dimensions differ: {} vs {}",
            set_a.dim(),
            set_b.dim()
        ))));
    }
    let options = MatchOptions {
        mutual: !a.no_mutual,
        ratio,
    };
    let matches = if set_a.is_empty() || set_b.is_empty() {
        Vec::new()
    } else {
        match_descriptors(set_a.descriptors(), set_b.descriptors(), &options)?
    };
    let mut records: Vec<MatchRecord> = matches
        .iter()
        .map(|m| MatchRecord {
            idx_a: m.idx_a,
            idx_b: m.idx_b,
            a: set_a.points()[m.idx_a],
            b: set_b.points()[m.idx_b],
            distance: m.distance,
        })
        .collect();
    log::info!("{} raw matches", records.len());

    if let Screening::Model(kind) = screening {
        let defaults = RansacParams::for_kind(kind);
        let params = RansacParams {
            threshold: cfg.resolve("threshold", a.threshold, defaults.threshold)?,
            max_iterations: cfg.resolve("iterations", a.iterations, defaults.max_iterations)?,
            confidence: cfg.resolve("confidence", a.confidence, defaults.confidence)?,
            seed,
        };
        let pairs: Vec<PointPair> = records.iter().map(|r| (r.a, r.b)).collect();
        let result = ransac(&pairs, kind, &params)?;
        log::info!(
            "{} inliers after {} iterations",
            result.inliers.len(),
            result.iterations
        );
        records = result.inliers.iter().map(|&i| records[i]).collect();
        let model_out = a
            .model_out
            .clone()
            .unwrap_or_else(|| a.out.with_extension("model.txt"));
        write_model(&model_out, &result.model)?;
    }
    write_matches(&a.out, &records)?;

    if let (Some(path), Some(ia), Some(ib)) = (&a.overlay, &a.image_a, &a.image_b) {
        let canvas = overlay::side_by_side(&read_image(ia)?, &read_image(ib)?, &records);
        rdn_core::io::write_ppm(path, &canvas)?;
    }
    Ok(())
}
