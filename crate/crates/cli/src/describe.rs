use std::path::PathBuf;

use clap::Args;
use rdn_core::io::{load_weights, read_image, save_descriptors, DescriptorSet};
use rdn_core::matcher::uniform_grid;
use rdn_core::model::{describe, sample_descriptors, Profile, RdnConfig};

use crate::config::RunConfig;
use crate::CliResult;

#[derive(Args, Debug)]
pub struct DescribeArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// Keypoint grid spacing.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Keypoint-free border width.
    #[arg(long)]
    pub margin: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Profile the weights were trained with.
    #[arg(long)]
    pub profile: Option<Profile>,
}

pub fn run(a: &DescribeArgs, cfg: &RunConfig) -> CliResult<()> {
    let stride: usize = cfg.resolve("stride", a.stride, 8)?;
    let margin: usize = cfg.resolve("margin", a.margin, 16)?;
    let profile: Profile = cfg.resolve("profile", a.profile, Profile::Full)?;
    let model = RdnConfig::profile(profile);
    let weights = load_weights(&a.weights, &model)?;
    let image = read_image(&a.image)?;
    let field = describe(&image, &weights, &model)?;
    let keypoints = uniform_grid(image.height(), image.width(), stride, margin)?;
    let descriptors = sample_descriptors(&field, &keypoints)?;
    let points = keypoints.iter().map(|k| k.as_point()).collect();
    let set = DescriptorSet::new(field.dim(), points, descriptors)?;
    save_descriptors(&set, &a.out)?;
    log::info!("{} descriptors of dimension {} -> {}", set.len(), set.dim(), a.out.display());
    Ok(())
}
