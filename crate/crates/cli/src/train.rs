use std::path::PathBuf;

use clap::Args;
use rdn_core::io::{read_correspondences, read_image, read_manifest, save_weights, write_loss_curve};
use rdn_core::model::{init_weights, Profile, RdnConfig};
use rdn_core::trainer::{train, PairSample, TrainConfig};
use rdn_core::Tensor;

use crate::config::RunConfig;
use crate::CliResult;

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Initial learning rate; halved every 10 epochs.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// full (256-d descriptors) or quarter (64-d).
    #[arg(long)]
    pub profile: Option<Profile>,
    #[arg(long)]
    pub weights_out: PathBuf,
    /// Per-epoch loss curve (default: next to the weights, `.loss.tsv`).
    #[arg(long)]
    pub loss_curve: Option<PathBuf>,
}

pub fn run(a: &TrainArgs, cfg: &RunConfig) -> CliResult<()> {
    let defaults = TrainConfig::default();
    let seed: u64 = cfg.resolve("seed", a.seed, 0)?;
    let profile: Profile = cfg.resolve("profile", a.profile, Profile::Full)?;
    let tc = TrainConfig {
        epochs: cfg.resolve("epochs", a.epochs, defaults.epochs)?,
        lr0: cfg.resolve("lr", a.lr, defaults.lr0)?,
        seed,
        ..defaults
    };
    let model = RdnConfig::profile(profile).with_seed(seed);

    let entries = read_manifest(&a.manifest)?;
    let mut data: Vec<(Tensor, Tensor, Vec<_>)> = Vec::with_capacity(entries.len());
    for e in &entries {
        data.push((
            read_image(&e.image1)?,
            read_image(&e.image2)?,
            read_correspondences(&e.correspondences)?,
        ));
    }
    let samples: Vec<PairSample<'_>> = data
        .iter()
        .map(|(i1, i2, c)| PairSample {
            image1: i1,
            image2: i2,
            correspondences: c,
        })
        .collect();
    log::info!(
        "training {profile:?} model on {} pairs for {} epochs",
        samples.len(),
        tc.epochs
    );
    let initial = init_weights(&model)?;
    let outcome = if tc.epochs == 0 {
        rdn_core::trainer::TrainOutcome {
            weights: initial,
            curve: Vec::new(),
        }
    } else {
        train(&samples, initial, &model, &tc, |_| {})?
    };
    save_weights(&outcome.weights, &a.weights_out)?;
    let curve_path = a
        .loss_curve
        .clone()
        .unwrap_or_else(|| a.weights_out.with_extension("loss.tsv"));
    write_loss_curve(&curve_path, &outcome.curve)?;
    Ok(())
}
