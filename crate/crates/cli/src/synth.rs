use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdn_core::io::{read_image, write_correspondences, write_manifest, write_model, write_pgm, write_ppm, ManifestEntry};
use rdn_core::synth::{crop, flat_fixture, make_pair, procedural_texture, scene_image, WarpSpec};
use rdn_core::{Error, Tensor};

use crate::config::RunConfig;
use crate::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Generator {
    Scene,
    Texture,
    Fixture,
}

impl FromStr for Generator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "scene" => Ok(Generator::Scene),
            "texture" => Ok(Generator::Texture),
            "fixture" => Ok(Generator::Fixture),
            other => Err(format!("unknown generator {other:?} (scene, texture, fixture)")),
        }
    }
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Source image (PGM/PPM); pairs are random crops of it. Without it a
    /// procedural generator is used.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Procedural source when no image is given: scene, texture or fixture.
    #[arg(long)]
    pub generator: Option<Generator>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Side of each square pair image.
    #[arg(long)]
    pub size: Option<usize>,
    /// Spacing of the correspondence grid.
    #[arg(long)]
    pub grid_stride: Option<usize>,
    /// Maximum rotation in degrees.
    #[arg(long)]
    pub max_rotation: Option<f64>,
    /// Maximum scale factor; scales are drawn log-uniformly from [1/s, s].
    #[arg(long)]
    pub max_scale: Option<f64>,
    /// Maximum translation in pixels per axis.
    #[arg(long)]
    pub max_translation: Option<f64>,
    /// Maximum corner jitter as a fraction of the frame size.
    #[arg(long)]
    pub max_perspective: Option<f64>,
    #[arg(long)]
    pub brightness: Option<f64>,
    #[arg(long)]
    pub contrast: Option<f64>,
    /// Standard deviation of additive Gaussian noise.
    #[arg(long)]
    pub noise: Option<f64>,
}

pub const MANIFEST_NAME: &str = "manifest.tsv";

fn warp_spec(a: &SynthArgs, cfg: &RunConfig) -> CliResult<WarpSpec> {
    let d = WarpSpec::default();
    let max_scale: f64 = cfg.resolve("max_scale", a.max_scale, d.max_scale_log.exp())?;
    if max_scale < 1.0 {
        return Err(CliError::Config(format!("max_scale must be at least 1, got {max_scale}")));
    }
    let spec = WarpSpec {
        max_rotation_deg: cfg.resolve("max_rotation", a.max_rotation, d.max_rotation_deg)?,
        max_scale_log: max_scale.ln(),
        max_translation: cfg.resolve("max_translation", a.max_translation, d.max_translation)?,
        max_perspective: cfg.resolve("max_perspective", a.max_perspective, d.max_perspective)?,
        brightness: cfg.resolve("brightness", a.brightness, d.brightness)?,
        contrast: cfg.resolve("contrast", a.contrast, d.contrast)?,
        noise_sigma: cfg.resolve("noise", a.noise, d.noise_sigma)?,
        seed: 0,
    };
    spec.validate()?;
    Ok(spec)
}

fn is_gray(image: &Tensor) -> bool {
    image.data().chunks_exact(image.channels()).all(|p| p.iter().all(|&v| v == p[0]))
}

fn write_image(dir: &Path, stem: &str, image: &Tensor) -> CliResult<String> {
    let (name, result) = if is_gray(image) {
        let name = format!("{stem}.pgm");
        let r = write_pgm(dir.join(&name), image);
        (name, r)
    } else {
        let name = format!("{stem}.ppm");
        let r = write_ppm(dir.join(&name), image);
        (name, r)
    };
    result?;
    Ok(name)
}

pub fn run(a: &SynthArgs, cfg: &RunConfig) -> CliResult<()> {
    let count: usize = cfg.resolve("count", a.count, 1)?;
    let seed: u64 = cfg.resolve("seed", a.seed, 0)?;
    let grid_stride: usize = cfg.resolve("grid_stride", a.grid_stride, 4)?;
    let generator: Generator = cfg.resolve("generator", a.generator, Generator::Scene)?;
    let spec = warp_spec(a, cfg)?;
    let source = a.image.as_deref().map(read_image).transpose()?;
    let size: usize = match &source {
        Some(img) => cfg.resolve("size", a.size, img.width().min(img.height()))?,
        None => cfg.resolve("size", a.size, 64)?,
    };
    if let Some(img) = &source {
        if size > img.width() || size > img.height() {
            return Err(CliError::Config(format!(
                "size {size} exceeds the {}x{} source image",
                img.width(),
                img.height()
            )));
        }
    }

    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::Io {
        path: a.out_dir.clone(),
        source: e,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let content_seed = rng.next_u64();
        let warp_seed = rng.next_u64();
        let image = match &source {
            Some(img) => {
                let x = rng.random_range(0..=img.width() - size);
                let y = rng.random_range(0..=img.height() - size);
                crop(img, x, y, size, size)?
            }
            None => match generator {
                Generator::Scene => scene_image(size, size, content_seed),
                Generator::Texture => procedural_texture(size, size, content_seed),
                Generator::Fixture => flat_fixture(size, content_seed)?,
            },
        };
        let pair = make_pair(&image, &spec.clone().with_seed(warp_seed), grid_stride)?;
        let stem = format!("pair_{i:04}");
        let image1 = write_image(&a.out_dir, &format!("{stem}_1"), &pair.image1)?;
        let image2 = write_image(&a.out_dir, &format!("{stem}_2"), &pair.image2)?;
        let model = format!("{stem}_h.txt");
        write_model(a.out_dir.join(&model), &pair.homography)?;
        let corr = format!("{stem}_c.tsv");
        write_correspondences(a.out_dir.join(&corr), &pair.correspondences)?;
        entries.push(ManifestEntry {
            image1: image1.into(),
            image2: image2.into(),
            model: model.into(),
            correspondences: corr.into(),
        });
    }
    write_manifest(a.out_dir.join(MANIFEST_NAME), &entries)?;
    log::info!("wrote {count} pairs to {}", a.out_dir.display());
    Ok(())
}
