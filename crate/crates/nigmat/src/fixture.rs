//! Toy fixtures used when the CLI or server is not given explicit inputs.

use std::path::{Path, PathBuf};

use nigmat_core::toy::data::{gen_composites, MattingSample};
use nigmat_core::toy::{train_stage1, MattingConfig, MattingNet, Stage1Config};
use nigmat_core::Raster;

use crate::checkpoint::Checkpoint;
use crate::error::{io_err, Error, Result};
use crate::fras::{load_fras, save_fras};

pub const FIXTURE_SIZE: usize = 128;
/// Composites and steps for the model trained when no checkpoint is given.
pub const QUICK_TRAIN_SET: usize = 32;
pub const QUICK_STEPS: usize = 300;

/// The composite an `interact` run uses when no image is given.
pub fn fixture_sample(seed: u64) -> Result<MattingSample> {
    Ok(gen_composites(1, FIXTURE_SIZE, seed)?.remove(0))
}

/// A small, quickly trained matting net. Deterministic in `seed`.
pub fn quick_model(seed: u64) -> Result<MattingNet> {
    let data = gen_composites(QUICK_TRAIN_SET, FIXTURE_SIZE, seed.wrapping_add(1))?;
    let mut net = MattingNet::new(MattingConfig {
        seed,
        ..MattingConfig::default()
    });
    let cfg = Stage1Config {
        steps: QUICK_STEPS,
        seed,
        ..Stage1Config::default()
    };
    train_stage1(&mut net, &data, &cfg)?;
    Ok(net)
}

pub fn load_or_train(checkpoint: Option<&Path>, seed: u64) -> Result<MattingNet> {
    match checkpoint {
        Some(p) => Checkpoint::load(p)?.into_matting(),
        None => quick_model(seed),
    }
}

pub fn sample_path(dir: &Path, i: usize, part: &str) -> PathBuf {
    dir.join(format!("{i:04}_{part}.fras"))
}

const PARTS: [&str; 4] = ["image", "alpha", "fg", "bg"];

pub fn save_dataset(dir: &Path, data: &[MattingSample]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (i, s) in data.iter().enumerate() {
        for (part, r) in PARTS.iter().zip([&s.image, &s.alpha, &s.fg, &s.bg]) {
            save_fras(sample_path(dir, i, part), r)?;
        }
    }
    Ok(())
}

/// Loads `0000_image.fras`, `0000_alpha.fras`, … until the first missing
/// index. `fg`/`bg` are optional and default to zeros.
pub fn load_dataset(dir: &Path) -> Result<Vec<MattingSample>> {
    let mut out = Vec::new();
    while sample_path(dir, out.len(), "image").exists() {
        let i = out.len();
        let image = load_fras(sample_path(dir, i, "image"))?;
        let alpha = load_fras(sample_path(dir, i, "alpha"))?;
        let (w, h, c) = (image.width(), image.height(), image.channels());
        let layer = |part: &str| -> Result<Raster> {
            let p = sample_path(dir, i, part);
            if p.exists() {
                load_fras(p)
            } else {
                Ok(Raster::zeros(w, h, c))
            }
        };
        out.push(MattingSample {
            fg: layer("fg")?,
            bg: layer("bg")?,
            image,
            alpha,
        });
    }
    if out.is_empty() {
        return Err(Error::Format(format!("no samples in {}", dir.display())));
    }
    Ok(out)
}
