//! `hdst denoise`: run a trained checkpoint over a full cube, tiled with
//! overlap averaging.

use std::fs;
use std::path::Path;

use hdst_core::net::load_checkpoint;
use hdst_core::noise::{load_cube, save_cube};
use hdst_core::train::denoise_cube;

use crate::config::{path_required, RunConfig};
use crate::error::Result;

pub fn run(cfg: &RunConfig, out: &Path) -> Result<()> {
    let noisy_path = path_required(&cfg.data.noisy, "data.noisy")?;
    let ckpt_path = cfg
        .train
        .checkpoint
        .clone()
        .unwrap_or_else(|| out.join("model.ckpt"));
    let cube = load_cube(&noisy_path)?;
    let ckpt = load_checkpoint(&ckpt_path)?;
    let model = ckpt.restore_model()?;
    let denoised = denoise_cube(&model, &cube, cfg.data.tile, cfg.data.overlap)?;
    fs::create_dir_all(out)?;
    let out_path = out.join("denoised.hdc");
    save_cube(&denoised, &out_path)?;
    println!(
        "wrote {} (tile {}, overlap {})",
        out_path.display(),
        cfg.data.tile,
        cfg.data.overlap
    );
    Ok(())
}
