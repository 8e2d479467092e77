//! `hdst train`: fit the model on patch pairs cut from a clean/noisy cube
//! pair.
//!
//! Patch descriptors are drawn once from the clean cube's geometry and used
//! to index both cubes, so each pair sees the same window and augmentation.
//! Seeds for initialization, patch layout, and per-epoch shuffle order are
//! independent substreams of `train.seed`; a resumed run replays the exact
//! shuffle sequence of an uninterrupted one because epoch order depends
//! only on (seed, epoch).

use std::fs;
use std::io::Write;
use std::path::Path;

use hdst_core::net::{load_checkpoint, save_checkpoint, HdstModel};
use hdst_core::noise::{crop_and_augment, cube_to_tensor, extract, load_cube};
use hdst_core::rng::{fnv1a64, substream};
use hdst_core::tensor::{AdamState, Tensor};
use hdst_core::train::train_epoch;

use crate::config::{path_required, RunConfig};
use crate::error::{CliError, Result};

pub fn run(cfg: &RunConfig, out: &Path) -> Result<()> {
    let clean_path = path_required(&cfg.data.clean, "data.clean")?;
    let noisy_path = path_required(&cfg.data.noisy, "data.noisy")?;
    let clean = load_cube(&clean_path)?;
    let noisy = load_cube(&noisy_path)?;
    if (clean.bands, clean.height, clean.width) != (noisy.bands, noisy.height, noisy.width) {
        return Err(CliError::Config(format!(
            "clean cube is {}x{}x{} but noisy cube is {}x{}x{}",
            clean.bands, clean.height, clean.width, noisy.bands, noisy.height, noisy.width
        )));
    }
    let model_cfg = cfg.model_required()?.clone();
    if model_cfg.bands != clean.bands {
        return Err(CliError::Config(format!(
            "model expects {} bands, data has {}",
            model_cfg.bands, clean.bands
        )));
    }
    let t = &cfg.train;

    let layout_seed = substream(t.seed, fnv1a64("patch"));
    let set = crop_and_augment(
        &clean,
        cfg.data.patch_size,
        cfg.data.stride,
        cfg.data.augment,
        layout_seed,
    )?;
    let pairs: Vec<(Tensor, Tensor)> = set
        .patches
        .iter()
        .map(|d| {
            (
                cube_to_tensor(&extract(&noisy, d)),
                cube_to_tensor(&extract(&clean, d)),
            )
        })
        .collect();

    fs::create_dir_all(out)?;
    let ckpt_path = t.checkpoint.clone().unwrap_or_else(|| out.join("model.ckpt"));
    let mut model;
    let mut optim;
    let mut start_epoch = 0u64;
    if t.resume && ckpt_path.exists() {
        let ckpt = load_checkpoint(&ckpt_path)?;
        if ckpt.config != model_cfg {
            return Err(CliError::Config(format!(
                "checkpoint {} was written by a different model configuration",
                ckpt_path.display()
            )));
        }
        model = ckpt.restore_model()?;
        optim = ckpt
            .restore_optimizer()
            .unwrap_or_else(|| AdamState::new(t.lr.initial));
        start_epoch = ckpt.epoch;
        println!(
            "resumed {} at epoch {start_epoch}, step {}",
            ckpt_path.display(),
            optim.step_count()
        );
    } else {
        model = HdstModel::new(model_cfg, substream(t.seed, fnv1a64("init")))?;
        optim = AdamState::new(t.lr.initial);
    }

    let log_path = t.loss_log.clone().unwrap_or_else(|| out.join("loss.csv"));
    let mut log = if start_epoch > 0 && log_path.exists() {
        fs::OpenOptions::new().append(true).open(&log_path)?
    } else {
        let mut f = fs::File::create(&log_path)?;
        writeln!(f, "epoch,lr,loss")?;
        f
    };

    let order_root = substream(t.seed, fnv1a64("order"));
    println!(
        "training on {} patch pairs of {} bands, {} epochs, batch {}",
        pairs.len(),
        clean.bands,
        t.epochs,
        t.batch_size
    );
    for epoch in start_epoch..t.epochs {
        optim.set_lr(t.lr.at(epoch));
        let loss = train_epoch(
            &mut model,
            &mut optim,
            &pairs,
            t.batch_size,
            substream(order_root, epoch),
        )?;
        writeln!(log, "{},{},{loss}", epoch, optim.lr())?;
        println!("epoch {:>4}  lr {:<10}  loss {loss:.6e}", epoch, optim.lr());
        let done = epoch + 1;
        if done % t.checkpoint_interval == 0 && done != t.epochs {
            save_checkpoint(&ckpt_path, &model, Some(&optim), done, optim.step_count())?;
        }
    }
    save_checkpoint(&ckpt_path, &model, Some(&optim), t.epochs, optim.step_count())?;
    println!("wrote {}", ckpt_path.display());
    Ok(())
}
