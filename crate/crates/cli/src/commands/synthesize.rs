//! `hdst synthesize`: clean cube in, noisy cube plus manifest out.
//!
//! The manifest records the spec and the realized per-band draws; feeding
//! the same spec back through `synthesize` reproduces the noisy cube byte
//! for byte, so the manifest is enough to regenerate or audit a dataset.

use std::fs;
use std::path::Path;

use hdst_core::noise::{apply_noise_with_log, load_cube, save_cube};

use crate::config::{path_required, RunConfig};
use crate::error::{CliError, Result};

pub fn run(cfg: &RunConfig, out: &Path) -> Result<()> {
    let clean_path = path_required(&cfg.data.clean, "data.clean")?;
    let spec = cfg.noise_required()?;
    let clean = load_cube(&clean_path)?;
    let (noisy, realization) = apply_noise_with_log(&clean, spec)?;
    if noisy.data == clean.data {
        eprintln!("warning: noise spec left the cube unchanged");
    }
    fs::create_dir_all(out)?;
    let noisy_path = out.join("noisy.hdc");
    save_cube(&noisy, &noisy_path)?;
    let manifest = serde_json::json!({
        "input": clean_path,
        "spec": spec,
        "realization": realization,
    });
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Io(format!("manifest: {e}")))?;
    fs::write(out.join("noise_manifest.json"), text + "\n")?;
    println!(
        "wrote {} ({} bands, {}x{}, pattern {:?})",
        noisy_path.display(),
        noisy.bands,
        noisy.height,
        noisy.width,
        spec.pattern
    );
    Ok(())
}
