//! `hdst evaluate`: score a cube against a reference; report to stdout plus
//! machine- and human-readable files.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use hdst_core::metrics::evaluate_pair;
use hdst_core::noise::load_cube;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn run(cfg: &RunConfig, out: &Path) -> Result<()> {
    let test_path = cfg
        .eval
        .test
        .clone()
        .unwrap_or_else(|| out.join("denoised.hdc"));
    let ref_path = cfg
        .eval
        .reference
        .clone()
        .or_else(|| cfg.data.clean.clone())
        .ok_or_else(|| CliError::Config("missing `eval.reference` or `data.clean` path".into()))?;
    let test = load_cube(&test_path)?;
    let reference = load_cube(&ref_path)?;
    let report = evaluate_pair(&test, &reference, cfg.eval.peak)?;

    let prefix = cfg.eval.report.clone().unwrap_or_else(|| out.join("report"));
    if let Some(dir) = prefix.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Io(format!("report: {e}")))?;
    fs::write(with_suffix(&prefix, ".json"), json + "\n")?;
    let table = report.render_table();
    fs::write(with_suffix(&prefix, ".txt"), &table)?;
    print!("{table}");
    Ok(())
}
