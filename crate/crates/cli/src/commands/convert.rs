//! `hdst convert`: wrap a headerless band-major little-endian f32 dump
//! into the self-describing cube container.

use std::fs;
use std::path::Path;

use hdst_core::noise::{save_cube, HsiCube};

use crate::error::{CliError, Result};

pub fn run(
    raw: &Path,
    bands: usize,
    height: usize,
    width: usize,
    wavelength: Option<&str>,
    out_file: &Path,
) -> Result<()> {
    let wavelength_nm = wavelength
        .map(|s| -> Result<(f64, f64)> {
            let parse = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Config(format!("bad wavelength bound {v:?}")))
            };
            let (lo, hi) = s
                .split_once(',')
                .ok_or_else(|| CliError::Config(format!("wavelength needs \"lo,hi\", got {s:?}")))?;
            Ok((parse(lo)?, parse(hi)?))
        })
        .transpose()?;

    let bytes = fs::read(raw)?;
    let expected = bands * height * width * 4;
    if bytes.len() != expected {
        return Err(CliError::Io(format!(
            "{} holds {} bytes; {}x{}x{} f32 needs {expected}",
            raw.display(),
            bytes.len(),
            bands,
            height,
            width
        )));
    }
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let cube = HsiCube::new(bands, height, width, data, wavelength_nm)?;
    if let Some(dir) = out_file.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    save_cube(&cube, out_file)?;
    println!("wrote {}", out_file.display());
    Ok(())
}
