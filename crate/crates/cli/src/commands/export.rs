//! `hdst export`: bands to 16-bit PGM for quick visual inspection.

use std::fs;
use std::path::Path;

use hdst_core::noise::{load_cube, write_band_pgm};

use crate::error::Result;

pub fn run(cube_path: &Path, band: Option<usize>, out: &Path) -> Result<()> {
    let cube = load_cube(cube_path)?;
    fs::create_dir_all(out)?;
    let bands: Vec<usize> = match band {
        Some(b) => vec![b],
        None => (0..cube.bands).collect(),
    };
    for b in bands {
        let path = out.join(format!("band_{b:03}.pgm"));
        write_band_pgm(&cube, b, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
