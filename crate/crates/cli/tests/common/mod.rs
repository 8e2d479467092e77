//! Shared helpers for the CLI integration tests: the standard fixture cube,
//! binary invocation, and artifact hashing.

#![allow(dead_code)] // each test binary uses its own subset

use std::path::{Path, PathBuf};
use std::process::Command;

use sha2::{Digest, Sha256};

use hdst_core::noise::{save_cube, HsiCube};
use hdst_core::rng::CounterRng;

/// The standard 4-band 32x32 test cube: bilinear upsampling of a seeded
/// 5x5 coarse grid per band. Smooth enough to denoise, and built from
/// nothing but rational arithmetic, so the bytes are identical on every
/// platform (no libm in the loop).
pub fn clean_cube() -> HsiCube {
    let (bands, h, w, coarse) = (4usize, 32usize, 32usize, 5usize);
    let mut rng = CounterRng::new(0x4c45414e);
    let grid: Vec<f64> = (0..bands * coarse * coarse)
        .map(|_| rng.uniform(0.2, 0.8))
        .collect();
    let cell = (h / (coarse - 1)) as f64;
    let mut data = Vec::with_capacity(bands * h * w);
    for b in 0..bands {
        let g = |y: usize, x: usize| grid[(b * coarse + y) * coarse + x];
        for y in 0..h {
            let fy = y as f64 / cell;
            let (iy, ty) = (fy.floor() as usize, fy.fract());
            for x in 0..w {
                let fx = x as f64 / cell;
                let (ix, tx) = (fx.floor() as usize, fx.fract());
                let v = g(iy, ix) * (1.0 - ty) * (1.0 - tx)
                    + g(iy, ix + 1) * (1.0 - ty) * tx
                    + g(iy + 1, ix) * ty * (1.0 - tx)
                    + g(iy + 1, ix + 1) * ty * tx;
                data.push(v as f32);
            }
        }
    }
    HsiCube::new(bands, h, w, data, Some((400.0, 700.0))).unwrap()
}

pub fn fixture_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/clean.hdc")
}

/// Writes the fixture cube into `dir` and returns its path.
pub fn write_clean(dir: &Path) -> PathBuf {
    let p = dir.join("clean.hdc");
    save_cube(&clean_cube(), &p).unwrap();
    p
}

/// `--set` flags reproducing the toy model configuration on 4 bands.
pub const TOY_MODEL: &[&str] = &[
    "--set",
    "model.bands=4",
    "--set",
    "model.embed_channels=8",
    "--set",
    "model.n_rtl=1",
    "--set",
    "model.blocks_per_rtl=2",
    "--set",
    "model.window_m=4",
    "--set",
    "model.fpp_depth=1",
];

pub fn hdst() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hdst"))
}

/// Runs the binary in `dir` and asserts success; returns stdout.
pub fn run_ok(dir: &Path, args: &[&str]) -> String {
    let out = hdst().current_dir(dir).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "hdst {args:?} exited with {:?}\n--- stdout\n{}--- stderr\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Runs the binary expecting failure; returns (exit code, stderr).
pub fn run_err(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = hdst().current_dir(dir).args(args).output().unwrap();
    assert!(
        !out.status.success(),
        "hdst {args:?} unexpectedly succeeded:\n{}",
        String::from_utf8_lossy(&out.stdout),
    );
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stderr).unwrap(),
    )
}

pub fn sha256_file(p: &Path) -> String {
    let mut h = Sha256::new();
    h.update(std::fs::read(p).unwrap());
    format!("{:x}", h.finalize())
}
