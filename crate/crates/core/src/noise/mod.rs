//! Cube I/O, patch extraction, and synthetic noise.
//!
//! - [`cube`]: the HDC1 container format and PGM band export
//! - [`patch`]: deterministic tiling and dihedral augmentation
//! - [`synth`]: the five seeded noise generators

pub mod cube;
pub mod patch;
pub mod synth;

pub use cube::{
    cube_to_tensor, load_cube, save_cube, tensor_to_cube, write_band_pgm, CubeError, HsiCube,
};
pub use patch::{crop_and_augment, extract, Augment, PatchDescriptor, PatchError, PatchSet};
pub use synth::{
    apply_noise, apply_noise_with_log, BandEffect, EffectKind, NoiseError, NoisePattern,
    NoiseRealization, NoiseSpec,
};
