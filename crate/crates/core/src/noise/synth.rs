//! Seeded synthetic noise for hyperspectral cubes.
//!
//! Five patterns: non-i.i.d. Gaussian alone, Gaussian plus stripes, Gaussian
//! plus deadlines (zeroed columns), Gaussian plus salt-and-pepper impulses,
//! and a mixture where each affected band independently receives one of the
//! three structured effects. The Gaussian component always covers every band;
//! structured effects hit an exact-count subset of bands.
//!
//! All randomness flows from `NoiseSpec::seed` through the sub-stream labels
//! below, so a band's noise never depends on processing order and bands can
//! be generated in parallel:
//!
//! ```text
//! label            stream
//! 1                affected-band choice; then, for mixture, one sub-pattern
//!                  draw per affected band in ascending band order
//! (2 << 32) | b    band b: sigma_b, then the Gaussian field row-major
//! (3 << 32) | b    band b: structured effect (column fraction, columns,
//!                  stripe offsets / impulse ratio, positions, polarities)
//! ```
//!
//! Values are not clamped; noisy cubes may leave [0, 1].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{substream, CounterRng};

use super::cube::HsiCube;

const L_SELECT: u64 = 1;

fn l_gauss(band: usize) -> u64 {
    (2u64 << 32) | band as u64
}

fn l_struct(band: usize) -> u64 {
    (3u64 << 32) | band as u64
}

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("noise spec: {0}")]
    InvalidSpec(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePattern {
    NoniidGaussian,
    GaussianStripe,
    GaussianDeadline,
    GaussianImpulse,
    Mixture,
}

/// Full description of a noise draw. Identical (cube, spec) pairs produce
/// identical output bytes.
///
/// `sigma_range` is in intensity units of an assumed 8-bit scale mapped to
/// [0, 1]: a catalog value of "sigma 10..70" is stored as (10/255, 70/255).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub pattern: NoisePattern,
    #[serde(default = "d_sigma")]
    pub sigma_range: (f64, f64),
    #[serde(default = "d_band_fraction")]
    pub affected_band_fraction: f64,
    #[serde(default = "d_column_fraction")]
    pub column_fraction_range: (f64, f64),
    #[serde(default = "d_stripe_offset")]
    pub stripe_offset_range: (f64, f64),
    #[serde(default = "d_impulse_ratio")]
    pub impulse_ratio_range: (f64, f64),
    #[serde(default)]
    pub seed: u64,
}

fn d_sigma() -> (f64, f64) {
    (10.0 / 255.0, 70.0 / 255.0)
}
fn d_band_fraction() -> f64 {
    1.0 / 3.0
}
fn d_column_fraction() -> (f64, f64) {
    (0.05, 0.15)
}
fn d_stripe_offset() -> (f64, f64) {
    (-0.25, 0.25)
}
fn d_impulse_ratio() -> (f64, f64) {
    (0.1, 0.7)
}

impl NoiseSpec {
    pub fn new(pattern: NoisePattern, seed: u64) -> NoiseSpec {
        NoiseSpec {
            pattern,
            sigma_range: d_sigma(),
            affected_band_fraction: d_band_fraction(),
            column_fraction_range: d_column_fraction(),
            stripe_offset_range: d_stripe_offset(),
            impulse_ratio_range: d_impulse_ratio(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        let ordered = |name: &str, (lo, hi): (f64, f64)| {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(NoiseError::InvalidSpec(format!(
                    "{name} must be an ordered finite range, got ({lo}, {hi})"
                )));
            }
            Ok(())
        };
        ordered("sigma_range", self.sigma_range)?;
        ordered("column_fraction_range", self.column_fraction_range)?;
        ordered("stripe_offset_range", self.stripe_offset_range)?;
        ordered("impulse_ratio_range", self.impulse_ratio_range)?;
        if self.sigma_range.0 < 0.0 {
            return Err(NoiseError::InvalidSpec("sigma must be nonnegative".into()));
        }
        let unit = |name: &str, v: f64| {
            if !(0.0..=1.0).contains(&v) {
                return Err(NoiseError::InvalidSpec(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
            Ok(())
        };
        unit("affected_band_fraction", self.affected_band_fraction)?;
        unit("column_fraction lo", self.column_fraction_range.0)?;
        unit("column_fraction hi", self.column_fraction_range.1)?;
        unit("impulse_ratio lo", self.impulse_ratio_range.0)?;
        unit("impulse_ratio hi", self.impulse_ratio_range.1)?;
        Ok(())
    }
}

/// What one band actually received, for the regeneration manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandEffect {
    pub band: usize,
    #[serde(flatten)]
    pub kind: EffectKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "snake_case")]
pub enum EffectKind {
    Stripe {
        columns: Vec<usize>,
        offsets: Vec<f64>,
    },
    Deadline {
        columns: Vec<usize>,
    },
    Impulse {
        ratio: f64,
        count: usize,
    },
}

/// Record of one apply_noise draw: drawn sigmas plus per-band structured
/// effects, enough to audit a noisy cube without rerunning the generator.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseRealization {
    pub sigma_per_band: Vec<f64>,
    pub band_effects: Vec<BandEffect>,
}

fn exact_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).min(n)
}

pub fn apply_noise(cube: &HsiCube, spec: &NoiseSpec) -> Result<HsiCube, NoiseError> {
    apply_noise_with_log(cube, spec).map(|(c, _)| c)
}

pub fn apply_noise_with_log(
    cube: &HsiCube,
    spec: &NoiseSpec,
) -> Result<(HsiCube, NoiseRealization), NoiseError> {
    spec.validate()?;
    let mut out = cube.clone();
    let width = cube.width;
    let hw = cube.plane();

    let mut sigma_per_band = Vec::with_capacity(cube.bands);
    for band in 0..cube.bands {
        let mut rng = CounterRng::new(substream(spec.seed, l_gauss(band)));
        let sigma = rng.uniform(spec.sigma_range.0, spec.sigma_range.1);
        sigma_per_band.push(sigma);
        // Skipping the zero-sigma add keeps output bits equal to input bits.
        if sigma != 0.0 {
            for v in out.band_mut(band) {
                *v = (f64::from(*v) + sigma * rng.normal()) as f32;
            }
        }
    }

    let mut band_effects = Vec::new();
    if spec.pattern != NoisePattern::NoniidGaussian {
        let mut select = CounterRng::new(substream(spec.seed, L_SELECT));
        let k = exact_count(spec.affected_band_fraction, cube.bands);
        let affected = select.choose_sorted(cube.bands, k);
        for &band in &affected {
            let sub = match spec.pattern {
                NoisePattern::GaussianStripe => 0,
                NoisePattern::GaussianDeadline => 1,
                NoisePattern::GaussianImpulse => 2,
                NoisePattern::Mixture => select.below(3),
                NoisePattern::NoniidGaussian => unreachable!(),
            };
            let mut rng = CounterRng::new(substream(spec.seed, l_struct(band)));
            let plane = out.band_mut(band);
            let kind = match sub {
                0 => {
                    let fraction = rng.uniform(
                        spec.column_fraction_range.0,
                        spec.column_fraction_range.1,
                    );
                    let columns = rng.choose_sorted(width, exact_count(fraction, width));
                    let offsets: Vec<f64> = columns
                        .iter()
                        .map(|_| {
                            rng.uniform(spec.stripe_offset_range.0, spec.stripe_offset_range.1)
                        })
                        .collect();
                    for (col, off) in columns.iter().zip(&offsets) {
                        for row in plane.chunks_exact_mut(width) {
                            row[*col] = (f64::from(row[*col]) + off) as f32;
                        }
                    }
                    EffectKind::Stripe { columns, offsets }
                }
                1 => {
                    let fraction = rng.uniform(
                        spec.column_fraction_range.0,
                        spec.column_fraction_range.1,
                    );
                    let columns = rng.choose_sorted(width, exact_count(fraction, width));
                    for col in &columns {
                        for row in plane.chunks_exact_mut(width) {
                            row[*col] = 0.0;
                        }
                    }
                    EffectKind::Deadline { columns }
                }
                _ => {
                    let ratio =
                        rng.uniform(spec.impulse_ratio_range.0, spec.impulse_ratio_range.1);
                    let positions = rng.choose_sorted(hw, exact_count(ratio, hw));
                    for pos in &positions {
                        plane[*pos] = if rng.next_u64() & 1 == 1 { 1.0 } else { 0.0 };
                    }
                    EffectKind::Impulse {
                        ratio,
                        count: positions.len(),
                    }
                }
            };
            band_effects.push(BandEffect { band, kind });
        }
    }

    Ok((
        out,
        NoiseRealization {
            sigma_per_band,
            band_effects,
        },
    ))
}
