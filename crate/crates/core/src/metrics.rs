//! PSNR, SSIM, and SAM scoring of denoised cubes against ground truth.
//!
//! PSNR and SSIM are computed per band and averaged; SAM is computed per
//! pixel over the spectral axis and averaged over pixels with nonzero
//! spectra. The dynamic range `peak` defaults to the reference cube's
//! maximum value; imaging gear disagrees on bit depth, so it stays
//! configurable. All three are pure functions: band and pixel order never
//! affects the result beyond float summation order, which is fixed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::noise::HsiCube;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("cube shapes differ: {expected:?} vs {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize, usize),
        actual: (usize, usize, usize),
    },
    #[error("ssim needs at least {0}x{0} spatial extent, got {height}x{width}", SSIM_WINDOW)]
    SpatialTooSmall { height: usize, width: usize },
    #[error("sam undefined: every pixel has a zero spectrum")]
    AllSpectraZero,
    #[error("peak must be positive and finite, got {peak}")]
    BadPeak { peak: f64 },
}

pub type Result<T> = std::result::Result<T, MetricError>;

/// Zero-MSE bands report this instead of infinity.
pub const PSNR_CAP_DB: f64 = 100.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

fn check_shapes(x: &HsiCube, y: &HsiCube) -> Result<()> {
    let a = (x.bands, x.height, x.width);
    let b = (y.bands, y.height, y.width);
    if a != b {
        return Err(MetricError::ShapeMismatch {
            expected: b,
            actual: a,
        });
    }
    Ok(())
}

fn check_peak(peak: f64) -> Result<()> {
    if !(peak.is_finite() && peak > 0.0) {
        return Err(MetricError::BadPeak { peak });
    }
    Ok(())
}

/// Per-band `10*log10(peak^2 / MSE)` and its mean, capped at
/// [`PSNR_CAP_DB`].
pub fn psnr(x: &HsiCube, y: &HsiCube, peak: f64) -> Result<(Vec<f64>, f64)> {
    check_shapes(x, y)?;
    check_peak(peak)?;
    let mut per_band = Vec::with_capacity(x.bands);
    for b in 0..x.bands {
        let mse: f64 = x
            .band(b)
            .iter()
            .zip(y.band(b))
            .map(|(&a, &c)| {
                let d = f64::from(a) - f64::from(c);
                d * d
            })
            .sum::<f64>()
            / x.plane() as f64;
        let db = if mse == 0.0 {
            PSNR_CAP_DB
        } else {
            (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB)
        };
        per_band.push(db);
    }
    let mean = per_band.iter().sum::<f64>() / per_band.len() as f64;
    Ok((per_band, mean))
}

fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut total = 0.0;
    for i in 0..SSIM_WINDOW {
        for j in 0..SSIM_WINDOW {
            let d2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
            let v = (-d2 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[i * SSIM_WINDOW + j] = v;
            total += v;
        }
    }
    for v in &mut w {
        *v /= total;
    }
    w
}

/// Single-scale SSIM per band with an 11x11 Gaussian window (sigma 1.5)
/// over the valid interior, stabilizers `C1=(0.01*peak)^2`,
/// `C2=(0.03*peak)^2`. Returns per-band values and their mean.
pub fn ssim(x: &HsiCube, y: &HsiCube, peak: f64) -> Result<(Vec<f64>, f64)> {
    check_shapes(x, y)?;
    check_peak(peak)?;
    let (h, w) = (x.height, x.width);
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(MetricError::SpatialTooSmall {
            height: h,
            width: w,
        });
    }
    let win = gaussian_window();
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let half = SSIM_WINDOW / 2;
    let mut per_band = Vec::with_capacity(x.bands);
    for b in 0..x.bands {
        let xp = x.band(b);
        let yp = y.band(b);
        let mut total = 0.0;
        let mut count = 0usize;
        for cy in half..h - half {
            for cx in half..w - half {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..SSIM_WINDOW {
                    let row = (cy + i - half) * w + cx - half;
                    for j in 0..SSIM_WINDOW {
                        let wv = win[i * SSIM_WINDOW + j];
                        let a = f64::from(xp[row + j]);
                        let c = f64::from(yp[row + j]);
                        mx += wv * a;
                        my += wv * c;
                        sxx += wv * a * a;
                        syy += wv * c * c;
                        sxy += wv * a * c;
                    }
                }
                let (vx, vy, cov) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
                let v = ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                total += v;
                count += 1;
            }
        }
        per_band.push(total / count as f64);
    }
    let mean = per_band.iter().sum::<f64>() / per_band.len() as f64;
    Ok((per_band, mean))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamScore {
    pub mean_deg: f64,
    /// Pixels whose spectrum was zero in either cube, excluded from the mean.
    pub skipped: usize,
}

/// Mean spectral angle in degrees over pixels with nonzero spectra.
///
/// The angle uses the two-argument arctangent of the chord lengths between
/// unit spectra, `2*atan2(|u - v|, |u + v|)`, which is accurate near 0 and
/// 180 degrees where the arccosine of a clamped cosine loses all precision;
/// identical spectra score exactly zero.
pub fn sam(x: &HsiCube, y: &HsiCube) -> Result<SamScore> {
    check_shapes(x, y)?;
    let hw = x.plane();
    let mut total = 0.0;
    let mut valid = 0usize;
    for i in 0..hw {
        let (mut nx, mut ny) = (0.0, 0.0);
        for b in 0..x.bands {
            let a = f64::from(x.data[b * hw + i]);
            let c = f64::from(y.data[b * hw + i]);
            nx += a * a;
            ny += c * c;
        }
        if nx == 0.0 || ny == 0.0 {
            continue;
        }
        let (nx, ny) = (nx.sqrt(), ny.sqrt());
        let (mut diff2, mut sum2) = (0.0, 0.0);
        for b in 0..x.bands {
            let u = f64::from(x.data[b * hw + i]) / nx;
            let v = f64::from(y.data[b * hw + i]) / ny;
            diff2 += (u - v) * (u - v);
            sum2 += (u + v) * (u + v);
        }
        total += (2.0 * diff2.sqrt().atan2(sum2.sqrt())).to_degrees();
        valid += 1;
    }
    if valid == 0 {
        return Err(MetricError::AllSpectraZero);
    }
    Ok(SamScore {
        mean_deg: total / valid as f64,
        skipped: hw - valid,
    })
}

/// Combined score sheet for one (test, reference) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_band_psnr: Vec<f64>,
    pub per_band_ssim: Vec<f64>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub mean_sam: f64,
    pub sam_skipped: usize,
    pub data_peak: f64,
}

/// Score `test` against the ground-truth `reference`. `peak` falls back to
/// the reference maximum.
pub fn evaluate_pair(test: &HsiCube, reference: &HsiCube, peak: Option<f64>) -> Result<MetricReport> {
    let peak = match peak {
        Some(p) => p,
        None => f64::from(reference.min_max().1),
    };
    check_peak(peak)?;
    let (per_band_psnr, mean_psnr) = psnr(test, reference, peak)?;
    let (per_band_ssim, mean_ssim) = ssim(test, reference, peak)?;
    let angle = sam(test, reference)?;
    Ok(MetricReport {
        per_band_psnr,
        per_band_ssim,
        mean_psnr,
        mean_ssim,
        mean_sam: angle.mean_deg,
        sam_skipped: angle.skipped,
        data_peak: peak,
    })
}

impl MetricReport {
    /// Fixed-precision aligned table; stable across runs for golden files.
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("{:>4}  {:>12}  {:>10}\n", "band", "psnr_db", "ssim"));
        for (i, (p, q)) in self
            .per_band_psnr
            .iter()
            .zip(&self.per_band_ssim)
            .enumerate()
        {
            s.push_str(&format!("{i:>4}  {p:>12.6}  {q:>10.6}\n"));
        }
        s.push_str(&format!(
            "{:>4}  {:>12.6}  {:>10.6}\n",
            "mean", self.mean_psnr, self.mean_ssim
        ));
        s.push_str(&format!("sam_deg      {:.6}\n", self.mean_sam));
        s.push_str(&format!("data_peak    {:.6}\n", self.data_peak));
        s.push_str(&format!("sam_skipped  {}\n", self.sam_skipped));
        s
    }
}
