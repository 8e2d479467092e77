//! Hyperspectral cube container and the HDC1 file format.
//!
//! A cube is `bands` planes of `height * width` little-endian f32 scalars in
//! band-major (plane-sequential) order, nominally in `[0, 1]`. Values outside
//! that range are legal on disk and in memory; [`HsiCube::out_of_range`]
//! counts them so callers can warn.
//!
//! File layout ("HDC1"):
//!
//! ```text
//! bytes 0..8    magic "HDCUBE01"
//! bytes 8..12   header length N, u32 little-endian
//! bytes 12..12+N  UTF-8 JSON: {"bands","height","width","dtype":"f32",
//!                 "wavelength_nm":[lo,hi]?}
//! rest          bands*height*width little-endian f32, band-major
//! ```

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"HDCUBE01";

#[derive(Debug, Error)]
pub enum CubeError {
    #[error("not an HDC1 file: bad magic {found:02x?}")]
    BadMagic { found: Vec<u8> },
    #[error("cube header: {0}")]
    HeaderParse(String),
    #[error("cube payload holds {actual} scalars, header claims {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("cube file truncated: wanted {expected} more bytes, found {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("non-finite value at scalar index {index}")]
    NonFinite { index: usize },
    #[error("band {band} out of range for {bands}-band cube")]
    BandRange { band: usize, bands: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CubeError>;

/// Dense hyperspectral cube, band-major f32.
#[derive(Clone, PartialEq)]
pub struct HsiCube {
    pub bands: usize,
    pub height: usize,
    pub width: usize,
    /// `bands * height * width` scalars, plane-sequential.
    pub data: Vec<f32>,
    /// Optional spectral coverage, nanometres.
    pub wavelength_nm: Option<(f64, f64)>,
}

impl fmt::Debug for HsiCube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "HsiCube({}x{}x{}, wavelength {:?})",
            self.bands, self.height, self.width, self.wavelength_nm
        )
    }
}

impl HsiCube {
    pub fn new(
        bands: usize,
        height: usize,
        width: usize,
        data: Vec<f32>,
        wavelength_nm: Option<(f64, f64)>,
    ) -> Result<HsiCube> {
        let expected = bands * height * width;
        if data.len() != expected {
            return Err(CubeError::DimensionMismatch {
                expected,
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(CubeError::NonFinite { index: i });
        }
        Ok(HsiCube {
            bands,
            height,
            width,
            data,
            wavelength_nm,
        })
    }

    pub fn zeros(bands: usize, height: usize, width: usize) -> HsiCube {
        HsiCube {
            bands,
            height,
            width,
            data: vec![0.0; bands * height * width],
            wavelength_nm: None,
        }
    }

    pub fn constant(bands: usize, height: usize, width: usize, v: f32) -> HsiCube {
        HsiCube {
            bands,
            height,
            width,
            data: vec![v; bands * height * width],
            wavelength_nm: None,
        }
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn band(&self, b: usize) -> &[f32] {
        let hw = self.plane();
        &self.data[b * hw..(b + 1) * hw]
    }

    pub fn band_mut(&mut self, b: usize) -> &mut [f32] {
        let hw = self.plane();
        &mut self.data[b * hw..(b + 1) * hw]
    }

    pub fn at(&self, b: usize, y: usize, x: usize) -> f32 {
        self.data[(b * self.height + y) * self.width + x]
    }

    /// Count of scalars outside the nominal [0, 1] range, for warning output.
    pub fn out_of_range(&self) -> usize {
        self.data.iter().filter(|v| **v < 0.0 || **v > 1.0).count()
    }

    pub fn min_max(&self) -> (f32, f32) {
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for &v in &self.data {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    bands: usize,
    height: usize,
    width: usize,
    dtype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    wavelength_nm: Option<(f64, f64)>,
}

pub fn save_cube(cube: &HsiCube, path: &Path) -> Result<()> {
    let expected = cube.bands * cube.plane();
    if cube.data.len() != expected {
        return Err(CubeError::DimensionMismatch {
            expected,
            actual: cube.data.len(),
        });
    }
    let header = Header {
        bands: cube.bands,
        height: cube.height,
        width: cube.width,
        dtype: "f32".into(),
        wavelength_nm: cube.wavelength_nm,
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| CubeError::HeaderParse(e.to_string()))?;
    let header_len = u32::try_from(header_json.len())
        .map_err(|_| CubeError::HeaderParse("header too large".into()))?;

    let mut bytes = Vec::with_capacity(12 + header_json.len() + 4 * cube.data.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&header_len.to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for v in &cube.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }

    let tmp = path.with_extension("hdc.partial");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_cube(path: &Path) -> Result<HsiCube> {
    let bytes = fs::read(path)?;
    if bytes.len() < 8 {
        return Err(CubeError::TruncatedPayload {
            expected: 8,
            actual: bytes.len(),
        });
    }
    if &bytes[..8] != MAGIC {
        return Err(CubeError::BadMagic {
            found: bytes[..8].to_vec(),
        });
    }
    if bytes.len() < 12 {
        return Err(CubeError::TruncatedPayload {
            expected: 12,
            actual: bytes.len(),
        });
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = 12 + header_len;
    if bytes.len() < body {
        return Err(CubeError::TruncatedPayload {
            expected: body,
            actual: bytes.len(),
        });
    }
    let header: Header = serde_json::from_slice(&bytes[12..body])
        .map_err(|e| CubeError::HeaderParse(e.to_string()))?;
    if header.dtype != "f32" {
        return Err(CubeError::HeaderParse(format!(
            "unsupported dtype {:?}",
            header.dtype
        )));
    }

    let payload = &bytes[body..];
    if payload.len() % 4 != 0 {
        // A scalar was cut off mid-write; whole-scalar shortfalls are
        // reported as a dimension mismatch below.
        return Err(CubeError::TruncatedPayload {
            expected: payload.len() + 4 - payload.len() % 4,
            actual: payload.len(),
        });
    }
    let scalars = payload.len() / 4;
    let expected = header.bands * header.height * header.width;
    if scalars != expected {
        return Err(CubeError::DimensionMismatch {
            expected,
            actual: scalars,
        });
    }
    let mut data = Vec::with_capacity(scalars);
    for chunk in payload.chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().unwrap()));
    }
    HsiCube::new(
        header.bands,
        header.height,
        header.width,
        data,
        header.wavelength_nm,
    )
}

/// One band as a 16-bit binary PGM (P5, big-endian samples per the netpbm
/// convention). Values are clamped to [0, 1] and scaled to 0..=65535.
pub fn write_band_pgm(cube: &HsiCube, band: usize, path: &Path) -> Result<()> {
    if band >= cube.bands {
        return Err(CubeError::BandRange {
            band,
            bands: cube.bands,
        });
    }
    let mut bytes = Vec::with_capacity(20 + 2 * cube.plane());
    bytes.extend_from_slice(format!("P5\n{} {}\n65535\n", cube.width, cube.height).as_bytes());
    for &v in cube.band(band) {
        let q = (f64::from(v).clamp(0.0, 1.0) * 65535.0).round() as u16;
        bytes.extend_from_slice(&q.to_be_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Cube as a `[1, bands, height, width]` f64 tensor for the network.
pub fn cube_to_tensor(cube: &HsiCube) -> Tensor {
    let data: Vec<f64> = cube.data.iter().map(|&v| f64::from(v)).collect();
    Tensor::from_parts(vec![1, cube.bands, cube.height, cube.width], data)
}

/// Inverse of [`cube_to_tensor`]; expects a `[1, b, h, w]` tensor.
pub fn tensor_to_cube(t: &Tensor, wavelength_nm: Option<(f64, f64)>) -> Result<HsiCube> {
    let s = t.shape();
    if s.len() != 4 || s[0] != 1 {
        return Err(CubeError::HeaderParse(format!(
            "expected [1,b,h,w] tensor, got {s:?}"
        )));
    }
    let data: Vec<f32> = t.data().iter().map(|&v| v as f32).collect();
    HsiCube::new(s[1], s[2], s[3], data, wavelength_nm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use tempfile::tempdir;

    fn random_cube(bands: usize, h: usize, w: usize, seed: u64) -> HsiCube {
        let mut rng = CounterRng::new(seed);
        let data = (0..bands * h * w)
            .map(|_| rng.uniform01() as f32)
            .collect();
        HsiCube::new(bands, h, w, data, Some((400.0, 700.0))).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cube.hdc");
        let cube = random_cube(4, 8, 8, 11);
        save_cube(&cube, &path).unwrap();
        let back = load_cube(&path).unwrap();
        assert_eq!(back.bands, 4);
        assert_eq!(back.wavelength_nm, Some((400.0, 700.0)));
        let a: Vec<u32> = cube.data.iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = back.data.iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn short_payload_is_a_dimension_mismatch() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cube.hdc");
        save_cube(&random_cube(4, 8, 8, 3), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        // Drop exactly one scalar: 255 remain against a 4*8*8 header.
        fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        match load_cube(&path) {
            Err(CubeError::DimensionMismatch { expected, actual }) => {
                assert_eq!(expected, 256);
                assert_eq!(actual, 255);
            }
            other => panic!("expected DimensionMismatch, got {other:?}"),
        }
    }

    #[test]
    fn cut_scalar_is_a_truncated_payload() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cube.hdc");
        save_cube(&random_cube(2, 4, 4, 3), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 2]).unwrap();
        assert!(matches!(
            load_cube(&path),
            Err(CubeError::TruncatedPayload { .. })
        ));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cube.hdc");
        fs::write(&path, b"NOTACUBExxxxxxxxxxxx").unwrap();
        assert!(matches!(load_cube(&path), Err(CubeError::BadMagic { .. })));
    }

    #[test]
    fn out_of_range_counts_but_loads() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cube.hdc");
        let mut cube = HsiCube::constant(1, 2, 2, 0.5);
        cube.data[0] = -0.25;
        cube.data[3] = 1.75;
        save_cube(&cube, &path).unwrap();
        let back = load_cube(&path).unwrap();
        assert_eq!(back.out_of_range(), 2);
        assert_eq!(back.min_max(), (-0.25, 1.75));
    }

    #[test]
    fn pgm_export_has_correct_header_and_size() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("band0.pgm");
        let cube = random_cube(2, 5, 7, 9);
        write_band_pgm(&cube, 1, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n7 5\n65535\n"));
        assert_eq!(bytes.len(), b"P5\n7 5\n65535\n".len() + 2 * 35);
        assert!(matches!(
            write_band_pgm(&cube, 2, &path),
            Err(CubeError::BandRange { .. })
        ));
    }

    #[test]
    fn tensor_round_trip_preserves_values() {
        let cube = random_cube(3, 4, 5, 21);
        let t = cube_to_tensor(&cube);
        assert_eq!(t.shape(), &[1, 3, 4, 5]);
        let back = tensor_to_cube(&t, cube.wavelength_nm).unwrap();
        assert_eq!(back.data, cube.data);
    }
}
