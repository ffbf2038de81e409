//! Image containers and binary PGM (P5) input/output.
//!
//! All raster types are row-major. Intensities live in `[0,1]`;
//! 8-bit and 16-bit PGM samples are divided by their maxval on load.
//!
//! On-disk conventions (documented in the README):
//! * grayscale images — 8-bit PGM, value = round(intensity × 255);
//! * disparity / ground-truth maps — 16-bit PGM, value = round(disparity × 256),
//!   with 65535 reserved as the invalid-pixel sentinel;
//! * confidence maps — 16-bit PGM, value = round(confidence × 65535).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Fixed-point scale used when storing disparities in 16-bit PGM files.
pub const DISPARITY_PGM_SCALE: f32 = 256.0;
/// 16-bit sample value marking an invalid disparity pixel.
pub const INVALID_DISPARITY_SAMPLE: u16 = u16::MAX;

/// A grayscale image with intensities in `[0,1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl GrayImage {
    /// Builds an image from row-major values, validating the `[0,1]` range.
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::Mismatch(format!(
                "image data length {} does not match {width}x{height}",
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::OutOfRange(format!(
                "intensity {v} at pixel index {i} is outside [0,1]"
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// Constant-intensity image.
    pub fn constant(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    /// Reads an 8-bit or 16-bit binary PGM and scales samples to `[0,1]`.
    pub fn read_pgm(path: impl AsRef<Path>) -> Result<Self> {
        let raw = RawPgm::read(path.as_ref())?;
        let scale = 1.0 / raw.maxval as f32;
        let values = raw.samples.iter().map(|&s| s as f32 * scale).collect();
        Self::new(raw.width, raw.height, values)
    }

    /// Writes an 8-bit binary PGM (values scaled by 255 and rounded).
    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let samples: Vec<u16> = self
            .values
            .iter()
            .map(|v| (v * 255.0).round() as u16)
            .collect();
        RawPgm {
            width: self.width,
            height: self.height,
            maxval: 255,
            samples,
        }
        .write(path.as_ref())
    }
}

/// Per-pixel disparities with a validity mask, row-major.
///
/// Also used for ground-truth reference disparities, where validity is
/// typically sparse and invalid pixels are excluded from sampling and
/// evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
    valid: Vec<bool>,
}

/// Reference disparities; same representation as [`DisparityMap`].
pub type GroundTruthMap = DisparityMap;

impl DisparityMap {
    /// Builds a map from row-major values and a validity mask.
    /// Valid entries must be finite and non-negative.
    pub fn new(width: usize, height: usize, values: Vec<f32>, valid: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "map dimensions must be positive, got {width}x{height}"
            )));
        }
        if values.len() != width * height || valid.len() != width * height {
            return Err(Error::Mismatch(format!(
                "map data length {}/{} does not match {width}x{height}",
                values.len(),
                valid.len()
            )));
        }
        for i in 0..values.len() {
            if valid[i] && (!values[i].is_finite() || values[i] < 0.0) {
                return Err(Error::OutOfRange(format!(
                    "valid disparity {} at pixel index {i} is not a finite non-negative value",
                    values[i]
                )));
            }
        }
        Ok(Self {
            width,
            height,
            values,
            valid,
        })
    }

    /// All-invalid map of the given size.
    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(
            width,
            height,
            vec![0.0; width * height],
            vec![false; width * height],
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: f32, valid: bool) {
        let i = y * self.width + x;
        self.values[i] = value;
        self.valid[i] = valid;
    }

    /// Number of valid pixels.
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Reads a 16-bit PGM disparity map (scale 256, 65535 = invalid).
    pub fn read_pgm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = RawPgm::read(path)?;
        if raw.maxval != u16::MAX as u32 {
            return Err(Error::format(
                path,
                0,
                format!(
                    "disparity PGM must have maxval 65535 (scale 256), found {}",
                    raw.maxval
                ),
            ));
        }
        let mut values = vec![0.0f32; raw.samples.len()];
        let mut valid = vec![false; raw.samples.len()];
        for (i, &s) in raw.samples.iter().enumerate() {
            if s != INVALID_DISPARITY_SAMPLE {
                values[i] = s as f32 / DISPARITY_PGM_SCALE;
                valid[i] = true;
            }
        }
        Self::new(raw.width, raw.height, values, valid)
    }

    /// Writes a 16-bit PGM disparity map (scale 256, 65535 = invalid).
    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut samples = vec![INVALID_DISPARITY_SAMPLE; self.values.len()];
        for (i, (&value, &ok)) in self.values.iter().zip(&self.valid).enumerate() {
            if ok {
                let scaled = (value * DISPARITY_PGM_SCALE).round();
                if scaled >= INVALID_DISPARITY_SAMPLE as f32 {
                    return Err(Error::OutOfRange(format!(
                        "disparity {value} at pixel index {i} exceeds the 16-bit PGM range \
                         (max representable is {})",
                        (INVALID_DISPARITY_SAMPLE - 1) as f32 / DISPARITY_PGM_SCALE
                    )));
                }
                samples[i] = scaled as u16;
            }
        }
        RawPgm {
            width: self.width,
            height: self.height,
            maxval: u16::MAX as u32,
            samples,
        }
        .write(path.as_ref())
    }
}

/// Per-pixel confidence in `[0,1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl ConfidenceMap {
    /// Builds a map from row-major values, validating the `[0,1]` range.
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "map dimensions must be positive, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::Mismatch(format!(
                "map data length {} does not match {width}x{height}",
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::OutOfRange(format!(
                "confidence {v} at pixel index {i} is outside [0,1]"
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    /// Reads a 16-bit PGM confidence map (samples divided by maxval).
    pub fn read_pgm(path: impl AsRef<Path>) -> Result<Self> {
        let raw = RawPgm::read(path.as_ref())?;
        let scale = 1.0 / raw.maxval as f32;
        let values = raw.samples.iter().map(|&s| s as f32 * scale).collect();
        Self::new(raw.width, raw.height, values)
    }

    /// Writes a 16-bit PGM confidence map (values scaled by 65535 and rounded).
    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let samples: Vec<u16> = self
            .values
            .iter()
            .map(|v| (v * u16::MAX as f32).round() as u16)
            .collect();
        RawPgm {
            width: self.width,
            height: self.height,
            maxval: u16::MAX as u32,
            samples,
        }
        .write(path.as_ref())
    }
}

/// Raw binary PGM payload: header fields plus one `u16` per sample
/// (8-bit files are widened on read).
struct RawPgm {
    width: usize,
    height: usize,
    maxval: u32,
    samples: Vec<u16>,
}

impl RawPgm {
    fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let mut cursor = 0usize;

        let magic = header_token(&bytes, &mut cursor, path)?;
        if magic != b"P5" {
            return Err(Error::format(
                path,
                0,
                "not a binary PGM file (expected magic P5)",
            ));
        }
        let width = header_number(&bytes, &mut cursor, path, "width")?;
        let height = header_number(&bytes, &mut cursor, path, "height")?;
        let maxval = header_number(&bytes, &mut cursor, path, "maxval")?;
        if width == 0 || height == 0 {
            return Err(Error::format(
                path,
                cursor as u64,
                format!("PGM dimensions must be positive, got {width}x{height}"),
            ));
        }
        if maxval == 0 || maxval > u16::MAX as u64 {
            return Err(Error::format(
                path,
                cursor as u64,
                format!("PGM maxval {maxval} is outside 1..=65535"),
            ));
        }
        // Exactly one whitespace byte separates the header from the payload.
        if cursor >= bytes.len() || !bytes[cursor].is_ascii_whitespace() {
            return Err(Error::format(
                path,
                cursor as u64,
                "missing whitespace between PGM header and payload",
            ));
        }
        cursor += 1;

        let pixels = (width as u64)
            .checked_mul(height as u64)
            .ok_or_else(|| Error::format(path, cursor as u64, "PGM dimension overflow"))?;
        let bytes_per = if maxval > 255 { 2u64 } else { 1u64 };
        let expected = pixels * bytes_per;
        let actual = (bytes.len() - cursor) as u64;
        if actual != expected {
            return Err(Error::format(
                path,
                cursor as u64,
                format!("PGM payload has {actual} bytes, expected {expected}"),
            ));
        }

        let mut samples = Vec::with_capacity(pixels as usize);
        let payload = &bytes[cursor..];
        if bytes_per == 1 {
            samples.extend(payload.iter().map(|&b| b as u16));
        } else {
            // 16-bit PGM samples are big-endian.
            samples.extend(
                payload
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]])),
            );
        }
        for (i, &s) in samples.iter().enumerate() {
            if s as u32 > maxval as u32 {
                return Err(Error::format(
                    path,
                    (cursor as u64) + i as u64 * bytes_per,
                    format!("sample {s} exceeds declared maxval {maxval}"),
                ));
            }
        }
        Ok(Self {
            width: width as usize,
            height: height as usize,
            maxval: maxval as u32,
            samples,
        })
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(self.samples.len() * 2 + 32);
        out.extend_from_slice(format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval).as_bytes());
        if self.maxval > 255 {
            for &s in &self.samples {
                out.extend_from_slice(&s.to_be_bytes());
            }
        } else {
            out.extend(self.samples.iter().map(|&s| s as u8));
        }
        fs::write(path, out)?;
        Ok(())
    }
}

/// Reads one whitespace-delimited header token, skipping `#` comments.
fn header_token<'a>(bytes: &'a [u8], cursor: &mut usize, path: &Path) -> Result<&'a [u8]> {
    loop {
        while *cursor < bytes.len() && bytes[*cursor].is_ascii_whitespace() {
            *cursor += 1;
        }
        if *cursor < bytes.len() && bytes[*cursor] == b'#' {
            while *cursor < bytes.len() && bytes[*cursor] != b'\n' {
                *cursor += 1;
            }
            continue;
        }
        break;
    }
    let start = *cursor;
    while *cursor < bytes.len() && !bytes[*cursor].is_ascii_whitespace() {
        *cursor += 1;
    }
    if start == *cursor {
        return Err(Error::format(
            path,
            start as u64,
            "unexpected end of PGM header",
        ));
    }
    Ok(&bytes[start..*cursor])
}

fn header_number(bytes: &[u8], cursor: &mut usize, path: &Path, what: &str) -> Result<u64> {
    let offset = *cursor as u64;
    let token = header_token(bytes, cursor, path)?;
    std::str::from_utf8(token)
        .ok()
        .and_then(|s| s.parse::<u64>().ok())
        .ok_or_else(|| Error::format(path, offset, format!("invalid PGM {what} field")))
}
