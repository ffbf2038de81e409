//! Dense H×W×D cost volumes: normalization, patch extraction and the
//! `CVAV` binary file format.
//!
//! Memory layout is `(y, x, d)` with the disparity axis fastest, so each
//! pixel's cost curve is a contiguous slice.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Magic bytes of the cost-volume file format.
pub const VOLUME_MAGIC: [u8; 4] = *b"CVAV";
/// Current cost-volume format version.
pub const VOLUME_VERSION: u16 = 1;
const FLAG_NORMALIZED: u16 = 1;
/// Header: magic (4) + version (2) + flags (2) + width/height/depth (3×4).
const VOLUME_HEADER_LEN: u64 = 20;

/// Theoretical `[c_min, c_max]` bounds of a matcher's result space,
/// used to map costs affinely into `[0,1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationBounds {
    c_min: f32,
    c_max: f32,
}

impl NormalizationBounds {
    pub fn new(c_min: f32, c_max: f32) -> Result<Self> {
        if !c_min.is_finite() || !c_max.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "normalization bounds must be finite, got [{c_min}, {c_max}]"
            )));
        }
        if c_max <= c_min {
            return Err(Error::InvalidArgument(format!(
                "normalization bounds must satisfy c_max > c_min, got [{c_min}, {c_max}]"
            )));
        }
        Ok(Self { c_min, c_max })
    }

    pub fn c_min(&self) -> f32 {
        self.c_min
    }

    pub fn c_max(&self) -> f32 {
        self.c_max
    }
}

/// Stereo matcher whose result space defines the normalization bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatcherKind {
    /// Census block matching: Hamming costs in `[0, window²−1]`.
    CensusBm,
    /// Census costs aggregated by semi-global matching:
    /// per-path costs bounded by `window²−1 + p2`, summed over paths.
    CensusSgm,
}

impl std::str::FromStr for MatcherKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "census-bm" => Ok(MatcherKind::CensusBm),
            "census-sgm" => Ok(MatcherKind::CensusSgm),
            other => Err(Error::InvalidArgument(format!(
                "unknown matcher {other:?}; expected census-bm or census-sgm"
            ))),
        }
    }
}

/// Theoretical normalization bounds for a matcher configuration.
///
/// * census-bm: `(0, window²−1)` — the Hamming-cost range.
/// * census-sgm: `(0, paths·(window²−1 + p2))` — each path contributes at
///   most the maximum raw cost plus the large penalty.
pub fn default_bounds(
    matcher: MatcherKind,
    window: usize,
    p2: f32,
    paths: usize,
) -> Result<NormalizationBounds> {
    let c_max_raw = (window * window - 1) as f32;
    match matcher {
        MatcherKind::CensusBm => NormalizationBounds::new(0.0, c_max_raw),
        MatcherKind::CensusSgm => NormalizationBounds::new(0.0, paths as f32 * (c_max_raw + p2)),
    }
}

/// A dense cost volume over image pixels × disparity levels.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    width: usize,
    height: usize,
    depth: usize,
    normalized: bool,
    data: Vec<f32>,
}

impl CostVolume {
    /// Builds a volume from `(y, x, d)` d-fastest data, validating that all
    /// costs are finite and non-negative (and within `[0,1]` if `normalized`).
    pub fn new(
        width: usize,
        height: usize,
        depth: usize,
        data: Vec<f32>,
        normalized: bool,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "volume dimensions must be positive, got {width}x{height}"
            )));
        }
        if depth < 2 {
            return Err(Error::InvalidArgument(format!(
                "volume depth must be at least 2, got {depth}"
            )));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|p| p.checked_mul(depth))
            .ok_or_else(|| Error::InvalidArgument("volume dimension overflow".into()))?;
        if data.len() != expected {
            return Err(Error::Mismatch(format!(
                "volume data length {} does not match {width}x{height}x{depth}",
                data.len()
            )));
        }
        let vol = Self {
            width,
            height,
            depth,
            normalized,
            data,
        };
        if let Some((x, y, d)) = vol.find_invalid_cost() {
            return Err(Error::OutOfRange(format!(
                "cost {} at (x={x}, y={y}, d={d}) is invalid for a {}volume",
                vol.get(x, y, d),
                if normalized { "normalized " } else { "" }
            )));
        }
        Ok(vol)
    }

    /// All-zero raw volume.
    pub fn zeros(width: usize, height: usize, depth: usize) -> Result<Self> {
        Self::new(width, height, depth, vec![0.0; width * height * depth], false)
    }

    fn find_invalid_cost(&self) -> Option<(usize, usize, usize)> {
        let bad = |v: f32| {
            !v.is_finite() || v < 0.0 || (self.normalized && v > 1.0)
        };
        let i = self.data.iter().position(|&v| bad(v))?;
        Some(self.coords(i))
    }

    #[inline]
    fn coords(&self, i: usize) -> (usize, usize, usize) {
        let d = i % self.depth;
        let px = i / self.depth;
        (px % self.width, px / self.width, d)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of disparity levels D.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Maximum representable disparity, `D − 1`.
    pub fn d_max(&self) -> usize {
        self.depth - 1
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, d: usize) -> usize {
        (y * self.width + x) * self.depth + d
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, d: usize) -> f32 {
        self.data[self.index(x, y, d)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, d: usize, value: f32) {
        let i = self.index(x, y, d);
        self.data[i] = value;
    }

    /// The contiguous cost curve of one pixel.
    #[inline]
    pub fn curve(&self, x: usize, y: usize) -> &[f32] {
        let start = (y * self.width + x) * self.depth;
        &self.data[start..start + self.depth]
    }

    pub fn curve_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let start = (y * self.width + x) * self.depth;
        &mut self.data[start..start + self.depth]
    }

    /// Maps every cost affinely to `[0,1]` via `(c − c_min)/(c_max − c_min)`.
    ///
    /// Every cost must already lie within the bounds; a violation is a hard
    /// error naming the offending cell, because it indicates the bounds do
    /// not belong to the matcher that produced this volume.
    pub fn normalize(mut self, bounds: &NormalizationBounds) -> Result<Self> {
        if self.normalized {
            return Err(Error::InvalidState(
                "volume is already normalized".into(),
            ));
        }
        for (i, &v) in self.data.iter().enumerate() {
            if v < bounds.c_min || v > bounds.c_max {
                let (x, y, d) = self.coords(i);
                return Err(Error::OutOfRange(format!(
                    "cost {v} at (x={x}, y={y}, d={d}) is outside the normalization bounds \
                     [{}, {}]",
                    bounds.c_min, bounds.c_max
                )));
            }
        }
        let scale = 1.0 / (bounds.c_max - bounds.c_min);
        for v in &mut self.data {
            *v = (*v - bounds.c_min) * scale;
        }
        self.normalized = true;
        Ok(self)
    }

    /// Extracts the `n × n × depth` sub-block centered at `(x, y)`.
    ///
    /// Spatial coordinates falling outside the volume are filled by edge
    /// replication (nearest in-bounds cost curve). Requires a normalized
    /// volume, matching the network's input contract.
    pub fn extract_patch(&self, x: usize, y: usize, n: usize) -> Result<PatchTensor> {
        if n.is_multiple_of(2) || n == 0 {
            return Err(Error::InvalidArgument(format!(
                "patch side must be odd and positive, got {n}"
            )));
        }
        if !self.normalized {
            return Err(Error::InvalidState(
                "patch extraction requires a normalized volume".into(),
            ));
        }
        if x >= self.width || y >= self.height {
            return Err(Error::InvalidArgument(format!(
                "patch center ({x}, {y}) is outside the {}x{} volume",
                self.width, self.height
            )));
        }
        let half = (n / 2) as isize;
        let mut values = Vec::with_capacity(n * n * self.depth);
        for py in -half..=half {
            let sy = clamp_index(y as isize + py, self.height);
            for px in -half..=half {
                let sx = clamp_index(x as isize + px, self.width);
                values.extend_from_slice(self.curve(sx, sy));
            }
        }
        Ok(PatchTensor {
            n,
            depth: self.depth,
            center: (x, y),
            values,
        })
    }

    /// Writes the volume in the `CVAV` binary format.
    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path.as_ref())?);
        w.write_all(&VOLUME_MAGIC)?;
        w.write_all(&VOLUME_VERSION.to_le_bytes())?;
        let flags: u16 = if self.normalized { FLAG_NORMALIZED } else { 0 };
        w.write_all(&flags.to_le_bytes())?;
        w.write_all(&(self.width as u32).to_le_bytes())?;
        w.write_all(&(self.height as u32).to_le_bytes())?;
        w.write_all(&(self.depth as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(4096);
        for chunk in self.data.chunks(1024) {
            buf.clear();
            for v in chunk {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a volume from the `CVAV` binary format; the declared size is
    /// validated against the actual payload before any allocation.
    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut file = File::open(path)?;
        let file_len = file.metadata()?.len();

        let mut header = [0u8; VOLUME_HEADER_LEN as usize];
        if file_len < VOLUME_HEADER_LEN {
            return Err(Error::format(
                path,
                file_len,
                format!("file too short for a volume header ({file_len} bytes)"),
            ));
        }
        file.read_exact(&mut header)?;
        if header[0..4] != VOLUME_MAGIC {
            return Err(Error::format(path, 0, "bad magic, expected CVAV"));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != VOLUME_VERSION {
            return Err(Error::format(
                path,
                4,
                format!("unsupported volume format version {version}"),
            ));
        }
        let flags = u16::from_le_bytes([header[6], header[7]]);
        if flags & !FLAG_NORMALIZED != 0 {
            return Err(Error::format(path, 6, format!("unknown flag bits {flags:#06x}")));
        }
        let width = u32::from_le_bytes(header[8..12].try_into().unwrap());
        let height = u32::from_le_bytes(header[12..16].try_into().unwrap());
        let depth = u32::from_le_bytes(header[16..20].try_into().unwrap());
        if width == 0 || height == 0 || depth < 2 {
            return Err(Error::format(
                path,
                8,
                format!("invalid volume dimensions {width}x{height}x{depth}"),
            ));
        }
        let cells = (width as u64)
            .checked_mul(height as u64)
            .and_then(|p| p.checked_mul(depth as u64))
            .ok_or_else(|| Error::format(path, 8, "volume dimension overflow"))?;
        let payload = cells
            .checked_mul(4)
            .ok_or_else(|| Error::format(path, 8, "volume payload size overflow"))?;
        if cells > usize::MAX as u64 / 8 {
            return Err(Error::format(path, 8, "volume too large for this platform"));
        }
        let actual = file_len - VOLUME_HEADER_LEN;
        if actual != payload {
            return Err(Error::format(
                path,
                VOLUME_HEADER_LEN,
                format!("payload has {actual} bytes, header declares {payload}"),
            ));
        }

        let normalized = flags & FLAG_NORMALIZED != 0;
        let mut bytes = Vec::with_capacity(payload as usize);
        file.read_to_end(&mut bytes)?;
        let mut data = Vec::with_capacity(cells as usize);
        for (i, chunk) in bytes.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() || v < 0.0 || (normalized && v > 1.0) {
                return Err(Error::format(
                    path,
                    VOLUME_HEADER_LEN + i as u64 * 4,
                    format!(
                        "cost value {v} is invalid for a {}volume",
                        if normalized { "normalized " } else { "" }
                    ),
                ));
            }
            data.push(v);
        }
        Self::new(
            width as usize,
            height as usize,
            depth as usize,
            data,
            normalized,
        )
    }
}

#[inline]
fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

/// An `n × n × D` block of normalized costs centered on a source pixel,
/// stored `(row, column, d)` with `d` fastest — the network's input layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchTensor {
    n: usize,
    depth: usize,
    center: (usize, usize),
    values: Vec<f32>,
}

impl PatchTensor {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Center coordinate `(x, y)` in the source volume.
    pub fn center(&self) -> (usize, usize) {
        self.center
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, d: usize) -> f32 {
        self.values[(row * self.n + col) * self.depth + d]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_volume() -> CostVolume {
        // 4×3×5, distinct values.
        let data: Vec<f32> = (0..4 * 3 * 5).map(|i| i as f32).collect();
        CostVolume::new(4, 3, 5, data, false).unwrap()
    }

    #[test]
    fn normalize_maps_endpoints() {
        let vol = CostVolume::new(2, 1, 2, vec![0.0, 24.0, 6.0, 12.0], false).unwrap();
        let bounds = NormalizationBounds::new(0.0, 24.0).unwrap();
        let out = vol.normalize(&bounds).unwrap();
        assert_eq!(out.get(0, 0, 0), 0.0);
        assert_eq!(out.get(0, 0, 1), 1.0);
        assert_eq!(out.get(1, 0, 0), 0.25);
        assert_eq!(out.get(1, 0, 1), 0.5);
        assert!(out.is_normalized());
    }

    #[test]
    fn normalize_rejects_out_of_bounds_cost_naming_cell() {
        let vol = CostVolume::new(2, 1, 2, vec![0.0, 25.0, 6.0, 12.0], false).unwrap();
        let bounds = NormalizationBounds::new(0.0, 24.0).unwrap();
        let err = vol.normalize(&bounds).unwrap_err();
        match err {
            Error::OutOfRange(msg) => {
                // Flat index 1 in the (y, x, d) d-fastest layout is x=0, d=1.
                assert!(msg.contains("x=0"), "message should name the cell: {msg}");
                assert!(msg.contains("d=1"), "message should name the cell: {msg}");
                assert!(msg.contains("25"), "message should name the value: {msg}");
            }
            other => panic!("expected out-of-range error, got {other:?}"),
        }
    }

    #[test]
    fn normalize_twice_is_invalid_state() {
        let vol = sample_volume();
        let bounds = NormalizationBounds::new(0.0, 60.0).unwrap();
        let out = vol.normalize(&bounds).unwrap();
        let err = out.normalize(&NormalizationBounds::new(0.0, 1.0).unwrap()).unwrap_err();
        assert!(matches!(err, Error::InvalidState(_)));
    }

    #[test]
    fn normalize_with_unit_bounds_is_identity_on_unit_volume() {
        let data = vec![0.0, 0.25, 0.5, 1.0];
        let vol = CostVolume::new(2, 1, 2, data.clone(), false).unwrap();
        let out = vol.normalize(&NormalizationBounds::new(0.0, 1.0).unwrap()).unwrap();
        assert_eq!(out.data(), &data[..]);
    }

    #[test]
    fn normalization_preserves_per_pixel_argmin() {
        let vol = CostVolume::new(2, 2, 4, (0..16).map(|i| ((i * 7) % 13) as f32).collect(), false)
            .unwrap();
        let before: Vec<usize> = (0..2)
            .flat_map(|y| (0..2).map(move |x| (x, y)))
            .map(|(x, y)| argmin(vol.curve(x, y)))
            .collect();
        let out = vol.normalize(&NormalizationBounds::new(0.0, 13.0).unwrap()).unwrap();
        let after: Vec<usize> = (0..2)
            .flat_map(|y| (0..2).map(move |x| (x, y)))
            .map(|(x, y)| argmin(out.curve(x, y)))
            .collect();
        assert_eq!(before, after);
    }

    fn argmin(curve: &[f32]) -> usize {
        let mut best = 0;
        for (i, &v) in curve.iter().enumerate() {
            if v < curve[best] {
                best = i;
            }
        }
        best
    }

    #[test]
    fn default_bounds_examples() {
        let bm = default_bounds(MatcherKind::CensusBm, 5, 0.0, 0).unwrap();
        assert_eq!((bm.c_min(), bm.c_max()), (0.0, 24.0));
        let sgm = default_bounds(MatcherKind::CensusSgm, 5, 96.0, 8).unwrap();
        assert_eq!((sgm.c_min(), sgm.c_max()), (0.0, 960.0));
        let degenerate = default_bounds(MatcherKind::CensusSgm, 5, 0.0, 1).unwrap();
        assert_eq!((degenerate.c_min(), degenerate.c_max()), (0.0, 24.0));
    }

    #[test]
    fn matcher_kind_parses() {
        assert_eq!("census-bm".parse::<MatcherKind>().unwrap(), MatcherKind::CensusBm);
        assert_eq!("census-sgm".parse::<MatcherKind>().unwrap(), MatcherKind::CensusSgm);
        assert!(matches!(
            "mc-cnn".parse::<MatcherKind>(),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn patch_of_side_one_is_the_cost_curve() {
        let vol = sample_volume()
            .normalize(&NormalizationBounds::new(0.0, 60.0).unwrap())
            .unwrap();
        let patch = vol.extract_patch(2, 1, 1).unwrap();
        assert_eq!(patch.values(), vol.curve(2, 1));
    }

    #[test]
    fn patch_at_origin_replicates_edges() {
        let vol = sample_volume()
            .normalize(&NormalizationBounds::new(0.0, 60.0).unwrap())
            .unwrap();
        let patch = vol.extract_patch(0, 0, 3).unwrap();
        // Out-of-bounds rows/columns replicate the nearest in-bounds curve.
        for d in 0..5 {
            assert_eq!(patch.get(0, 0, d), vol.get(0, 0, d));
            assert_eq!(patch.get(0, 1, d), vol.get(0, 0, d));
            assert_eq!(patch.get(1, 0, d), vol.get(0, 0, d));
            assert_eq!(patch.get(2, 2, d), vol.get(1, 1, d));
        }
    }

    #[test]
    fn patch_matches_naive_copy_oracle() {
        let vol = sample_volume()
            .normalize(&NormalizationBounds::new(0.0, 60.0).unwrap())
            .unwrap();
        let n = 3usize;
        let half = (n / 2) as isize;
        for cy in 0..vol.height() {
            for cx in 0..vol.width() {
                let patch = vol.extract_patch(cx, cy, n).unwrap();
                for py in 0..n {
                    for px in 0..n {
                        let sy = clamp_index(cy as isize + py as isize - half, vol.height());
                        let sx = clamp_index(cx as isize + px as isize - half, vol.width());
                        for d in 0..vol.depth() {
                            assert_eq!(patch.get(py, px, d), vol.get(sx, sy, d));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn patch_requires_normalized_volume_and_odd_side() {
        let vol = sample_volume();
        assert!(matches!(
            vol.extract_patch(0, 0, 3),
            Err(Error::InvalidState(_))
        ));
        let vol = vol
            .normalize(&NormalizationBounds::new(0.0, 60.0).unwrap())
            .unwrap();
        assert!(matches!(
            vol.extract_patch(0, 0, 4),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn volume_file_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vol.cvav");
        let vol = sample_volume();
        vol.write_file(&path).unwrap();
        let back = CostVolume::read_file(&path).unwrap();
        assert_eq!(vol, back);

        let norm = vol.normalize(&NormalizationBounds::new(0.0, 60.0).unwrap()).unwrap();
        norm.write_file(&path).unwrap();
        let back = CostVolume::read_file(&path).unwrap();
        assert_eq!(norm, back);
        assert!(back.is_normalized());
    }

    #[test]
    fn volume_file_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cvav");
        std::fs::write(&path, b"XXXX\x01\x00\x00\x00\x01\x00\x00\x00\x01\x00\x00\x00\x02\x00\x00\x00")
            .unwrap();
        let err = CostVolume::read_file(&path).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }));
    }

    #[test]
    fn volume_file_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.cvav");
        let vol = sample_volume();
        vol.write_file(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        std::fs::write(&path, bytes).unwrap();
        let err = CostVolume::read_file(&path).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
    }

    #[test]
    fn volume_file_dimension_overflow() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("huge.cvav");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&VOLUME_MAGIC);
        bytes.extend_from_slice(&VOLUME_VERSION.to_le_bytes());
        bytes.extend_from_slice(&0u16.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        let err = CostVolume::read_file(&path).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
    }
}
