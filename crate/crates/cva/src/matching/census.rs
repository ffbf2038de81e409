//! Census transform and Hamming matching cost.
//!
//! Each pixel is described by one bit per window neighbor (center excluded,
//! row-major order): the bit is set iff that neighbor is strictly darker
//! than the center. Descriptors of two pixels are compared by Hamming
//! distance, which is the raw matching cost.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Largest supported census window side; descriptors are packed into a
/// single 64-bit word, which holds up to 7·7−1 = 48 neighbor bits.
pub const MAX_CENSUS_WINDOW: usize = 7;

/// A per-pixel census descriptor: `len` comparison bits packed into `bits`
/// (bit k, counted from the least significant end, is the k-th neighbor in
/// row-major window order).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Descriptor {
    bits: u64,
    len: u8,
}

impl Descriptor {
    pub fn new(bits: u64, len: u8) -> Result<Self> {
        if len == 0 || len > 63 {
            return Err(Error::InvalidArgument(format!(
                "descriptor length {len} is outside 1..=63"
            )));
        }
        if len < 64 && bits >> len != 0 {
            return Err(Error::InvalidArgument(
                "descriptor has bits set beyond its length".into(),
            ));
        }
        Ok(Self { bits, len })
    }

    /// Parses a string of `0`/`1` characters, first neighbor leftmost.
    pub fn from_bit_string(s: &str) -> Result<Self> {
        let mut bits = 0u64;
        let mut len = 0u8;
        for c in s.chars() {
            let bit = match c {
                '0' => 0u64,
                '1' => 1u64,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "invalid descriptor character {other:?}"
                    )))
                }
            };
            if len >= 63 {
                return Err(Error::InvalidArgument("descriptor string too long".into()));
            }
            bits |= bit << len;
            len += 1;
        }
        Descriptor::new(bits, len)
    }

    /// Renders the descriptor with the first neighbor leftmost.
    pub fn to_bit_string(&self) -> String {
        (0..self.len)
            .map(|k| if self.bits >> k & 1 == 1 { '1' } else { '0' })
            .collect()
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    /// Number of comparison bits (window² − 1 for a full window).
    pub fn len(&self) -> u8 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Bitwise complement within the descriptor length.
    pub fn complement(&self) -> Self {
        Self {
            bits: !self.bits & (u64::MAX >> (64 - self.len as u32)),
            len: self.len,
        }
    }
}

/// Number of differing bits between two descriptors of equal length.
pub fn hamming_cost(a: Descriptor, b: Descriptor) -> Result<u32> {
    if a.len != b.len {
        return Err(Error::InvalidArgument(format!(
            "descriptor lengths differ: {} vs {}",
            a.len, b.len
        )));
    }
    Ok((a.bits ^ b.bits).count_ones())
}

/// Census descriptors for every pixel of an image.
///
/// Border pixels whose window does not fit carry the all-zero descriptor
/// and are flagged invalid; matching costs that involve them are forced to
/// the theoretical maximum.
#[derive(Debug, Clone)]
pub struct CensusImage {
    width: usize,
    height: usize,
    window: usize,
    bits: Vec<u64>,
}

impl CensusImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Descriptor bit length, window² − 1.
    pub fn descriptor_len(&self) -> u8 {
        (self.window * self.window - 1) as u8
    }

    /// Margin inside which descriptors are valid.
    fn margin(&self) -> usize {
        self.window / 2
    }

    /// True when the full census window fits around `(x, y)`.
    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        let m = self.margin();
        x >= m && y >= m && x + m < self.width && y + m < self.height
    }

    #[inline]
    pub fn descriptor(&self, x: usize, y: usize) -> Descriptor {
        Descriptor {
            bits: self.bits[y * self.width + x],
            len: self.descriptor_len(),
        }
    }

    #[inline]
    pub(crate) fn raw_bits(&self, x: usize, y: usize) -> u64 {
        self.bits[y * self.width + x]
    }
}

/// Computes the census transform of `img` with an odd `window` side.
///
/// Bit k of a descriptor is set iff the k-th neighbor in row-major window
/// order (center excluded) is strictly darker than the center pixel.
pub fn census_transform(img: &GrayImage, window: usize) -> Result<CensusImage> {
    if window.is_multiple_of(2) || window < 3 {
        return Err(Error::InvalidArgument(format!(
            "census window must be odd and at least 3, got {window}"
        )));
    }
    if window > img.width().min(img.height()) {
        return Err(Error::InvalidArgument(format!(
            "census window {window} exceeds the {}x{} image",
            img.width(),
            img.height()
        )));
    }
    if window > MAX_CENSUS_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "census window {window} exceeds the supported maximum {MAX_CENSUS_WINDOW} \
             (descriptors are packed into 64 bits)"
        )));
    }

    let (w, h) = (img.width(), img.height());
    let half = window / 2;
    let mut bits = vec![0u64; w * h];
    bits.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        if y < half || y + half >= h {
            return; // border row: descriptors stay all-zero (invalid)
        }
        for (x, out) in row.iter_mut().enumerate().take(w - half).skip(half) {
            let center = img.get(x, y);
            let mut b = 0u64;
            let mut k = 0u32;
            for ny in y - half..=y + half {
                for nx in x - half..=x + half {
                    if nx == x && ny == y {
                        continue;
                    }
                    if img.get(nx, ny) < center {
                        b |= 1u64 << k;
                    }
                    k += 1;
                }
            }
            *out = b;
        }
    });
    Ok(CensusImage {
        width: w,
        height: h,
        window,
        bits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_gives_all_zero_descriptors() {
        let img = GrayImage::constant(8, 8, 0.4).unwrap();
        let census = census_transform(&img, 5).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(census.descriptor(x, y).bits(), 0);
            }
        }
    }

    #[test]
    fn three_by_three_center_descriptor() {
        let img = GrayImage::new(
            3,
            3,
            vec![0.9, 0.1, 0.5, 0.2, 0.5, 0.8, 0.5, 0.5, 0.4],
        )
        .unwrap();
        let census = census_transform(&img, 3).unwrap();
        // Neighbors in row-major order: 0.9, 0.1, 0.5, 0.2, 0.8, 0.5, 0.5, 0.4
        // against center 0.5 with a strict comparison.
        assert_eq!(census.descriptor(1, 1).to_bit_string(), "01010001");
    }

    #[test]
    fn darkest_pixel_has_all_zero_descriptor() {
        let mut values = vec![0.8; 25];
        values[12] = 0.1; // center of the 5×5 image
        let img = GrayImage::new(5, 5, values).unwrap();
        let census = census_transform(&img, 5).unwrap();
        assert_eq!(census.descriptor(2, 2).bits(), 0);
    }

    #[test]
    fn border_pixels_are_invalid() {
        let img = GrayImage::constant(6, 6, 0.5).unwrap();
        let census = census_transform(&img, 5).unwrap();
        assert!(!census.is_valid(0, 0));
        assert!(!census.is_valid(1, 3));
        assert!(!census.is_valid(3, 4));
        assert!(census.is_valid(2, 2));
        assert!(census.is_valid(3, 3));
    }

    #[test]
    fn window_validation() {
        let img = GrayImage::constant(8, 8, 0.5).unwrap();
        assert!(matches!(
            census_transform(&img, 4),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            census_transform(&img, 9),
            Err(Error::InvalidArgument(_))
        ));
        let small = GrayImage::constant(4, 4, 0.5).unwrap();
        assert!(matches!(
            census_transform(&small, 5),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn hamming_examples() {
        let a = Descriptor::from_bit_string("01100001").unwrap();
        let b = Descriptor::from_bit_string("01010001").unwrap();
        assert_eq!(hamming_cost(a, a).unwrap(), 0);
        assert_eq!(hamming_cost(a, b).unwrap(), 2);

        let c = Descriptor::new(0b1010_1010_1010_1010_1010_1010, 24).unwrap();
        assert_eq!(hamming_cost(c, c.complement()).unwrap(), 24);
    }

    #[test]
    fn hamming_rejects_length_mismatch() {
        let a = Descriptor::new(0, 8).unwrap();
        let b = Descriptor::new(0, 24).unwrap();
        assert!(matches!(
            hamming_cost(a, b),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn census_is_invariant_under_monotone_remapping() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let values: Vec<f32> = (0..81).map(|_| rng.gen_range(0.0..=1.0)).collect();
            let img = GrayImage::new(9, 9, values.clone()).unwrap();
            // Strictly increasing maps of [0,1] into [0,1].
            let remaps: [fn(f32) -> f32; 3] = [
                |v| v * v,
                |v| 0.5 * (v + v * v),
                |v| 0.1 + 0.8 * v,
            ];
            for f in remaps {
                let mapped = GrayImage::new(9, 9, values.iter().map(|&v| f(v)).collect()).unwrap();
                let a = census_transform(&img, 5).unwrap();
                let b = census_transform(&mapped, 5).unwrap();
                assert_eq!(a.bits, b.bits);
            }
        }
    }
}
