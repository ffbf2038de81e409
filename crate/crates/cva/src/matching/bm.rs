//! Census block matching: raw cost volume from Hamming distances.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::matching::census::census_transform;
use crate::volume::CostVolume;

/// Builds the raw Census block-matching cost volume.
///
/// `cost(x, y, d)` is the Hamming distance between the census descriptors
/// of `left(x, y)` and `right(x − d, y)`. Cells whose right coordinate is
/// out of range, or that involve an invalid border descriptor, receive the
/// theoretical maximum cost `window² − 1`, which keeps every cost inside
/// the matcher's normalization bounds while penalizing unmatched regions.
pub fn build_cost_volume_bm(
    left: &GrayImage,
    right: &GrayImage,
    d_max: usize,
    window: usize,
) -> Result<CostVolume> {
    if left.width() != right.width() || left.height() != right.height() {
        return Err(Error::Mismatch(format!(
            "stereo pair dimensions differ: {}x{} vs {}x{}",
            left.width(),
            left.height(),
            right.width(),
            right.height()
        )));
    }
    if d_max < 1 {
        return Err(Error::InvalidArgument(
            "maximum disparity must be at least 1".into(),
        ));
    }

    let census_left = census_transform(left, window)?;
    let census_right = census_transform(right, window)?;
    let (w, h) = (left.width(), left.height());
    let depth = d_max + 1;
    let max_cost = (window * window - 1) as f32;

    let mut data = vec![0.0f32; w * h * depth];
    data.par_chunks_mut(w * depth)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..w {
                let curve = &mut row[x * depth..(x + 1) * depth];
                if !census_left.is_valid(x, y) {
                    curve.fill(max_cost);
                    continue;
                }
                let lbits = census_left.raw_bits(x, y);
                for (d, out) in curve.iter_mut().enumerate() {
                    *out = if d > x || !census_right.is_valid(x - d, y) {
                        max_cost
                    } else {
                        (lbits ^ census_right.raw_bits(x - d, y)).count_ones() as f32
                    };
                }
            }
        });

    CostVolume::new(w, h, depth, data, false)
}
