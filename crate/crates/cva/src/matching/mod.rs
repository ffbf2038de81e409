//! Stereo matching: census transform, block matching, semi-global
//! aggregation, and winner-take-all disparity selection.

pub mod bm;
pub mod census;
pub mod sgm;

pub use bm::build_cost_volume_bm;
pub use census::{census_transform, hamming_cost, CensusImage, Descriptor};
pub use sgm::{sgm_aggregate, sgm_aggregate_along, Direction, PATHS_4, PATHS_8};

use rayon::prelude::*;

use crate::image::DisparityMap;
use crate::volume::CostVolume;

/// Winner-take-all disparity selection: per pixel, the disparity with the
/// minimal cost; ties break toward the smallest disparity. Every pixel of
/// the result is marked valid.
pub fn wta_disparity(vol: &CostVolume) -> DisparityMap {
    let (w, h, depth) = (vol.width(), vol.height(), vol.depth());
    let mut values = vec![0.0f32; w * h];
    values
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                let curve = vol.curve(x, y);
                let mut best = 0usize;
                for d in 1..depth {
                    if curve[d] < curve[best] {
                        best = d;
                    }
                }
                *out = best as f32;
            }
        });
    DisparityMap::new(w, h, values, vec![true; w * h])
        .expect("valid WTA disparities by construction")
}
