//! Semi-global matching: scanline aggregation of raw matching costs along
//! multiple path directions with small (`p1`) and large (`p2`) penalties.

use crate::error::{Error, Result};
use crate::volume::CostVolume;

/// A path direction `(dx, dy)`; the path reaches pixel `p` from `p − r`.
pub type Direction = (i32, i32);

/// The eight standard path directions, in the fixed order used when the
/// per-path results are summed: axis-aligned first, then diagonals.
pub const PATHS_8: [Direction; 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (-1, 1),
    (1, -1),
    (-1, -1),
];

/// The four axis-aligned path directions (prefix of [`PATHS_8`]).
pub const PATHS_4: [Direction; 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// Aggregates a raw cost volume along 4 or 8 path directions.
///
/// Per path, the recursion is
/// `L(p,d) = C(p,d) + min(L(q,d), L(q,d±1)+p1, min_k L(q,k)+p2) − min_k L(q,k)`
/// with `q = p − r`; path starts (`q` outside the image) use `L(p,d) = C(p,d)`.
/// The output is the sum of the per-path volumes, accumulated in the fixed
/// order of [`PATHS_8`], so results are bit-identical run to run.
pub fn sgm_aggregate(raw: &CostVolume, p1: f32, p2: f32, paths: usize) -> Result<CostVolume> {
    let dirs: &[Direction] = match paths {
        4 => &PATHS_4,
        8 => &PATHS_8,
        other => {
            return Err(Error::InvalidArgument(format!(
                "path count must be 4 or 8, got {other}"
            )))
        }
    };
    sgm_aggregate_along(raw, p1, p2, dirs)
}

/// Aggregates along an explicit list of path directions (summed in list
/// order). Exposed for tests and experiments with restricted path sets.
pub fn sgm_aggregate_along(
    raw: &CostVolume,
    p1: f32,
    p2: f32,
    dirs: &[Direction],
) -> Result<CostVolume> {
    if raw.is_normalized() {
        return Err(Error::InvalidState(
            "semi-global aggregation requires a raw (unnormalized) volume".into(),
        ));
    }
    if !(p1.is_finite() && p2.is_finite()) || p1 <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "penalties must be finite and positive, got p1={p1}, p2={p2}"
        )));
    }
    if p1 > p2 {
        return Err(Error::InvalidArgument(format!(
            "penalties must satisfy p1 <= p2, got p1={p1}, p2={p2}"
        )));
    }
    if dirs.is_empty() {
        return Err(Error::InvalidArgument("empty path direction list".into()));
    }
    if dirs.iter().any(|&(dx, dy)| dx == 0 && dy == 0) {
        return Err(Error::InvalidArgument(
            "path direction (0, 0) is not a valid scan direction".into(),
        ));
    }

    let (w, h, depth) = (raw.width(), raw.height(), raw.depth());
    let mut out = vec![0.0f32; w * h * depth];
    let mut path = PathBuffers::new(w, depth);
    for &dir in dirs {
        aggregate_one_path(raw, p1, p2, dir, &mut path, &mut out);
    }
    CostVolume::new(w, h, depth, out, false)
}

/// Reusable row buffers for one path direction.
struct PathBuffers {
    /// `L` values of the previously processed row (w × depth).
    prev_row: Vec<f32>,
    /// `L` values of the row being processed (w × depth).
    cur_row: Vec<f32>,
    /// Per-pixel `min_k L(·,k)` of the previous row.
    prev_min: Vec<f32>,
    /// Per-pixel `min_k L(·,k)` of the current row.
    cur_min: Vec<f32>,
    /// Scratch curve for the pixel being computed.
    tmp: Vec<f32>,
}

impl PathBuffers {
    fn new(w: usize, depth: usize) -> Self {
        Self {
            prev_row: vec![0.0; w * depth],
            cur_row: vec![0.0; w * depth],
            prev_min: vec![0.0; w],
            cur_min: vec![0.0; w],
            tmp: vec![0.0; depth],
        }
    }
}

fn aggregate_one_path(
    raw: &CostVolume,
    p1: f32,
    p2: f32,
    (dx, dy): Direction,
    buf: &mut PathBuffers,
    out: &mut [f32],
) {
    let (w, h, depth) = (raw.width(), raw.height(), raw.depth());
    let rows: Vec<usize> = if dy >= 0 {
        (0..h).collect()
    } else {
        (0..h).rev().collect()
    };
    let cols: Vec<usize> = if dx >= 0 {
        (0..w).collect()
    } else {
        (0..w).rev().collect()
    };

    for &y in &rows {
        for &x in &cols {
            // Predecessor pixel along this path. Horizontal steps read the
            // column just processed in this row; sloped steps read the
            // previously processed row.
            let qx = x as i64 - dx as i64;
            let qy = y as i64 - dy as i64;
            let in_image = qx >= 0 && qy >= 0 && qx < w as i64 && qy < h as i64;
            let pred: Option<(&[f32], f32)> = if !in_image {
                None
            } else if dy == 0 {
                let qx = qx as usize;
                Some((&buf.cur_row[qx * depth..(qx + 1) * depth], buf.cur_min[qx]))
            } else {
                let qx = qx as usize;
                Some((&buf.prev_row[qx * depth..(qx + 1) * depth], buf.prev_min[qx]))
            };

            let curve = raw.curve(x, y);
            let mut min_l = f32::INFINITY;
            match pred {
                None => {
                    for (slot, &l) in buf.tmp.iter_mut().zip(curve) {
                        *slot = l;
                        min_l = min_l.min(l);
                    }
                }
                Some((lq, lq_min)) => {
                    let jump = lq_min + p2;
                    for d in 0..depth {
                        let mut m = lq[d];
                        if d > 0 {
                            m = m.min(lq[d - 1] + p1);
                        }
                        if d + 1 < depth {
                            m = m.min(lq[d + 1] + p1);
                        }
                        m = m.min(jump);
                        let l = curve[d] + m - lq_min;
                        buf.tmp[d] = l;
                        min_l = min_l.min(l);
                    }
                }
            }
            let base = x * depth;
            buf.cur_row[base..base + depth].copy_from_slice(&buf.tmp);
            buf.cur_min[x] = min_l;
        }

        // Accumulate this row's path values into the output (fixed order:
        // the caller iterates directions serially).
        let row_out = &mut out[y * w * depth..(y + 1) * w * depth];
        for (o, l) in row_out.iter_mut().zip(&buf.cur_row) {
            *o += *l;
        }
        std::mem::swap(&mut buf.prev_row, &mut buf.cur_row);
        std::mem::swap(&mut buf.prev_min, &mut buf.cur_min);
    }
}
