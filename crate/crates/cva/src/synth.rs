//! Deterministic synthetic stereo scenes and canonical cost-curve fixtures.
//!
//! Scenes are built from a piecewise-constant integer disparity field
//! (random rectangles over a background plane). The right view is the left
//! view warped by that field with z-buffer visibility, so depth
//! discontinuities produce real occlusions; occluded pixels carry no
//! ground truth. Texture is a thresholded smoothed-noise pattern with a
//! small continuous jitter; texture-less regions are constant patches,
//! which drive census descriptors to all-zero and cost curves flat.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::{DisparityMap, GrayImage, GroundTruthMap};

/// Parameters of a synthetic stereo scene.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Background-plane disparity (the far plane).
    pub d_min: usize,
    /// Largest disparity assigned to foreground rectangles.
    pub d_max: usize,
    /// Fraction of non-constant area carrying the binary texture pattern,
    /// in `[0,1]`; untextured pixels are flat mid-gray.
    pub texture_density: f32,
    /// Standard deviation of per-view Gaussian intensity noise.
    pub noise_sigma: f32,
    /// Approximate fraction of the image covered by constant
    /// (texture-less) patches, in `[0,1]`.
    pub textureless_fraction: f32,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 64,
            height: 48,
            d_min: 2,
            d_max: 10,
            texture_density: 0.9,
            noise_sigma: 0.02,
            textureless_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SceneSpec {
    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument(format!(
                "scene dimensions must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        if self.d_min > self.d_max {
            return Err(Error::InvalidArgument(format!(
                "disparity range is empty: d_min {} > d_max {}",
                self.d_min, self.d_max
            )));
        }
        if self.d_max >= self.width {
            return Err(Error::InvalidArgument(format!(
                "disparity range up to {} exceeds the image width {}",
                self.d_max, self.width
            )));
        }
        for (name, v) in [
            ("texture_density", self.texture_density),
            ("textureless_fraction", self.textureless_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must lie in [0,1], got {v}"
                )));
            }
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "noise_sigma must be finite and non-negative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// A generated scene: rectified pair plus dense ground truth on
/// non-occluded pixels.
pub struct StereoScene {
    pub left: GrayImage,
    pub right: GrayImage,
    pub ground_truth: GroundTruthMap,
}

/// Generates a deterministic synthetic stereo pair with ground truth.
pub fn gen_stereo_pair(spec: &SceneSpec) -> Result<StereoScene> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Piecewise-constant disparity field: background plane plus random
    // foreground rectangles, painted near-to-far so larger disparities win.
    let mut field = vec![spec.d_min as i64; w * h];
    if spec.d_max > spec.d_min {
        let count = rng.gen_range(3..=7usize);
        let mut rects = Vec::with_capacity(count);
        for _ in 0..count {
            let rw = rng.gen_range((w / 6).max(2)..=(w / 2).max(3));
            let rh = rng.gen_range((h / 6).max(2)..=(h / 2).max(3));
            let x0 = rng.gen_range(0..=w.saturating_sub(rw));
            let y0 = rng.gen_range(0..=h.saturating_sub(rh));
            let d = rng.gen_range(spec.d_min + 1..=spec.d_max) as i64;
            rects.push((d, x0, y0, rw, rh));
        }
        rects.sort();
        for (d, x0, y0, rw, rh) in rects {
            for y in y0..(y0 + rh).min(h) {
                for x in x0..(x0 + rw).min(w) {
                    field[y * w + x] = d;
                }
            }
        }
    }

    // Texture pattern: smoothed noise thresholded at its mean, plus a
    // small continuous jitter so strict census comparisons stay
    // informative (a pure two-level texture would leave every locally
    // darkest pixel with an all-zero descriptor).
    let pattern_field = smoothed_noise(w, h, &mut rng);
    let pattern_mean = pattern_field.iter().sum::<f32>() / pattern_field.len() as f32;
    let density_field = smoothed_noise(w, h, &mut rng);
    let (dmin, dmax) = min_max(&density_field);
    let span = (dmax - dmin).max(f32::MIN_POSITIVE);
    let jitter: Vec<f32> = (0..w * h).map(|_| rng.gen_range(-0.12..=0.12)).collect();

    let mut left = vec![0.5f32; w * h];
    for i in 0..w * h {
        let patterned = if spec.texture_density >= 1.0 {
            true
        } else if spec.texture_density <= 0.0 {
            false
        } else {
            (density_field[i] - dmin) / span < spec.texture_density
        };
        if patterned {
            let base = if pattern_field[i] < pattern_mean { 0.3 } else { 0.7 };
            left[i] = (base + jitter[i]).clamp(0.0, 1.0);
        }
    }

    // Texture-less constant patches painted over the texture.
    if spec.textureless_fraction >= 1.0 {
        left.fill(0.5);
    } else if spec.textureless_fraction > 0.0 {
        let target = (spec.textureless_fraction * (w * h) as f32).ceil() as usize;
        let mut covered = vec![false; w * h];
        let mut count = 0usize;
        let levels = [0.35f32, 0.5, 0.65];
        for _ in 0..64 {
            if count >= target {
                break;
            }
            let rw = rng.gen_range((w / 8).max(2)..=(w / 3).max(3)).min(w);
            let rh = rng.gen_range((h / 8).max(2)..=(h / 3).max(3)).min(h);
            let x0 = rng.gen_range(0..=w - rw);
            let y0 = rng.gen_range(0..=h - rh);
            let level = levels[rng.gen_range(0..levels.len())];
            for y in y0..y0 + rh {
                for x in x0..x0 + rw {
                    let i = y * w + x;
                    left[i] = level;
                    if !covered[i] {
                        covered[i] = true;
                        count += 1;
                    }
                }
            }
        }
    }

    // Warp to the right view with z-buffer visibility: for right pixel xr,
    // the visible source is the candidate left pixel with the largest
    // disparity among { xl = xr + d : field(xl) = d }.
    let mut right = vec![f32::NAN; w * h];
    let mut visible = vec![false; w * h];
    for y in 0..h {
        for xr in 0..w {
            let mut best: Option<(i64, usize)> = None;
            for d in spec.d_min as i64..=spec.d_max as i64 {
                let xl = xr as i64 + d;
                if xl >= w as i64 {
                    break;
                }
                let xl = xl as usize;
                if field[y * w + xl] == d && best.is_none_or(|(bd, _)| d > bd) {
                    best = Some((d, xl));
                }
            }
            let i = y * w + xr;
            match best {
                Some((_, xl)) => {
                    right[i] = left[y * w + xl];
                    visible[y * w + xl] = true;
                }
                None => {
                    // Revealed at the right border: continue the background.
                    let xl = (xr + spec.d_min).min(w - 1);
                    right[i] = left[y * w + xl];
                }
            }
        }
    }

    // Ground truth on the left view: the field where the pixel is visible
    // in the right view and projects inside it.
    let mut gt_values = vec![0.0f32; w * h];
    let mut gt_valid = vec![false; w * h];
    for y in 0..h {
        for xl in 0..w {
            let i = y * w + xl;
            let d = field[i];
            if visible[i] && xl as i64 - d >= 0 {
                gt_values[i] = d as f32;
                gt_valid[i] = true;
            }
        }
    }

    // Independent per-view radiometric noise.
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0f32, spec.noise_sigma)
            .map_err(|e| Error::InvalidArgument(format!("bad noise sigma: {e}")))?;
        for v in left.iter_mut() {
            *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
        for v in right.iter_mut() {
            *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }

    Ok(StereoScene {
        left: GrayImage::new(w, h, left)?,
        right: GrayImage::new(w, h, right)?,
        ground_truth: DisparityMap::new(w, h, gt_values, gt_valid)?,
    })
}

/// Uniform noise smoothed by two radius-1 box-blur passes.
fn smoothed_noise(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let mut field: Vec<f32> = (0..w * h).map(|_| rng.gen_range(0.0..=1.0)).collect();
    for _ in 0..2 {
        field = box_blur(&field, w, h);
    }
    field
}

fn box_blur(src: &[f32], w: usize, h: usize) -> Vec<f32> {
    let clamp = |v: i64, hi: usize| v.clamp(0, hi as i64 - 1) as usize;
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0.0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    sum += src[clamp(y as i64 + dy, h) * w + clamp(x as i64 + dx, w)];
                }
            }
            out[y * w + x] = sum / 9.0;
        }
    }
    out
}

fn min_max(v: &[f32]) -> (f32, f32) {
    v.iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

/// Canonical cost-curve shapes used as matching-ambiguity fixtures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveArchetype {
    /// One zero-cost minimum, every other value one.
    Ideal,
    /// A rough curve whose global minimum lies clearly below every other
    /// local minimum.
    DistinctMin,
    /// Two near-equal minima, both below every other local minimum.
    DoubleMin,
    /// A contiguous plateau attains the minimum.
    FlatMin,
}

/// Shape knobs for [`gen_cost_curve`].
#[derive(Debug, Clone)]
pub struct CurveParams {
    /// Position of the (first) minimum; `None` draws it from the seed.
    pub min_pos: Option<usize>,
    /// Maximum cost difference between the two minima of a double-min curve.
    pub gap: f32,
    /// Plateau width of a flat-min curve.
    pub plateau: usize,
}

impl Default for CurveParams {
    fn default() -> Self {
        Self {
            min_pos: None,
            gap: 0.05,
            plateau: 3,
        }
    }
}

/// Generates a cost curve of length `d` in `[0,1]` with the archetype's
/// defining shape. Deterministic per seed.
pub fn gen_cost_curve(
    archetype: CurveArchetype,
    d: usize,
    params: &CurveParams,
    seed: u64,
) -> Result<Vec<f32>> {
    if d < 4 {
        return Err(Error::InvalidArgument(format!(
            "curve length must be at least 4, got {d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m1 = params.min_pos.unwrap_or_else(|| rng.gen_range(0..d)) % d;

    // Rough background well above the minima: values in [0.45, 1.0].
    let background = |rng: &mut ChaCha8Rng| -> Vec<f32> {
        (0..d).map(|_| rng.gen_range(0.45..=1.0)).collect()
    };

    let curve = match archetype {
        CurveArchetype::Ideal => {
            let mut c = vec![1.0; d];
            c[m1] = 0.0;
            c
        }
        CurveArchetype::DistinctMin => {
            let mut c = background(&mut rng);
            c[m1] = rng.gen_range(0.0..=0.15);
            c
        }
        CurveArchetype::DoubleMin => {
            let mut c = background(&mut rng);
            // Second minimum at least two levels away so both are local
            // minima in the scanner's sense.
            let offset = rng.gen_range(2..d - 1);
            let m2 = (m1 + offset) % d;
            let v = rng.gen_range(0.0..=0.15);
            let delta = rng.gen_range(0.0..=params.gap.clamp(0.0, 0.2));
            c[m1] = v;
            c[m2] = (v + delta).min(0.3);
            c
        }
        CurveArchetype::FlatMin => {
            let width = params.plateau.clamp(1, d);
            let start = m1.min(d - width);
            let mut c = background(&mut rng);
            let v = rng.gen_range(0.0..=0.2);
            for value in c.iter_mut().skip(start).take(width) {
                *value = v;
            }
            c
        }
    };
    Ok(curve)
}
