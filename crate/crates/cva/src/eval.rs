//! Confidence evaluation: ROC curves over confidence-ordered pixels,
//! interval-extended handling of tied-confidence blocks, AUC, and the
//! closed-form optimal AUC.
//!
//! Pixels are sorted by decreasing confidence; the curve plots the
//! disparity error rate among the top-p fraction against the density p.
//! Pixels sharing one confidence value form a block whose internal order
//! is unknowable, so the default protocol emits an exact point at every
//! block end and, inside blocks that span more than one density step,
//! additional interval samples at the global step grid: their lower/upper
//! bounds come from the best case (correct pixels first) and worst case
//! (incorrect first), and the reported error is the interval center.
//!
//! The legacy protocol (comparison mode) instead reports errors at the
//! uniform step grid by extending each cut to the end of the tied block
//! and interpolating linearly between those sparse samples; inside a wide
//! block this can produce points strictly below the theoretically optimal
//! curve, which is the defect the interval extension removes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{ConfidenceMap, DisparityMap, GroundTruthMap};
use crate::train::label_correctness;

/// How a ROC point was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RocPointKind {
    /// Exact error at the end of a maximal equal-confidence run.
    BlockBoundary,
    /// Interval-extended sample inside a tied block; `lower`/`upper` hold
    /// the best/worst-case error bounds and `error` their center.
    IntervalSample,
    /// Legacy-protocol value at a uniform grid density, linearly
    /// interpolated between tie-extended samples.
    LegacyGrid,
}

impl RocPointKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RocPointKind::BlockBoundary => "block-boundary",
            RocPointKind::IntervalSample => "interval-sample",
            RocPointKind::LegacyGrid => "legacy-grid",
        }
    }
}

/// One sampled point of a ROC curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// Fraction of pixels retained, in `(0, 1]`.
    pub density: f64,
    /// Error rate among the retained pixels.
    pub error: f64,
    /// Best-case error bound (equals `error` for exact points).
    pub lower: f64,
    /// Worst-case error bound (equals `error` for exact points).
    pub upper: f64,
    pub kind: RocPointKind,
}

/// A sampled ROC curve; the final point is always `(1, ε)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    /// Number of evaluated (valid ground-truth) pixels.
    pub total_pixels: usize,
    /// Overall error rate ε.
    pub epsilon: f64,
}

/// Fraction of valid ground-truth pixels whose disparity estimate is
/// labeled incorrect. Pixels without a valid estimate count as incorrect.
pub fn overall_error(disp: &DisparityMap, gt: &GroundTruthMap) -> Result<f64> {
    check_dims(disp.width(), disp.height(), gt.width(), gt.height())?;
    let mut wrong = 0usize;
    let mut total = 0usize;
    for y in 0..gt.height() {
        for x in 0..gt.width() {
            if !gt.is_valid(x, y) {
                continue;
            }
            total += 1;
            let correct = disp.is_valid(x, y)
                && label_correctness(disp.get(x, y) as f64, gt.get(x, y) as f64);
            if !correct {
                wrong += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::InvalidArgument(
            "ground truth contains no valid pixels".into(),
        ));
    }
    Ok(wrong as f64 / total as f64)
}

/// Default-protocol ROC curve from confidence/disparity/ground-truth maps.
pub fn roc_curve(
    conf: &ConfidenceMap,
    disp: &DisparityMap,
    gt: &GroundTruthMap,
    step: f64,
) -> Result<RocCurve> {
    roc_from_pairs(&collect_pairs(conf, disp, gt)?, step)
}

/// Legacy-protocol ROC curve (comparison mode) from maps.
pub fn roc_curve_legacy(
    conf: &ConfidenceMap,
    disp: &DisparityMap,
    gt: &GroundTruthMap,
    step: f64,
) -> Result<RocCurve> {
    roc_from_pairs_legacy(&collect_pairs(conf, disp, gt)?, step)
}

fn check_dims(w1: usize, h1: usize, w2: usize, h2: usize) -> Result<()> {
    if w1 != w2 || h1 != h2 {
        return Err(Error::InvalidArgument(format!(
            "map dimensions differ: {w1}x{h1} vs {w2}x{h2}"
        )));
    }
    Ok(())
}

fn collect_pairs(
    conf: &ConfidenceMap,
    disp: &DisparityMap,
    gt: &GroundTruthMap,
) -> Result<Vec<(f64, bool)>> {
    check_dims(conf.width(), conf.height(), gt.width(), gt.height())?;
    check_dims(disp.width(), disp.height(), gt.width(), gt.height())?;
    let mut pairs = Vec::new();
    for y in 0..gt.height() {
        for x in 0..gt.width() {
            if !gt.is_valid(x, y) {
                continue;
            }
            let correct = disp.is_valid(x, y)
                && label_correctness(disp.get(x, y) as f64, gt.get(x, y) as f64);
            pairs.push((conf.get(x, y) as f64, correct));
        }
    }
    Ok(pairs)
}

/// Sorted pixel list plus cumulative wrong counts shared by both protocols.
struct Ranked {
    /// `(confidence, correct)` sorted by decreasing confidence.
    sorted: Vec<(f64, bool)>,
    /// `wrong[k]` = number of incorrect pixels among the first k.
    wrong: Vec<usize>,
    n: usize,
    /// Number of grid levels (1/step).
    grid: u64,
}

fn rank(pairs: &[(f64, bool)], step: f64) -> Result<Ranked> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot build a ROC curve from zero pixels".into(),
        ));
    }
    if pairs.iter().any(|(c, _)| !c.is_finite()) {
        return Err(Error::InvalidArgument(
            "confidence values must be finite".into(),
        ));
    }
    if !(step > 0.0 && step < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "density step must lie in (0, 1), got {step}"
        )));
    }
    let grid = (1.0 / step).round();
    if !(2.0..=1e6).contains(&grid) || ((1.0 / step) - grid).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "density step {step} must divide 1 into a whole number of levels"
        )));
    }

    let mut sorted = pairs.to_vec();
    sorted.sort_unstable_by(|a, b| b.0.partial_cmp(&a.0).expect("finite confidences"));
    let mut wrong = Vec::with_capacity(sorted.len() + 1);
    wrong.push(0usize);
    let mut w = 0usize;
    for &(_, correct) in &sorted {
        if !correct {
            w += 1;
        }
        wrong.push(w);
    }
    Ok(Ranked {
        n: sorted.len(),
        sorted,
        wrong,
        grid: grid as u64,
    })
}

/// Builds the default-protocol ROC curve from `(confidence, correct)`
/// pairs; `step` is the density step of the interval-sample grid
/// (default 0.05).
pub fn roc_from_pairs(pairs: &[(f64, bool)], step: f64) -> Result<RocCurve> {
    let r = rank(pairs, step)?;
    let (n, g) = (r.n as u64, r.grid);
    let nf = r.n as f64;

    let mut points = Vec::new();
    let mut start = 0usize; // first index of the current block
    while start < r.n {
        let mut end = start + 1;
        while end < r.n && r.sorted[end].0 == r.sorted[start].0 {
            end += 1;
        }
        let wrong_before = r.wrong[start] as f64;
        let block_wrong = (r.wrong[end] - r.wrong[start]) as f64;
        let block_correct = (end - start) as f64 - block_wrong;

        // Interval samples at global grid multiples strictly inside the
        // block's density span: start/n < j/g < end/n.
        let j_lo = (start as u64 * g) / n + 1;
        let j_hi = (end as u64 * g).saturating_sub(1) / n;
        for j in j_lo..=j_hi {
            let density = j as f64 / g as f64;
            let taken = density * nf;
            let inside = taken - start as f64;
            let lower_wrong = wrong_before + (inside - block_correct).max(0.0);
            let upper_wrong = wrong_before + inside.min(block_wrong);
            let lower = lower_wrong / taken;
            let upper = upper_wrong / taken;
            points.push(RocPoint {
                density,
                error: 0.5 * (lower + upper),
                lower,
                upper,
                kind: RocPointKind::IntervalSample,
            });
        }

        // Exact point at the block end.
        let k = end as f64;
        let e = r.wrong[end] as f64 / k;
        points.push(RocPoint {
            density: k / nf,
            error: e,
            lower: e,
            upper: e,
            kind: RocPointKind::BlockBoundary,
        });
        start = end;
    }

    let epsilon = r.wrong[r.n] as f64 / nf;
    Ok(RocCurve {
        points,
        total_pixels: r.n,
        epsilon,
    })
}

/// Builds the legacy-protocol ROC curve: tie-extended exact samples at the
/// step targets, reported at the uniform grid by linear interpolation.
pub fn roc_from_pairs_legacy(pairs: &[(f64, bool)], step: f64) -> Result<RocCurve> {
    let r = rank(pairs, step)?;
    let (n, g) = (r.n as u64, r.grid);
    let nf = r.n as f64;

    // End of the tied run containing each index.
    let mut run_end = vec![0usize; r.n + 1];
    let mut i = 0usize;
    while i < r.n {
        let mut end = i + 1;
        while end < r.n && r.sorted[end].0 == r.sorted[i].0 {
            end += 1;
        }
        for e in run_end.iter_mut().take(end + 1).skip(i + 1) {
            *e = end;
        }
        i = end;
    }

    // Tie-extended exact samples at each grid target (deduplicated).
    let mut samples: Vec<usize> = Vec::new();
    for j in 1..=g {
        let target = (j * n).div_ceil(g) as usize; // ceil(j·n/g) pixels
        let k = run_end[target.max(1)];
        if samples.last() != Some(&k) {
            samples.push(k);
        }
    }

    // Report at the uniform grid, interpolating linearly in error.
    let mut points = Vec::with_capacity(g as usize);
    for j in 1..=g {
        let density = j as f64 / g as f64;
        // Exact rational test k/n == j/g to reuse a sample verbatim.
        let exact = samples
            .iter()
            .find(|&&k| (k as u64) * g == j * n)
            .copied();
        let error = if let Some(k) = exact {
            r.wrong[k] as f64 / k as f64
        } else {
            let before = samples
                .iter()
                .rev()
                .find(|&&k| (k as u64) * g < j * n)
                .copied();
            let after = samples
                .iter()
                .find(|&&k| (k as u64) * g > j * n)
                .copied()
                .expect("the final sample covers the full density range");
            let (pb, eb) = sample_point(&r, after, nf);
            match before {
                None => eb, // constant extension left of the first sample
                Some(kb) => {
                    let (pa, ea) = sample_point(&r, kb, nf);
                    ea + (eb - ea) * (density - pa) / (pb - pa)
                }
            }
        };
        points.push(RocPoint {
            density,
            error,
            lower: error,
            upper: error,
            kind: RocPointKind::LegacyGrid,
        });
    }

    let epsilon = r.wrong[r.n] as f64 / nf;
    Ok(RocCurve {
        points,
        total_pixels: r.n,
        epsilon,
    })
}

fn sample_point(r: &Ranked, k: usize, nf: f64) -> (f64, f64) {
    (k as f64 / nf, r.wrong[k] as f64 / k as f64)
}

/// Area under a ROC curve.
///
/// Between consecutive points the wrong-pixel mass `W(p) = p·e(p)` is taken
/// as linear (the same model that generates interval-sample errors), so
/// each segment integrates `e(p) = W(p)/p` exactly:
/// `∫ = s·Δp + (W_a − s·p_a)·ln(p_b/p_a)` with `s = ΔW/Δp`. The curve is
/// extended left of the first point at constant error. This reproduces the
/// closed-form optimal AUC exactly for perfectly ordered confidences and
/// never undercuts it, unlike a trapezoid rule in error space, which is
/// biased low on the concave optimal curve.
pub fn auc(curve: &RocCurve) -> f64 {
    let pts = &curve.points;
    if pts.is_empty() {
        return 0.0;
    }
    let mut total = pts[0].error * pts[0].density;
    for ab in pts.windows(2) {
        let (pa, pb) = (ab[0].density, ab[1].density);
        let (wa, wb) = (pa * ab[0].error, pb * ab[1].error);
        let s = (wb - wa) / (pb - pa);
        total += s * (pb - pa) + (wa - s * pa) * (pb / pa).ln();
    }
    total
}

/// Closed-form optimal AUC for a disparity map with overall error `eps`:
/// `eps + (1 − eps)·ln(1 − eps)`, with the `eps = 1` limit defined as 1.
pub fn auc_opt(eps: f64) -> Result<f64> {
    if !eps.is_finite() || !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "overall error must lie in [0,1], got {eps}"
        )));
    }
    if eps >= 1.0 {
        return Ok(1.0);
    }
    Ok(eps + (1.0 - eps) * (1.0 - eps).ln())
}

/// Theoretically optimal error rate at density `p` for overall error `eps`.
pub fn optimal_error(p: f64, eps: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        ((p - (1.0 - eps)) / p).max(0.0)
    }
}

/// Writes a curve as CSV `p,error,lower,upper,kind`; when `with_optimal`
/// is set, reference rows of the optimal curve are appended at the same
/// densities.
pub fn write_curve_csv(
    curve: &RocCurve,
    with_optimal: bool,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut out = String::from("p,error,lower,upper,kind\n");
    for pt in &curve.points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            pt.density,
            pt.error,
            pt.lower,
            pt.upper,
            pt.kind.as_str()
        ));
    }
    if with_optimal {
        for pt in &curve.points {
            let e = optimal_error(pt.density, curve.epsilon);
            out.push_str(&format!("{},{},{},{},optimal\n", pt.density, e, e, e));
        }
    }
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}

/// Per-image evaluation summary.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub image: String,
    pub epsilon: f64,
    pub auc: f64,
    pub auc_opt: f64,
}

/// Writes per-image summary rows plus a dataset average and the same
/// average scaled by 10² (the conventional reporting scale).
pub fn write_summary_csv(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no summary rows to write".into()));
    }
    let mut out = String::from("image,epsilon,auc,auc_opt,auc_minus_opt\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.image,
            r.epsilon,
            r.auc,
            r.auc_opt,
            r.auc - r.auc_opt
        ));
    }
    let n = rows.len() as f64;
    let (me, ma, mo) = (
        rows.iter().map(|r| r.epsilon).sum::<f64>() / n,
        rows.iter().map(|r| r.auc).sum::<f64>() / n,
        rows.iter().map(|r| r.auc_opt).sum::<f64>() / n,
    );
    out.push_str(&format!("average,{},{},{},{}\n", me, ma, mo, ma - mo));
    out.push_str(&format!(
        "average_x100,{},{},{},{}\n",
        me * 100.0,
        ma * 100.0,
        mo * 100.0,
        (ma - mo) * 100.0
    ));
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// n pixels with distinct confidences, perfectly ordered: `wrong` of
    /// them at the bottom.
    fn perfect(n: usize, wrong: usize) -> Vec<(f64, bool)> {
        (0..n)
            .map(|i| (1.0 - i as f64 / n as f64, i < n - wrong))
            .collect()
    }

    #[test]
    fn perfect_ordering_lies_on_the_optimal_curve() {
        let pairs = perfect(200, 80);
        let curve = roc_from_pairs(&pairs, 0.05).unwrap();
        assert_eq!(curve.epsilon, 0.4);
        for pt in &curve.points {
            let opt = optimal_error(pt.density, curve.epsilon);
            assert!(
                (pt.error - opt).abs() <= 1e-12,
                "p={} e={} opt={opt}",
                pt.density,
                pt.error
            );
        }
        let last = curve.points.last().unwrap();
        assert_eq!(last.density, 1.0);
        assert_eq!(last.error, curve.epsilon);
    }

    #[test]
    fn single_tied_block_interval_samples() {
        // 100 pixels sharing one confidence, 20 incorrect.
        let pairs: Vec<(f64, bool)> = (0..100).map(|i| (0.7, i >= 20)).collect();
        let curve = roc_from_pairs(&pairs, 0.05).unwrap();
        let interval: Vec<&RocPoint> = curve
            .points
            .iter()
            .filter(|p| p.kind == RocPointKind::IntervalSample)
            .collect();
        assert_eq!(interval.len(), 19); // p = 0.05 … 0.95
        for (idx, pt) in interval.iter().enumerate() {
            let p = (idx + 1) as f64 * 0.05;
            assert!((pt.density - p).abs() < 1e-12);
            let taken = 100.0 * p;
            let lower = (taken - 80.0).max(0.0) / taken;
            let upper = (20.0f64).min(taken) / taken;
            assert!((pt.lower - lower).abs() < 1e-12, "p={p}");
            assert!((pt.upper - upper).abs() < 1e-12, "p={p}");
            assert!((pt.error - 0.5 * (lower + upper)).abs() < 1e-12);
        }
        let last = curve.points.last().unwrap();
        assert_eq!(last.kind, RocPointKind::BlockBoundary);
        assert_eq!((last.density, last.error), (1.0, 0.2));
    }

    #[test]
    fn homogeneous_blocks_have_tight_intervals() {
        // 50 correct at confidence 0.9, then 50 incorrect at 0.1.
        let mut pairs = vec![(0.9, true); 50];
        pairs.extend(vec![(0.1, false); 50]);
        let curve = roc_from_pairs(&pairs, 0.05).unwrap();
        let boundaries: Vec<&RocPoint> = curve
            .points
            .iter()
            .filter(|p| p.kind == RocPointKind::BlockBoundary)
            .collect();
        assert_eq!(boundaries.len(), 2);
        assert_eq!((boundaries[0].density, boundaries[0].error), (0.5, 0.0));
        assert_eq!((boundaries[1].density, boundaries[1].error), (1.0, 0.5));
        for pt in curve.points.iter().filter(|p| p.kind == RocPointKind::IntervalSample) {
            assert_eq!(pt.lower, pt.upper, "homogeneous block at p={}", pt.density);
        }
    }

    #[test]
    fn block_boundaries_match_prefix_oracle_exactly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let n = rng.gen_range(1..120usize);
            let pairs: Vec<(f64, bool)> = (0..n)
                .map(|_| {
                    (
                        // Few confidence levels force ties.
                        rng.gen_range(0..6) as f64 / 5.0,
                        rng.gen_bool(0.6),
                    )
                })
                .collect();
            let curve = roc_from_pairs(&pairs, 0.05).unwrap();

            // Brute-force oracle: sort, count wrong prefix by prefix.
            let mut sorted = pairs.clone();
            sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            for pt in curve.points.iter().filter(|p| p.kind == RocPointKind::BlockBoundary) {
                let k = (pt.density * n as f64).round() as usize;
                let wrong = sorted[..k].iter().filter(|(_, c)| !c).count();
                assert_eq!(pt.error, wrong as f64 / k as f64);
                // Block ends are exactly where the confidence changes.
                if k < n {
                    assert_ne!(sorted[k - 1].0, sorted[k].0);
                }
            }
        }
    }

    #[test]
    fn auc_of_constant_error_curve_is_epsilon() {
        let eps = 0.25;
        let points: Vec<RocPoint> = (1..=20)
            .map(|j| RocPoint {
                density: j as f64 / 20.0,
                error: eps,
                lower: eps,
                upper: eps,
                kind: RocPointKind::BlockBoundary,
            })
            .collect();
        let curve = RocCurve {
            points,
            total_pixels: 20,
            epsilon: eps,
        };
        assert!((auc(&curve) - eps).abs() < 1e-12);
    }

    #[test]
    fn auc_of_perfect_ordering_matches_closed_form() {
        // Sampled at 0.1% effective steps via 1000 distinct confidences.
        let pairs = perfect(1000, 500);
        let curve = roc_from_pairs(&pairs, 0.05).unwrap();
        let a = auc(&curve);
        let opt = auc_opt(0.5).unwrap();
        assert!((a - opt).abs() < 1e-3, "auc {a} vs optimal {opt}");
        // The exact segment integration is far tighter than 1e-3.
        assert!((a - opt).abs() < 1e-9, "auc {a} vs optimal {opt}");
        assert!(a >= opt - 1e-9);
    }

    #[test]
    fn auc_opt_examples() {
        assert_eq!(auc_opt(0.0).unwrap(), 0.0);
        assert!((auc_opt(0.5).unwrap() - 0.153_426_4).abs() < 1e-6);
        assert_eq!(auc_opt(1.0).unwrap(), 1.0);
        assert!(matches!(auc_opt(-0.1), Err(Error::InvalidArgument(_))));
        assert!(matches!(auc_opt(1.1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn auc_is_invariant_under_monotone_confidence_transforms() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pairs: Vec<(f64, bool)> = (0..150)
            .map(|_| (rng.gen_range(0..10) as f64 / 10.0, rng.gen_bool(0.7)))
            .collect();
        let mapped: Vec<(f64, bool)> = pairs
            .iter()
            .map(|&(c, ok)| (0.05 + 0.9 * (c * c * 0.5 + 0.3 * c), ok))
            .collect();
        let a = roc_from_pairs(&pairs, 0.05).unwrap();
        let b = roc_from_pairs(&mapped, 0.05).unwrap();
        assert_eq!(auc(&a), auc(&b));
    }

    #[test]
    fn shuffled_confidences_never_beat_the_perfect_ordering() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let pairs = perfect(120, 48);
        let perfect_auc = auc(&roc_from_pairs(&pairs, 0.05).unwrap());
        let labels: Vec<bool> = pairs.iter().map(|&(_, c)| c).collect();
        for _ in 0..20 {
            let shuffled: Vec<(f64, bool)> = labels
                .iter()
                .map(|&c| (rng.gen_range(0.0..1.0), c))
                .collect();
            let a = auc(&roc_from_pairs(&shuffled, 0.05).unwrap());
            assert!(a >= perfect_auc - 1e-12);
        }
    }

    #[test]
    fn legacy_mode_dips_below_the_optimal_curve_where_default_does_not() {
        // 55 correct pixels with distinct high confidences, then 45
        // incorrect pixels sharing one low confidence (45 % tied).
        let mut pairs: Vec<(f64, bool)> = (0..55)
            .map(|i| (1.0 - i as f64 * 0.001, true))
            .collect();
        pairs.extend(vec![(0.05, false); 45]);

        let eps = 0.45;
        let legacy = roc_from_pairs_legacy(&pairs, 0.05).unwrap();
        assert_eq!(legacy.epsilon, eps);
        let below: Vec<&RocPoint> = legacy
            .points
            .iter()
            .filter(|pt| pt.error < optimal_error(pt.density, eps) - 1e-9)
            .collect();
        assert!(
            !below.is_empty(),
            "legacy protocol should dip below the optimal curve"
        );
        // The dip sits inside the tie-extended gap, e.g. at p = 0.75 the
        // chord from (0.55, 0) to (1.0, 0.45) gives 0.2 < 4/15.
        let p75 = legacy
            .points
            .iter()
            .find(|pt| (pt.density - 0.75).abs() < 1e-12)
            .unwrap();
        assert!((p75.error - 0.2).abs() < 1e-12);
        assert!(optimal_error(0.75, eps) > 0.26);

        let default = roc_from_pairs(&pairs, 0.05).unwrap();
        for pt in &default.points {
            assert!(
                pt.error >= optimal_error(pt.density, eps) - 1e-12,
                "default protocol point below optimal at p={}",
                pt.density
            );
        }
    }

    #[test]
    fn legacy_single_block_reports_overall_error_everywhere() {
        let pairs: Vec<(f64, bool)> = (0..100).map(|i| (0.3, i % 5 != 0)).collect();
        let legacy = roc_from_pairs_legacy(&pairs, 0.05).unwrap();
        assert_eq!(legacy.points.len(), 20);
        for pt in &legacy.points {
            assert_eq!(pt.error, 0.2);
        }
    }

    #[test]
    fn densities_are_strictly_increasing_and_end_at_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let n = rng.gen_range(1..300usize);
            let pairs: Vec<(f64, bool)> = (0..n)
                .map(|_| (rng.gen_range(0..4) as f64, rng.gen_bool(0.5)))
                .collect();
            let curve = roc_from_pairs(&pairs, 0.05).unwrap();
            for ab in curve.points.windows(2) {
                assert!(ab[0].density < ab[1].density);
            }
            let last = curve.points.last().unwrap();
            assert_eq!(last.density, 1.0);
            assert_eq!(last.error, curve.epsilon);
            for pt in &curve.points {
                assert!(pt.lower <= pt.error + 1e-15 && pt.error <= pt.upper + 1e-15);
            }
        }
    }

    #[test]
    fn overall_error_counts_by_hand() {
        use crate::image::DisparityMap;
        // 10 pixels, 3 wrong (errors of 5 px at small ground truths).
        let gt = DisparityMap::new(
            10,
            1,
            vec![10.0; 10],
            vec![true; 10],
        )
        .unwrap();
        let mut est = vec![10.0f32; 10];
        est[1] = 15.0;
        est[4] = 15.0;
        est[7] = 15.0;
        let disp = DisparityMap::new(10, 1, est, vec![true; 10]).unwrap();
        assert_eq!(overall_error(&disp, &gt).unwrap(), 0.3);

        let empty = DisparityMap::empty(10, 1).unwrap();
        assert!(matches!(
            overall_error(&disp, &empty),
            Err(Error::InvalidArgument(_))
        ));
    }
}
