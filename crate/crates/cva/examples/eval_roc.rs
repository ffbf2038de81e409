//! ROC evaluation of confidence maps, with the tied-confidence pitfall.
//!
//! The sweep removes pixels in increasing-confidence order and plots the
//! disparity error of what remains against the retained fraction p. Its
//! area (AUC) is compared to the theoretically optimal curve, which
//! drops all wrong pixels first: auc_opt = ε + (1−ε)·ln(1−ε).
//!
//! When many pixels share one confidence there is no unique order. The
//! default protocol reports an exact point per tied block plus explicit
//! lower/upper interval bounds inside blocks; the legacy protocol
//! interpolates across blocks and can dip below the optimal curve — a
//! contradiction the interval form avoids. Run with:
//!
//! ```text
//! cargo run --example eval_roc
//! ```

use cva::eval::{
    auc, auc_opt, optimal_error, overall_error, roc_curve, roc_from_pairs,
    roc_from_pairs_legacy,
};
use cva::image::ConfidenceMap;
use cva::matching::{build_cost_volume_bm, wta_disparity};
use cva::synth::{gen_stereo_pair, SceneSpec};
use cva::volume::{default_bounds, MatcherKind};

fn main() -> cva::Result<()> {
    // A real map: confidence from the min-cost heuristic (deep minimum →
    // high confidence) on a synthetic scene.
    let scene = gen_stereo_pair(&SceneSpec {
        width: 96,
        height: 64,
        d_max: 12,
        textureless_fraction: 0.3,
        seed: 31,
        ..SceneSpec::default()
    })?;
    let raw = build_cost_volume_bm(&scene.left, &scene.right, 15, 5)?;
    let vol = raw.normalize(&default_bounds(MatcherKind::CensusBm, 5, 0.0, 1)?)?;
    let disparity = wta_disparity(&vol);

    let mut conf_values = Vec::with_capacity(vol.width() * vol.height());
    for y in 0..vol.height() {
        for x in 0..vol.width() {
            let min = vol.curve(x, y).iter().cloned().fold(f32::INFINITY, f32::min);
            conf_values.push(1.0 - min);
        }
    }
    let conf = ConfidenceMap::new(vol.width(), vol.height(), conf_values)?;

    let gt = &scene.ground_truth;
    let epsilon = overall_error(&disparity, gt)?;
    let curve = roc_curve(&conf, &disparity, gt, 0.05)?;
    let a = auc(&curve);
    let a_opt = auc_opt(epsilon)?;
    println!("min-cost heuristic confidence:");
    println!("  overall error ε = {epsilon:.4}");
    println!("  AUC = {a:.4}, optimal AUC = {a_opt:.4} (lower is better)");
    println!("  p      error   [lower, upper]   optimal");
    for pt in curve.points.iter().take(8) {
        println!(
            "  {:.3}  {:.4}  [{:.4}, {:.4}]  {:.4}   ({})",
            pt.density,
            pt.error,
            pt.lower,
            pt.upper,
            optimal_error(pt.density, epsilon),
            pt.kind.as_str()
        );
    }
    println!("  ... ({} points total)", curve.points.len());

    // The tied-block pitfall: 55 correct distinct-confidence pixels and
    // one block of 45 pixels sharing a confidence, 45 of 100 wrong.
    let mut pairs: Vec<(f64, bool)> = Vec::new();
    for i in 0..55 {
        pairs.push((1.0 - i as f64 / 100.0, true));
    }
    for _ in 0..45 {
        pairs.push((0.2, false));
    }
    let eps_tied = 0.45;
    let default_curve = roc_from_pairs(&pairs, 0.05)?;
    let legacy_curve = roc_from_pairs_legacy(&pairs, 0.05)?;

    println!("\ntied instance (45 % of pixels share one confidence):");
    println!("  p      default  legacy   optimal");
    for lp in &legacy_curve.points {
        // The default curve also has a point at every 5 % density here.
        let dp = default_curve
            .points
            .iter()
            .find(|p| (p.density - lp.density).abs() < 1e-9)
            .expect("matching density");
        let opt = optimal_error(lp.density, eps_tied);
        println!(
            "  {:.2}   {:.4}   {:.4}   {:.4}{}",
            lp.density,
            dp.error,
            lp.error,
            opt,
            if lp.error < opt - 1e-12 {
                "   <-- legacy below optimal"
            } else {
                ""
            }
        );
    }
    println!(
        "\ndefault AUC = {:.4}, legacy AUC = {:.4}, optimal = {:.4}",
        auc(&default_curve),
        auc(&legacy_curve),
        auc_opt(eps_tied)?
    );
    println!("the default protocol never reports an error below the optimal curve");
    Ok(())
}
