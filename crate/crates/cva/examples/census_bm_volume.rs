//! Build a Census block-matching cost volume and read its cost curves.
//!
//! Census descriptors encode, per pixel, which neighbors in a window are
//! darker than the center; matching costs are Hamming distances between
//! left and right descriptors. The per-pixel slice of the volume along
//! the disparity axis — the cost curve — is what the confidence network
//! later consumes. Run with:
//!
//! ```text
//! cargo run --example census_bm_volume
//! ```

use cva::eval::overall_error;
use cva::matching::{build_cost_volume_bm, wta_disparity};
use cva::synth::{gen_stereo_pair, SceneSpec};
use cva::volume::{default_bounds, MatcherKind};

fn main() -> cva::Result<()> {
    let spec = SceneSpec {
        width: 96,
        height: 64,
        d_max: 12,
        seed: 11,
        ..SceneSpec::default()
    };
    let scene = gen_stereo_pair(&spec)?;

    let window = 5;
    let d_max = 15;
    let raw = build_cost_volume_bm(&scene.left, &scene.right, d_max, window)?;
    println!(
        "raw volume {}x{}x{} (costs 0..={})",
        raw.width(),
        raw.height(),
        raw.depth(),
        window * window - 1
    );

    // Winner-take-all disparity and its overall error against the truth.
    let disparity = wta_disparity(&raw);
    let epsilon = overall_error(&disparity, &scene.ground_truth)?;
    println!("WTA overall error vs ground truth: {:.3} %", 100.0 * epsilon);

    // Contrast one pixel the matcher gets right with one it gets wrong:
    // the shape of the cost curve is the tell, and it is exactly what
    // the confidence network reads.
    let gt = &scene.ground_truth;
    let classify = |want_correct: bool| {
        for y in 8..raw.height() - 8 {
            for x in 8..raw.width() - 8 {
                if gt.is_valid(x, y)
                    && (disparity.get(x, y) == gt.get(x, y)) == want_correct
                {
                    return Some((x, y));
                }
            }
        }
        None
    };
    for (title, (px, py)) in [
        ("a correct match", classify(true).unwrap()),
        ("a mismatch", classify(false).unwrap()),
    ] {
        println!(
            "{title} at ({px},{py}): WTA d = {}, ground truth d = {}",
            disparity.get(px, py),
            gt.get(px, py)
        );
        println!("  curve: {:?}", raw.curve(px, py));
    }

    // Normalize to [0,1] with the matcher's closed-form bounds and store.
    let bounds = default_bounds(MatcherKind::CensusBm, window, 0.0, 1)?;
    let volume = raw.normalize(&bounds)?;
    let dir = std::env::temp_dir().join("cva-example-costvol");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("bm.cvav");
    volume.write_file(&path)?;
    let reread = cva::volume::CostVolume::read_file(&path)?;
    assert_eq!(reread, volume);
    println!("volume round-trips bit-exactly through {}", path.display());
    Ok(())
}
