//! Fully-convolutional inference: one forward pass per image.
//!
//! The network trains on N×N×D patches, but every layer is a convolution,
//! so at inference the whole cost volume passes through in a single
//! forward evaluation — no per-pixel patch loop. Border pixels reuse the
//! nearest interior costs (edge replication). Tiling bounds peak memory
//! without changing a single output value. Run with:
//!
//! ```text
//! cargo run --example infer_map
//! ```

use cva::matching::{build_cost_volume_bm, wta_disparity};
use cva::net::{NetConfig, Network};
use cva::synth::{gen_stereo_pair, SceneSpec};
use cva::train::{build_training_set, train, TrainConfig};
use cva::volume::{default_bounds, CostVolume, MatcherKind};

fn scene_volume(seed: u64) -> cva::Result<(CostVolume, cva::image::GroundTruthMap)> {
    let scene = gen_stereo_pair(&SceneSpec {
        width: 48,
        height: 36,
        d_max: 10,
        seed,
        ..SceneSpec::default()
    })?;
    let raw = build_cost_volume_bm(&scene.left, &scene.right, 15, 5)?;
    let vol = raw.normalize(&default_bounds(MatcherKind::CensusBm, 5, 0.0, 1)?)?;
    Ok((vol, scene.ground_truth))
}

fn main() -> cva::Result<()> {
    // A quickly trained small network (one training scene, two epochs).
    let net_cfg = NetConfig {
        n: 5,
        d: 16,
        channels: 8,
        head: 8,
        depth_kernels: vec![4],
        ..NetConfig::canonical()
    };
    let (train_vol, train_gt) = scene_volume(3)?;
    let disparity = wta_disparity(&train_vol);
    let samples = build_training_set(
        std::slice::from_ref(&train_vol),
        &[disparity],
        &[train_gt],
        net_cfg.n,
    )?;
    let cfg = TrainConfig {
        batch_size: 256,
        phase1_epochs: 2,
        phase1_lr: 3e-3,
        phase2_epochs: 0,
        seed: 2,
        ..TrainConfig::default()
    };
    let net = Network::<f32>::init(net_cfg, cfg.seed)?;
    let outcome = train(net, &[train_vol], &samples, &cfg, |_, _| Ok(()))?;
    let net = outcome.net;

    // Whole-image inference on an unseen scene.
    let (vol, _) = scene_volume(4)?;
    let conf = net.infer_full(&vol)?;
    println!(
        "confidence map {}x{} from a {}x{}x{} volume in one pass",
        conf.width(),
        conf.height(),
        vol.width(),
        vol.height(),
        vol.depth()
    );
    let values = conf.values();
    let (mut lo, mut hi, mut sum) = (f32::INFINITY, f32::NEG_INFINITY, 0.0f64);
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v as f64;
    }
    println!(
        "confidence range [{lo:.4}, {hi:.4}], mean {:.4}",
        sum / values.len() as f64
    );

    // Tiled inference bounds memory and reproduces the same map exactly.
    for tile in [8, 17, 48] {
        let tiled = net.infer_tiled(&vol, tile)?;
        let max_diff = tiled
            .values()
            .iter()
            .zip(values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max)
            ;
        println!("tile width {tile:2}: max |difference| = {max_diff:.1e}");
    }

    let dir = std::env::temp_dir().join("cva-example-infer");
    std::fs::create_dir_all(&dir)?;
    conf.write_pgm(dir.join("confidence.pgm"))?;
    println!("wrote {}", dir.join("confidence.pgm").display());
    Ok(())
}
