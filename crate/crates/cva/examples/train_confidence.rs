//! Train the confidence network end to end at desk scale.
//!
//! Pipeline: synthetic scenes → Census cost volumes → winner-take-all
//! disparities → per-pixel correctness labels → two-phase Adam training
//! of the 3D CNN on cost-volume patches. Run with:
//!
//! ```text
//! cargo run --example train_confidence
//! ```

use cva::matching::{build_cost_volume_bm, wta_disparity};
use cva::net::{NetConfig, Network};
use cva::synth::{gen_stereo_pair, SceneSpec};
use cva::train::{build_training_set, train, TrainConfig, TrainLogRow};
use cva::volume::{default_bounds, MatcherKind};

fn main() -> cva::Result<()> {
    // Stage 1: scenes and cost volumes.
    let (window, d_max) = (5, 15);
    let mut volumes = Vec::new();
    let mut disparities = Vec::new();
    let mut gts = Vec::new();
    for seed in 0..2u64 {
        let scene = gen_stereo_pair(&SceneSpec {
            width: 48,
            height: 36,
            d_max: 12,
            seed,
            ..SceneSpec::default()
        })?;
        let raw = build_cost_volume_bm(&scene.left, &scene.right, d_max, window)?;
        disparities.push(wta_disparity(&raw));
        volumes.push(raw.normalize(&default_bounds(MatcherKind::CensusBm, window, 0.0, 1)?)?);
        gts.push(scene.ground_truth);
    }

    // Stage 2: one sample per interior ground-truth pixel, labeled by
    // whether the WTA disparity is correct there.
    let net_cfg = NetConfig {
        n: 7,
        d: 16, // must equal the volume depth d_max + 1
        channels: 8,
        head: 8,
        depth_kernels: vec![4, 8],
        ..NetConfig::canonical()
    };
    let samples = build_training_set(&volumes, &disparities, &gts, net_cfg.n)?;
    let positives = samples.iter().filter(|s| s.label == 1.0).count();
    println!(
        "{} samples ({} correct, {} incorrect)",
        samples.len(),
        positives,
        samples.len() - positives
    );

    // Stage 3: two-phase optimization. The second phase drops the
    // learning rate by 10x for fine-tuning.
    let train_cfg = TrainConfig {
        batch_size: 128,
        phase1_epochs: 3,
        phase1_lr: 3e-3,
        phase2_epochs: 1,
        phase2_lr: 3e-4,
        seed: 1,
        ..TrainConfig::default()
    };
    let net = Network::<f32>::init(net_cfg, train_cfg.seed)?;
    println!("network: {} parameters", net.param_count());

    let outcome = train(net, &volumes, &samples, &train_cfg, |epoch, _| {
        println!("  epoch {epoch} done");
        Ok(())
    })?;

    let epochs = outcome.log.last().unwrap().epoch;
    for e in 1..=epochs {
        let rows: Vec<&TrainLogRow> = outcome.log.iter().filter(|r| r.epoch == e).collect();
        let mean = rows.iter().map(|r| r.loss).sum::<f64>() / rows.len() as f64;
        println!(
            "epoch {e}: mean BCE {mean:.4} over {} steps at lr {}",
            rows.len(),
            rows[0].lr
        );
    }

    // Stage 4: checkpoint round-trip.
    let dir = std::env::temp_dir().join("cva-example-train");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("confidence.cvam");
    outcome.net.save(&path)?;
    let reloaded = Network::<f32>::load(&path)?;
    assert_eq!(reloaded.params(), outcome.net.params());
    println!("checkpoint round-trips bit-exactly through {}", path.display());
    Ok(())
}
