//! Acceptance gate: ten end-to-end checks covering the evaluation
//! protocol, the network architecture, training, aggregation, inference,
//! labeling, and the binary formats. Each test prints one PASS line with
//! its runtime; a failed assertion is the corresponding FAIL.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cva::error::Error;
use cva::eval::{
    auc, auc_opt, optimal_error, overall_error, roc_curve, roc_from_pairs,
    roc_from_pairs_legacy, RocPointKind,
};
use cva::image::{ConfidenceMap, DisparityMap, GroundTruthMap};
use cva::matching::{build_cost_volume_bm, sgm_aggregate_along, wta_disparity};
use cva::net::{gradient_check, NetConfig, Network, Tensor4};
use cva::synth::{gen_stereo_pair, SceneSpec};
use cva::train::{build_training_set, label_correctness, train, TrainConfig};
use cva::volume::{default_bounds, CostVolume, MatcherKind};

fn report(id: u32, what: &str, t: Instant) {
    println!(
        "criterion {id:02} PASS ({:.2}s): {what}",
        t.elapsed().as_secs_f64()
    );
}

#[test]
fn criterion_01_closed_form_optimal_auc_matches_numerical_integration() {
    let t = Instant::now();
    for i in 1..=99u32 {
        let eps = i as f64 / 100.0;
        // The optimal error is 0 below density 1−eps and (p−(1−eps))/p
        // above it; Simpson's rule on the nonzero segment.
        let a = 1.0 - eps;
        let f = |p: f64| (p - a) / p;
        let m = 100_000usize;
        let h = (1.0 - a) / m as f64;
        let mut sum = f(a) + f(1.0);
        for k in 1..m {
            sum += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        let numeric = sum * h / 3.0;
        let closed = auc_opt(eps).unwrap();
        assert!(
            (closed - numeric).abs() < 1e-6,
            "eps {eps}: closed form {closed} vs numerical {numeric}"
        );
    }
    assert!(t.elapsed() < Duration::from_secs(1), "took {:?}", t.elapsed());
    report(1, "closed-form optimal AUC within 1e-6 of Simpson integration for eps 0.01..0.99", t);
}

#[test]
fn criterion_02_roc_curve_dominates_optimal_and_matches_prefix_oracle() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0C2);
    let mut heavy_instances = 0usize;
    for case in 0..1000usize {
        let n = rng.gen_range(1..=500usize);
        let p_correct: f64 = rng.gen();
        let mut pairs: Vec<(f64, bool)> = Vec::with_capacity(n);
        if case % 5 < 2 {
            // Heavy ties: at least 40% of pixels share one confidence.
            heavy_instances += 1;
            let share = rng.gen_range((2 * n).div_ceil(5)..=n);
            let v: f64 = rng.gen();
            for _ in 0..share {
                pairs.push((v, rng.gen_bool(p_correct)));
            }
            for _ in share..n {
                pairs.push((rng.gen::<f64>(), rng.gen_bool(p_correct)));
            }
            let tied = pairs.iter().filter(|p| p.0 == v).count();
            assert!(5 * tied >= 2 * n, "tie share {tied}/{n} below 40%");
        } else {
            // A mix of a few discrete levels and continuous values.
            let levels = rng.gen_range(1..=16u32);
            for _ in 0..n {
                let c = if rng.gen_bool(0.5) {
                    rng.gen_range(0..levels) as f64 / levels as f64
                } else {
                    rng.gen()
                };
                pairs.push((c, rng.gen_bool(p_correct)));
            }
        }

        let curve = roc_from_pairs(&pairs, 0.05).unwrap();
        let eps = curve.epsilon;
        for pt in &curve.points {
            let opt = optimal_error(pt.density, eps);
            assert!(
                pt.error >= opt - 1e-12 && pt.lower >= opt - 1e-12,
                "case {case}: point at p {} has error {} / lower {} below optimal {opt}",
                pt.density,
                pt.error,
                pt.lower
            );
        }

        // Independent prefix oracle: re-sort, walk the maximal tied runs,
        // and require exact f64 equality on every untied (run-end) point.
        let mut sorted = pairs.clone();
        sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let boundaries: Vec<_> = curve
            .points
            .iter()
            .filter(|p| p.kind == RocPointKind::BlockBoundary)
            .collect();
        let mut start = 0usize;
        let mut wrong = 0usize;
        let mut bi = 0usize;
        while start < sorted.len() {
            let mut end = start;
            while end < sorted.len() && sorted[end].0 == sorted[start].0 {
                if !sorted[end].1 {
                    wrong += 1;
                }
                end += 1;
            }
            let density = end as f64 / n as f64;
            let error = wrong as f64 / end as f64;
            let pt = boundaries[bi];
            assert_eq!(pt.density, density, "case {case} boundary {bi}");
            assert_eq!(pt.error, error, "case {case} boundary {bi}");
            assert_eq!((pt.lower, pt.upper), (error, error));
            bi += 1;
            start = end;
        }
        assert_eq!(bi, boundaries.len(), "case {case}: boundary count");
    }
    assert_eq!(heavy_instances, 400);
    assert!(t.elapsed() < Duration::from_secs(30), "took {:?}", t.elapsed());
    report(2, "1000 random instances: every point dominates the optimal curve, untied points match the prefix oracle exactly", t);
}

#[test]
fn criterion_03_legacy_sampling_dips_below_optimal_on_wide_ties() {
    let t = Instant::now();
    // 55 correct pixels with distinct confidences above one tied block of
    // 45 wrong pixels (45% of all pixels share that confidence).
    let mut pairs: Vec<(f64, bool)> = (0..55).map(|i| (1.0 - 0.01 * i as f64, true)).collect();
    pairs.extend(std::iter::repeat_n((0.2, false), 45));
    let eps = 0.45;

    let legacy = roc_from_pairs_legacy(&pairs, 0.05).unwrap();
    assert_eq!(legacy.epsilon, eps);
    let dip = legacy
        .points
        .iter()
        .any(|pt| pt.error < optimal_error(pt.density, eps) - 1e-9);
    assert!(dip, "legacy protocol produced no point strictly below the optimal curve");

    let default = roc_from_pairs(&pairs, 0.05).unwrap();
    for pt in &default.points {
        let opt = optimal_error(pt.density, eps);
        assert!(
            pt.error >= opt - 1e-12,
            "default protocol dipped below optimal at p {}",
            pt.density
        );
    }
    report(3, "wide tied block: legacy curve dips below optimal, default protocol never does", t);
}

#[test]
fn criterion_04_canonical_network_shapes_and_parameter_count() {
    let t = Instant::now();
    let cfg = NetConfig::canonical();
    let mut expected = Vec::new();
    for k in 1..=6usize {
        expected.push((13 - 2 * k, 13 - 2 * k, 256 - 2 * k, 32)); // fusion
    }
    for _ in 0..10 {
        expected.push((1, 1, 244, 32)); // depth blocks keep their size
    }
    expected.push((1, 1, 1, 16)); // head hidden layer
    expected.push((1, 1, 1, 1)); // sigmoid output
    assert_eq!(cfg.shape_chain(), expected);
    assert_eq!(cfg.param_count(), 782_725);
    let net = Network::<f32>::init(cfg, 0).unwrap();
    assert_eq!(net.param_count(), 782_725);
    report(4, "canonical 13x13x256 network: exact shape chain and 782,725 parameters", t);
}

#[test]
fn criterion_05_every_gradient_matches_finite_differences() {
    let t = Instant::now();
    let mut cfg = NetConfig::tiny();
    cfg.dropout = 0.0; // keep every parameter on a live path to the loss
    let mut net = Network::<f64>::init(cfg, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, d) = (net.config().n, net.config().d);
    let batch: Vec<Tensor4<f64>> = (0..2)
        .map(|_| {
            Tensor4::from_vec(n, n, d, 1, (0..n * n * d).map(|_| rng.gen()).collect())
        })
        .collect();
    let labels = [1.0, 0.0];

    // Vacuity guard: the analytic gradient must actually flow.
    let (_, cache) = net.forward_train(&batch, 0).unwrap();
    let (_, grads) = net.backward(&cache, &labels).unwrap();
    let trainable = net.layout().trainable_indices();
    let live = trainable.iter().filter(|&&i| grads[i] != 0.0).count();
    assert!(
        2 * live > trainable.len(),
        "only {live}/{} gradients nonzero",
        trainable.len()
    );

    let worst = gradient_check(&mut net, &batch, &labels, 0, None, 1e-5).unwrap();
    assert!(worst < 1e-3, "max relative gradient error {worst}");
    assert!(t.elapsed() < Duration::from_secs(60), "took {:?}", t.elapsed());
    report(
        5,
        &format!("all {} trainable parameters within 1e-3 of finite differences (worst {worst:.2e})", trainable.len()),
        t,
    );
}

#[test]
fn criterion_06_single_path_aggregation_matches_exhaustive_enumeration() {
    let t = Instant::now();

    /// Walks every disparity sequence (no memoization) accumulating raw
    /// cost plus transition penalties; `m[x][d]` becomes the cheapest
    /// total of any sequence ending at column x with disparity d.
    fn explore(
        raw: &CostVolume,
        p1: f32,
        p2: f32,
        x: usize,
        dx: usize,
        acc: f32,
        m: &mut [Vec<f32>],
    ) {
        if acc < m[x][dx] {
            m[x][dx] = acc;
        }
        if x + 1 == raw.width() {
            return;
        }
        for dn in 0..raw.depth() {
            let pen = if dn == dx {
                0.0
            } else if dn.abs_diff(dx) == 1 {
                p1
            } else {
                p2
            };
            explore(raw, p1, p2, x + 1, dn, acc + raw.get(x + 1, 0, dn) + pen, m);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(66);
    for case in 0..100usize {
        let w = rng.gen_range(1..=8usize);
        let depth = rng.gen_range(2..=5usize);
        let data: Vec<f32> = (0..w * depth).map(|_| rng.gen_range(0..=15) as f32).collect();
        let raw = CostVolume::new(w, 1, depth, data, false).unwrap();
        let p1 = rng.gen_range(1..=2u32) as f32;
        let p2 = rng.gen_range(p1 as u32..=8) as f32;

        let agg = sgm_aggregate_along(&raw, p1, p2, &[(1, 0)]).unwrap();

        let mut m = vec![vec![f32::INFINITY; depth]; w];
        for d0 in 0..depth {
            explore(&raw, p1, p2, 0, d0, raw.get(0, 0, d0), &mut m);
        }
        for x in 0..w {
            let prev_min = if x == 0 {
                0.0
            } else {
                m[x - 1].iter().cloned().fold(f32::INFINITY, f32::min)
            };
            for (dd, &best) in m[x].iter().enumerate() {
                let expected = best - prev_min;
                assert_eq!(
                    agg.get(x, 0, dd),
                    expected,
                    "case {case}: ({x},{dd}) of a {w}x1x{depth} volume"
                );
            }
        }
    }
    assert!(t.elapsed() < Duration::from_secs(10), "took {:?}", t.elapsed());
    report(6, "100 random volumes: single-path aggregation equals exhaustive sequence enumeration exactly", t);
}

#[test]
fn criterion_07_full_inference_matches_patchwise_and_tiled() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let data: Vec<f32> = (0..16 * 16 * 32).map(|_| rng.gen()).collect();
    let vol = CostVolume::new(16, 16, 32, data, true).unwrap();
    let net = Network::<f32>::init(NetConfig::reduced(), 7).unwrap();

    let full = net.infer_full(&vol).unwrap();
    let mut worst = 0.0f32;
    for y in 0..16 {
        for x in 0..16 {
            let patch = vol.extract_patch(x, y, 7).unwrap();
            let pred = net.forward(&[Tensor4::from_patch(&patch)]).unwrap()[0];
            worst = worst.max((pred - full.get(x, y)).abs());
        }
    }
    assert!(worst <= 1e-5, "patchwise disagreement {worst}");

    let mut worst_tile = 0.0f32;
    for tile in [3usize, 5, 16] {
        let tiled = net.infer_tiled(&vol, tile).unwrap();
        for (a, b) in tiled.values().iter().zip(full.values()) {
            worst_tile = worst_tile.max((a - b).abs());
        }
    }
    assert!(worst_tile <= 1e-6, "tiled disagreement {worst_tile}");
    report(
        7,
        &format!("16x16x32 inference: patchwise within 1e-5 (worst {worst:.1e}), tiled within 1e-6 (worst {worst_tile:.1e})"),
        t,
    );
}

/// One synthetic scene of the desk-scale benchmark: census-BM volume,
/// its WTA disparity, and the dense ground truth.
fn benchmark_scene(seed: u64) -> (CostVolume, DisparityMap, GroundTruthMap) {
    let scene = gen_stereo_pair(&SceneSpec {
        width: 72,
        height: 52,
        d_min: 2,
        d_max: 20,
        texture_density: 0.9,
        noise_sigma: 0.02,
        textureless_fraction: 0.25,
        seed,
    })
    .unwrap();
    let raw = build_cost_volume_bm(&scene.left, &scene.right, 31, 5).unwrap();
    let disp = wta_disparity(&raw);
    let vol = raw
        .normalize(&default_bounds(MatcherKind::CensusBm, 5, 0.0, 1).unwrap())
        .unwrap();
    (vol, disp, scene.ground_truth)
}

#[test]
fn criterion_08_trained_confidence_beats_random_and_heuristic_baselines() {
    let t = Instant::now();
    for run_seed in [1u64, 2, 3] {
        let mut volumes = Vec::new();
        let mut disps = Vec::new();
        let mut gts = Vec::new();
        for i in 0..25u64 {
            let (v, d, g) = benchmark_scene(run_seed * 1000 + i);
            volumes.push(v);
            disps.push(d);
            gts.push(g);
        }
        let held_vol = volumes.split_off(20);
        let held_disp = disps.split_off(20);
        let held_gt = gts.split_off(20);

        let net_cfg = NetConfig {
            n: 7,
            d: 32,
            channels: 8,
            head: 16,
            depth_kernels: vec![8, 16, 32],
            ..NetConfig::canonical()
        };
        let samples = build_training_set(&volumes, &disps, &gts, 7).unwrap();
        assert!(
            (45_000..=60_000).contains(&samples.len()),
            "expected ~50k samples, got {}",
            samples.len()
        );
        let train_cfg = TrainConfig {
            batch_size: 256,
            phase1_epochs: 2,
            phase1_lr: 1e-3,
            phase2_epochs: 1,
            phase2_lr: 1e-4,
            seed: run_seed,
            ..TrainConfig::default()
        };
        let net = Network::<f32>::init(net_cfg, run_seed).unwrap();
        let net = train(net, &volumes, &samples, &train_cfg, |_, _| Ok(()))
            .unwrap()
            .net;

        let mut rng = ChaCha8Rng::seed_from_u64(run_seed ^ 0xABCD);
        let (mut auc_learned, mut auc_random, mut auc_heuristic) = (0.0, 0.0, 0.0);
        for ((vol, disp), gt) in held_vol.iter().zip(&held_disp).zip(&held_gt) {
            let (w, h) = (vol.width(), vol.height());
            let learned = net.infer_full(vol).unwrap();
            let random =
                ConfidenceMap::new(w, h, (0..w * h).map(|_| rng.gen()).collect()).unwrap();
            let heuristic = ConfidenceMap::new(
                w,
                h,
                (0..w * h)
                    .map(|i| {
                        let curve = vol.curve(i % w, i / w);
                        1.0 - curve.iter().cloned().fold(f32::INFINITY, f32::min)
                    })
                    .collect(),
            )
            .unwrap();
            auc_learned += auc(&roc_curve(&learned, disp, gt, 0.05).unwrap());
            auc_random += auc(&roc_curve(&random, disp, gt, 0.05).unwrap());
            auc_heuristic += auc(&roc_curve(&heuristic, disp, gt, 0.05).unwrap());
            assert!(overall_error(disp, gt).unwrap() > 0.0);
        }
        assert!(
            auc_learned < 0.7 * auc_random,
            "seed {run_seed}: learned {:.4} not below 0.7 x random {:.4}",
            auc_learned / 5.0,
            auc_random / 5.0
        );
        assert!(
            auc_learned < auc_heuristic,
            "seed {run_seed}: learned {:.4} not below heuristic {:.4}",
            auc_learned / 5.0,
            auc_heuristic / 5.0
        );
    }
    assert!(t.elapsed() < Duration::from_secs(1200), "took {:?}", t.elapsed());
    report(8, "3 seeds: held-out AUC of the trained net beats 0.7x random and the min-cost heuristic", t);
}

#[test]
fn criterion_09_correctness_label_grid() {
    let t = Instant::now();
    for d_gt in 0..=255u32 {
        let gt = d_gt as f64;
        for half_steps in 0..=40u32 {
            let err = half_steps as f64 * 0.5;
            let expected = err < 3.0 || err < 0.05 * gt;
            assert_eq!(
                label_correctness(gt + err, gt),
                expected,
                "d_gt {gt}, error +{err}"
            );
            assert_eq!(
                label_correctness(gt - err, gt),
                expected,
                "d_gt {gt}, error -{err}"
            );
        }
    }
    report(9, "labels exact on the full grid d_gt 0..=255 x error 0..=20 in half steps, both signs", t);
}

#[test]
fn criterion_10_binary_formats_round_trip_and_survive_fuzz() {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1010);

    // Volume round trip, normalized and raw, bit-exact on rewrite.
    let vol_path = dir.path().join("v.cvav");
    let reread_path = dir.path().join("v2.cvav");
    for normalized in [true, false] {
        let scale = if normalized { 1.0 } else { 997.0 };
        let data: Vec<f32> = (0..9 * 7 * 5).map(|_| rng.gen::<f32>() * scale).collect();
        let vol = CostVolume::new(9, 7, 5, data, normalized).unwrap();
        vol.write_file(&vol_path).unwrap();
        let back = CostVolume::read_file(&vol_path).unwrap();
        assert_eq!(back.is_normalized(), normalized);
        assert_eq!(
            (back.width(), back.height(), back.depth()),
            (vol.width(), vol.height(), vol.depth())
        );
        for y in 0..7 {
            for x in 0..9 {
                assert_eq!(back.curve(x, y), vol.curve(x, y));
            }
        }
        back.write_file(&reread_path).unwrap();
        assert_eq!(
            std::fs::read(&vol_path).unwrap(),
            std::fs::read(&reread_path).unwrap()
        );
    }

    // Checkpoint round trip, bit-exact on rewrite.
    let net = Network::<f32>::init(NetConfig::tiny(), 99).unwrap();
    let net_path = dir.path().join("n.cvam");
    let net_reread = dir.path().join("n2.cvam");
    net.save(&net_path).unwrap();
    let back = Network::<f32>::load(&net_path).unwrap();
    assert_eq!(back.params(), net.params());
    assert_eq!(back.config(), net.config());
    back.save(&net_reread).unwrap();
    assert_eq!(
        std::fs::read(&net_path).unwrap(),
        std::fs::read(&net_reread).unwrap()
    );

    // Malformed headers are format errors, never panics.
    let vol_bytes = std::fs::read(&vol_path).unwrap();
    let net_bytes = std::fs::read(&net_path).unwrap();
    let target = dir.path().join("mutant.bin");
    let expect_volume_format = |mutate: &dyn Fn(&mut Vec<u8>)| {
        let mut b = vol_bytes.clone();
        mutate(&mut b);
        std::fs::write(&target, &b).unwrap();
        let err = CostVolume::read_file(&target).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "wrong error: {err}");
    };
    expect_volume_format(&|b| b[0] ^= 0xFF); // magic
    expect_volume_format(&|b| b[4] = 0xEE); // version
    expect_volume_format(&|b| b[6] |= 0xFE); // unknown flag bits
    expect_volume_format(&|b| b[8..12].fill(0)); // width 0
    expect_volume_format(&|b| {
        b[16..20].copy_from_slice(&1u32.to_le_bytes()); // depth 1
    });
    expect_volume_format(&|b| b.truncate(10)); // inside the header
    expect_volume_format(&|b| {
        let l = b.len() - 3;
        b.truncate(l); // payload shorter than declared
    });
    expect_volume_format(&|b| b.extend_from_slice(&[0; 4])); // payload longer

    let expect_net_format = |mutate: &dyn Fn(&mut Vec<u8>)| {
        let mut b = net_bytes.clone();
        mutate(&mut b);
        std::fs::write(&target, &b).unwrap();
        let err = Network::<f32>::load(&target).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "wrong error: {err}");
    };
    expect_net_format(&|b| b[0] ^= 0xFF); // magic
    expect_net_format(&|b| b[4] = 9); // version
    expect_net_format(&|b| b[6] = 1); // reserved bytes
    expect_net_format(&|b| b[8..12].copy_from_slice(&4u32.to_le_bytes())); // even n
    // Huge dimensions must be rejected before any layout work.
    expect_net_format(&|b| {
        b[12..16].copy_from_slice(&0xFFFF_FFFFu32.to_le_bytes()); // d
        b[20..24].copy_from_slice(&0xFFFF_FFFFu32.to_le_bytes()); // head
    });
    expect_net_format(&|b| b[68] ^= 1); // stored parameter count
    expect_net_format(&|b| {
        let l = b.len() - 5;
        b.truncate(l); // parameters cut short
    });
    expect_net_format(&|b| {
        let nan = f32::NAN.to_le_bytes();
        b[76..80].copy_from_slice(&nan); // non-finite parameter
    });

    // 1000 random mutations: reads must return, never crash.
    let mut outcomes = [0usize; 2]; // [rejected, accepted]
    for i in 0..1000 {
        let base = if i % 2 == 0 { &vol_bytes } else { &net_bytes };
        let mut bytes = base.clone();
        match rng.gen_range(0..4u32) {
            0 => {
                for _ in 0..rng.gen_range(1..=4) {
                    let at = rng.gen_range(0..bytes.len());
                    bytes[at] ^= 1 << rng.gen_range(0..8);
                }
            }
            1 => {
                let keep = rng.gen_range(0..bytes.len());
                bytes.truncate(keep);
            }
            2 => {
                let extra = rng.gen_range(1..=64);
                bytes.extend((0..extra).map(|_| rng.gen::<u8>()));
            }
            _ => {
                let from = rng.gen_range(0..bytes.len());
                let to = rng.gen_range(from..bytes.len());
                bytes[from..=to].fill(0);
            }
        }
        std::fs::write(&target, &bytes).unwrap();
        let ok = if i % 2 == 0 {
            CostVolume::read_file(&target).is_ok()
        } else {
            Network::<f32>::load(&target).is_ok()
        };
        outcomes[usize::from(ok)] += 1;
    }
    assert!(outcomes[0] > 0, "fuzzing never produced a rejected file");
    report(
        10,
        &format!(
            "bit-exact round trips; 1000 mutations read without crashing ({} rejected, {} still readable)",
            outcomes[0], outcomes[1]
        ),
        t,
    );
}
