//! Training: ground-truth labeling, training-set construction, binary
//! cross-entropy, bias-corrected Adam, and the two-phase training loop.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{DisparityMap, GroundTruthMap};
use crate::net::{Network, Scalar, Tensor4};
use crate::volume::CostVolume;

/// Whether a disparity estimate counts as correct: the absolute error must
/// stay below 3 px or below 5 % of the ground-truth disparity. Both
/// comparisons are strict.
pub fn label_correctness(d_est: f64, d_gt: f64) -> bool {
    let err = (d_est - d_gt).abs();
    err < 3.0 || err < 0.05 * d_gt
}

/// Binary cross-entropy with the argument of each logarithm floored at
/// 1e-12 to keep saturated sigmoids finite.
pub fn bce_loss(pred: f64, label: f64) -> f64 {
    const FLOOR: f64 = 1e-12;
    -(label * pred.max(FLOOR).ln() + (1.0 - label) * (1.0 - pred).max(FLOOR).ln())
}

/// One training sample: a pixel whose patch is extracted lazily from its
/// source volume when the batch is assembled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSample {
    pub image_id: usize,
    pub x: usize,
    pub y: usize,
    /// 1 when the disparity estimate at the pixel is correct, else 0.
    pub label: f32,
}

/// Builds the training set: one sample per valid-ground-truth pixel lying
/// at least ⌊n/2⌋ from every image border, labeled by comparing the
/// estimated disparity against the ground truth. Deterministic order:
/// image id, then row-major.
pub fn build_training_set(
    volumes: &[CostVolume],
    disparities: &[DisparityMap],
    gts: &[GroundTruthMap],
    n: usize,
) -> Result<Vec<TrainSample>> {
    if volumes.len() != disparities.len() || volumes.len() != gts.len() {
        return Err(Error::InvalidArgument(format!(
            "got {} volumes, {} disparity maps, {} ground-truth maps",
            volumes.len(),
            disparities.len(),
            gts.len()
        )));
    }
    if n < 3 || n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "patch side must be odd and ≥ 3, got {n}"
        )));
    }
    if let Some(first) = volumes.first() {
        if volumes.iter().any(|v| v.depth() != first.depth()) {
            return Err(Error::InvalidArgument(
                "all volumes must share one disparity depth".into(),
            ));
        }
    }
    let margin = n / 2;
    let mut samples = Vec::new();
    for (id, ((vol, disp), gt)) in volumes.iter().zip(disparities).zip(gts).enumerate() {
        if !vol.is_normalized() {
            return Err(Error::InvalidState(format!(
                "volume {id} must be normalized before sampling"
            )));
        }
        let (w, h) = (vol.width(), vol.height());
        if disp.width() != w || disp.height() != h || gt.width() != w || gt.height() != h {
            return Err(Error::InvalidArgument(format!(
                "image {id}: volume {w}x{h} does not match its maps"
            )));
        }
        if h <= 2 * margin || w <= 2 * margin {
            continue; // no interior pixels
        }
        for y in margin..h - margin {
            for x in margin..w - margin {
                if !gt.is_valid(x, y) {
                    continue;
                }
                let correct = disp.is_valid(x, y)
                    && label_correctness(disp.get(x, y) as f64, gt.get(x, y) as f64);
                samples.push(TrainSample {
                    image_id: id,
                    x,
                    y,
                    label: if correct { 1.0 } else { 0.0 },
                });
            }
        }
    }
    Ok(samples)
}

/// Optimization hyper-parameters: two learning-rate phases, Adam moments,
/// and the shuffling seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub phase1_epochs: usize,
    pub phase1_lr: f64,
    pub phase2_epochs: usize,
    pub phase2_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 256,
            phase1_epochs: 10,
            phase1_lr: 1e-4,
            phase2_epochs: 3,
            phase2_lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be ≥ 1".into()));
        }
        for (name, rate) in [("phase-1", self.phase1_lr), ("phase-2", self.phase2_lr)] {
            if rate.is_nan() || rate <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "{name} learning rate must be positive, got {rate}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidArgument(
                "Adam betas must lie in [0, 1)".into(),
            ));
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return Err(Error::InvalidArgument("Adam epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Adam first/second moments, kept in double precision.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update over the listed parameter indices.
#[allow(clippy::too_many_arguments)] // mirrors the optimizer's standard signature
pub fn adam_step<S: Scalar>(
    params: &mut [S],
    grads: &[S],
    state: &mut AdamState,
    indices: &[usize],
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    debug_assert_eq!(params.len(), grads.len());
    debug_assert_eq!(params.len(), state.m.len());
    state.step += 1;
    let t = state.step as i32;
    let corr1 = 1.0 - beta1.powi(t);
    let corr2 = 1.0 - beta2.powi(t);
    for &i in indices {
        let g = grads[i].to_double();
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        let mhat = state.m[i] / corr1;
        let vhat = state.v[i] / corr2;
        let p = params[i].to_double() - lr * mhat / (vhat.sqrt() + eps);
        params[i] = S::from_double(p);
    }
}

/// Seeded epoch ordering: a uniform permutation of `0..len`.
pub fn shuffled_order(rng: &mut ChaCha8Rng, len: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    order
}

/// One row of the training log, written per optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

/// Result of a training run.
pub struct TrainOutcome<S: Scalar> {
    pub net: Network<S>,
    pub log: Vec<TrainLogRow>,
}

/// Materializes the patches of one batch in sample order.
fn assemble_batch<S: Scalar>(
    volumes: &[CostVolume],
    samples: &[TrainSample],
    order: &[usize],
    n: usize,
) -> Result<(Vec<Tensor4<S>>, Vec<S>)> {
    let mut batch = Vec::with_capacity(order.len());
    let mut labels = Vec::with_capacity(order.len());
    for &i in order {
        let s = &samples[i];
        let vol = volumes.get(s.image_id).ok_or_else(|| {
            Error::InvalidArgument(format!("sample references missing image {}", s.image_id))
        })?;
        let patch = vol.extract_patch(s.x, s.y, n)?;
        batch.push(Tensor4::from_patch(&patch));
        labels.push(S::from_single(s.label));
    }
    Ok((batch, labels))
}

/// Runs the two-phase schedule on an initialized network: shuffles the
/// samples each epoch with the seeded generator, assembles batches
/// lazily from the volumes, and applies one Adam step per batch.
/// `on_epoch` runs after every epoch (1-based index across both phases),
/// e.g. to write checkpoints. Deterministic per seed.
pub fn train<S: Scalar>(
    mut net: Network<S>,
    volumes: &[CostVolume],
    samples: &[TrainSample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &Network<S>) -> Result<()>,
) -> Result<TrainOutcome<S>> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no training samples".into()));
    }
    let n = net.config().n;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng =
        ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let trainable = net.layout().trainable_indices();
    let mut state = AdamState::new(net.param_count());
    let mut log = Vec::new();

    let mut epoch = 0usize;
    let mut step = 0usize;
    for (epochs, lr) in [
        (cfg.phase1_epochs, cfg.phase1_lr),
        (cfg.phase2_epochs, cfg.phase2_lr),
    ] {
        for _ in 0..epochs {
            epoch += 1;
            let order = shuffled_order(&mut shuffle_rng, samples.len());
            for chunk in order.chunks(cfg.batch_size) {
                let (batch, labels) = assemble_batch::<S>(volumes, samples, chunk, n)?;
                let (_, cache) = net.forward_train(&batch, dropout_rng.gen())?;
                let (loss, grads) = net.backward(&cache, &labels)?;
                net.update_running_stats(&cache);
                adam_step(
                    net.params_mut(),
                    &grads,
                    &mut state,
                    &trainable,
                    lr,
                    cfg.beta1,
                    cfg.beta2,
                    cfg.adam_eps,
                );
                step += 1;
                log.push(TrainLogRow {
                    epoch,
                    step,
                    loss,
                    lr,
                });
            }
            on_epoch(epoch, &net)?;
        }
    }
    Ok(TrainOutcome { net, log })
}

/// Writes the step log as CSV `epoch,step,loss,lr`.
pub fn write_loss_log_csv(log: &[TrainLogRow], path: impl AsRef<std::path::Path>) -> Result<()> {
    let mut out = String::from("epoch,step,loss,lr\n");
    for r in log {
        out.push_str(&format!("{},{},{},{}\n", r.epoch, r.step, r.loss, r.lr));
    }
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetConfig;

    #[test]
    fn correctness_thresholds_are_strict() {
        assert!(label_correctness(10.0, 10.0));
        assert!(label_correctness(12.9, 10.0)); // |Δ| = 2.9 < 3
        assert!(!label_correctness(13.0, 10.0)); // |Δ| = 3 fails both
        assert!(label_correctness(104.9, 100.0)); // 4.9 < 5 = 0.05·100
        assert!(!label_correctness(105.0, 100.0)); // 5 = 5 is not <
        assert!(label_correctness(209.9, 200.0)); // relative branch only
        assert!(!label_correctness(0.0, 10.0));
    }

    #[test]
    fn correctness_is_symmetric_in_error_sign() {
        for gt in [0.0, 5.0, 10.0, 100.0, 200.0] {
            for e in [0.0, 1.0, 2.9, 3.0, 4.0, 7.5, 12.0] {
                if gt - e >= 0.0 {
                    assert_eq!(
                        label_correctness(gt + e, gt),
                        label_correctness(gt - e, gt),
                        "gt={gt} e={e}"
                    );
                }
            }
        }
    }

    #[test]
    fn bce_matches_hand_values_and_stays_finite() {
        assert!((bce_loss(0.5, 1.0) - 0.5f64.ln().abs()).abs() < 1e-12);
        assert!((bce_loss(0.9, 1.0) + 0.9f64.ln()).abs() < 1e-12);
        assert!((bce_loss(0.9, 0.0) + 0.1f64.ln()).abs() < 1e-9);
        // Saturated predictions are clamped, not infinite.
        assert!(bce_loss(0.0, 1.0).is_finite());
        assert!(bce_loss(1.0, 0.0).is_finite());
        assert!((bce_loss(0.0, 1.0) - (-(1e-12f64.ln()))).abs() < 1e-6);
    }

    fn uniform_volume(w: usize, h: usize, d: usize) -> CostVolume {
        CostVolume::new(w, h, d, vec![0.5; w * h * d], true).unwrap()
    }

    #[test]
    fn training_set_counts_interior_pixels() {
        let vol = uniform_volume(20, 20, 16);
        let disp = DisparityMap::new(20, 20, vec![5.0; 400], vec![true; 400]).unwrap();
        let gt = DisparityMap::new(20, 20, vec![5.0; 400], vec![true; 400]).unwrap();
        let samples = build_training_set(&[vol], &[disp], &[gt], 13).unwrap();
        assert_eq!(samples.len(), 64); // (20 − 12)²
        assert_eq!((samples[0].x, samples[0].y), (6, 6));
        let last = samples.last().unwrap();
        assert_eq!((last.x, last.y), (13, 13));
        assert!(samples.iter().all(|s| s.label == 1.0));
    }

    #[test]
    fn training_set_is_empty_without_ground_truth() {
        let vol = uniform_volume(20, 20, 16);
        let disp = DisparityMap::new(20, 20, vec![5.0; 400], vec![true; 400]).unwrap();
        let gt = DisparityMap::empty(20, 20).unwrap();
        let samples = build_training_set(&[vol], &[disp], &[gt], 13).unwrap();
        assert!(samples.is_empty());
    }

    #[test]
    fn training_set_labels_match_a_scan_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let (w, h) = (17, 11);
        let vol = uniform_volume(w, h, 8);
        let est: Vec<f32> = (0..w * h).map(|_| rng.gen_range(0.0..32.0)).collect();
        let truth: Vec<f32> = (0..w * h).map(|_| rng.gen_range(0.0..32.0)).collect();
        let valid: Vec<bool> = (0..w * h).map(|_| rng.gen_bool(0.7)).collect();
        let disp = DisparityMap::new(w, h, est.clone(), vec![true; w * h]).unwrap();
        let gt = DisparityMap::new(w, h, truth.clone(), valid.clone()).unwrap();
        let n = 5;
        let samples = build_training_set(&[vol], &[disp], &[gt], n).unwrap();

        let mut expected = Vec::new();
        for y in 2..h - 2 {
            for x in 2..w - 2 {
                let i = y * w + x;
                if valid[i] {
                    let ok = label_correctness(est[i] as f64, truth[i] as f64);
                    expected.push((x, y, if ok { 1.0f32 } else { 0.0 }));
                }
            }
        }
        assert_eq!(samples.len(), expected.len());
        for (s, (x, y, label)) in samples.iter().zip(expected) {
            assert_eq!((s.x, s.y, s.label), (x, y, label));
        }
    }

    #[test]
    fn training_set_orders_images_then_rows() {
        let vols = vec![uniform_volume(7, 7, 8), uniform_volume(7, 7, 8)];
        let disp = DisparityMap::new(7, 7, vec![1.0; 49], vec![true; 49]).unwrap();
        let gt = disp.clone();
        let samples =
            build_training_set(&vols, &[disp.clone(), disp], &[gt.clone(), gt], 5).unwrap();
        assert_eq!(samples.len(), 2 * 9);
        assert!(samples[..9].iter().all(|s| s.image_id == 0));
        assert!(samples[9..].iter().all(|s| s.image_id == 1));
    }

    #[test]
    fn training_set_rejects_misaligned_maps() {
        let vol = uniform_volume(8, 8, 8);
        let disp = DisparityMap::new(7, 8, vec![1.0; 56], vec![true; 56]).unwrap();
        let gt = DisparityMap::new(8, 8, vec![1.0; 64], vec![true; 64]).unwrap();
        assert!(matches!(
            build_training_set(&[vol], &[disp], &[gt], 5),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn adam_first_step_moves_by_the_learning_rate() {
        let mut params = vec![1.0f64];
        let mut state = AdamState::new(1);
        adam_step(&mut params, &[0.5], &mut state, &[0], 0.1, 0.9, 0.999, 1e-8);
        // Bias correction makes the first update lr·sign(g) for g ≫ ε.
        assert!((params[0] - 0.9).abs() < 1e-6, "params {params:?}");
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_zero_gradient_is_identity_and_decays_moments() {
        let mut params = vec![0.7f64, -0.2];
        let mut state = AdamState::new(2);
        adam_step(&mut params, &[0.5, -0.25], &mut state, &[0, 1], 0.01, 0.9, 0.999, 1e-8);
        let after_first = params.clone();
        let m_before = state.m.clone();
        adam_step(&mut params, &[0.0, 0.0], &mut state, &[0, 1], 0.0, 0.9, 0.999, 1e-8);
        assert_eq!(params, after_first); // lr = 0 is the identity
        assert!((state.m[0] - 0.9 * m_before[0]).abs() < 1e-15);
        assert!((state.m[1] - 0.9 * m_before[1]).abs() < 1e-15);
    }

    #[test]
    fn adam_matches_a_hand_simulated_quadratic_descent() {
        // Minimize θ² from θ = 1 for ten steps and compare against the
        // textbook update formulas written out directly.
        let (lr, b1, b2, eps) = (0.1, 0.9, 0.999, 1e-8);
        let mut params = vec![1.0f64];
        let mut state = AdamState::new(1);

        let (mut theta, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=10 {
            let g = 2.0 * theta;
            let grads = [2.0 * params[0]];
            adam_step(&mut params, &grads, &mut state, &[0], lr, b1, b2, eps);

            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mhat = m / (1.0 - b1.powi(t));
            let vhat = v / (1.0 - b2.powi(t));
            theta -= lr * mhat / (vhat.sqrt() + eps);
            assert!((params[0] - theta).abs() < 1e-12, "step {t}");
        }
        assert!(theta < 1.0);
    }

    #[test]
    fn epoch_shuffle_is_a_permutation() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let order = shuffled_order(&mut rng, 257);
            let mut seen = vec![false; 257];
            for &i in &order {
                assert!(!seen[i], "duplicate index {i}");
                seen[i] = true;
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    /// A linearly separable toy task: half the pixels carry a sharp,
    /// deep cost minimum (label 1), the other half a flat curve
    /// (label 0).
    fn separable_task() -> (Vec<CostVolume>, Vec<TrainSample>) {
        let (w, h, d) = (27, 22, 8);
        let mut data = vec![0.0f32; w * h * d];
        for y in 0..h {
            for x in 0..w {
                for dd in 0..d {
                    let i = (y * w + x) * d + dd;
                    data[i] = if x < w / 2 {
                        if dd == 3 {
                            0.05
                        } else {
                            0.9
                        }
                    } else {
                        0.5
                    };
                }
            }
        }
        let vol = CostVolume::new(w, h, d, data, true).unwrap();
        let mut samples = Vec::new();
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let label = if x < w / 2 { 1.0 } else { 0.0 };
                samples.push(TrainSample {
                    image_id: 0,
                    x,
                    y,
                    label,
                });
            }
        }
        (vec![vol], samples.into_iter().take(500).collect())
    }

    fn epoch_mean_losses(log: &[TrainLogRow]) -> Vec<f64> {
        let last = log.last().unwrap().epoch;
        (1..=last)
            .map(|e| {
                let rows: Vec<&TrainLogRow> = log.iter().filter(|r| r.epoch == e).collect();
                rows.iter().map(|r| r.loss).sum::<f64>() / rows.len() as f64
            })
            .collect()
    }

    #[test]
    fn separable_task_drops_the_loss_tenfold() {
        let (volumes, samples) = separable_task();
        assert_eq!(samples.len(), 500);
        // Wide enough that dropout rarely silences the whole head.
        let mut cfg_net = NetConfig::tiny();
        cfg_net.channels = 8;
        cfg_net.head = 16;
        let net = Network::<f32>::init(cfg_net, 3).unwrap();
        let cfg = TrainConfig {
            batch_size: 50,
            phase1_epochs: 60,
            phase1_lr: 1e-2,
            phase2_epochs: 10,
            phase2_lr: 1e-3,
            seed: 7,
            ..TrainConfig::default()
        };
        let out = train(net, &volumes, &samples, &cfg, |_, _| Ok(())).unwrap();
        let means = epoch_mean_losses(&out.log);
        let (first, last) = (means[0], *means.last().unwrap());
        assert!(
            last < 0.1 * first,
            "first-epoch mean {first}, final-epoch mean {last}"
        );
    }

    #[test]
    fn full_batch_loss_rarely_increases() {
        let (volumes, samples) = separable_task();
        let mut cfg_net = NetConfig::tiny();
        cfg_net.dropout = 0.0; // isolate the optimization trend
        let net = Network::<f32>::init(cfg_net, 4).unwrap();
        let cfg = TrainConfig {
            batch_size: samples.len(),
            phase1_epochs: 50,
            phase1_lr: 1e-3,
            phase2_epochs: 0,
            seed: 8,
            ..TrainConfig::default()
        };
        let out = train(net, &volumes, &samples, &cfg, |_, _| Ok(())).unwrap();
        let losses: Vec<f64> = out.log.iter().map(|r| r.loss).collect();
        let increases = losses
            .windows(2)
            .filter(|w| w[1] > w[0] + 1e-12)
            .count();
        assert!(
            increases * 10 < losses.len(),
            "{increases} increases over {} steps",
            losses.len() - 1
        );
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let (volumes, samples) = separable_task();
        let cfg = TrainConfig {
            batch_size: 100,
            phase1_epochs: 2,
            phase2_epochs: 1,
            seed: 11,
            ..TrainConfig::default()
        };
        let run = || {
            let net = Network::<f32>::init(NetConfig::tiny(), 5).unwrap();
            train(net, &volumes, &samples, &cfg, |_, _| Ok(())).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.net.params(), b.net.params());
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn zero_epochs_returns_the_initialization() {
        let (volumes, samples) = separable_task();
        let net = Network::<f32>::init(NetConfig::tiny(), 6).unwrap();
        let before = net.params().to_vec();
        let cfg = TrainConfig {
            phase1_epochs: 0,
            phase2_epochs: 0,
            ..TrainConfig::default()
        };
        let out = train(net, &volumes, &samples, &cfg, |_, _| Ok(())).unwrap();
        assert_eq!(out.net.params(), &before[..]);
        assert!(out.log.is_empty());
    }

    #[test]
    fn epoch_callback_sees_every_epoch() {
        let (volumes, samples) = separable_task();
        let net = Network::<f32>::init(NetConfig::tiny(), 6).unwrap();
        let cfg = TrainConfig {
            batch_size: 250,
            phase1_epochs: 2,
            phase2_epochs: 1,
            ..TrainConfig::default()
        };
        let mut seen = Vec::new();
        train(net, &volumes, &samples, &cfg, |e, _| {
            seen.push(e);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![1, 2, 3]);
    }
}
