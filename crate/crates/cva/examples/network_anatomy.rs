//! Anatomy of the confidence network: shapes, parameters, gradients.
//!
//! The net fuses an N×N×D cost-volume patch with valid 3×3×3
//! convolutions until the spatial extent is 1×1, then runs 1×1×k
//! depth convolutions (zero-padded along disparity), and decides with a
//! two-layer head expressed as 1×1 convolutions — which is what makes
//! whole-image inference a single forward pass. Run with:
//!
//! ```text
//! cargo run --example network_anatomy
//! ```

use cva::net::{gradient_check, NetConfig, Network, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> cva::Result<()> {
    // Canonical configuration: 13×13×256 patches, 32 channels.
    let canonical = NetConfig::canonical();
    println!("canonical config: N = {}, D = {}", canonical.n, canonical.d);
    println!("layer output shapes (height, width, depth, channels):");
    let fusion = (canonical.n - 1) / 2;
    let labels: Vec<String> = (0..fusion)
        .map(|k| format!("fusion{k}"))
        .chain((0..canonical.depth_kernels.len()).map(|j| format!("depth{j}")))
        .chain(["head.fc1".to_string(), "head.fc2".to_string()])
        .collect();
    for (name, shape) in labels.iter().zip(canonical.shape_chain()) {
        println!("  {name:10} -> {shape:?}");
    }
    println!("total parameters: {}", canonical.param_count());

    let net = Network::<f32>::init(canonical, 0)?;
    println!("\nparameter segments:");
    for seg in &net.layout().segments {
        println!(
            "  {:16} {:7} values{}",
            seg.name,
            seg.len,
            if seg.trainable { "" } else { "  (running stat)" }
        );
    }

    // Analytic gradients vs central finite differences on a tiny
    // double-precision instance. Dropout is disabled so every sampled
    // parameter lies on a live path to the loss.
    let mut cfg = NetConfig::tiny();
    cfg.dropout = 0.0;
    let mut net = Network::<f64>::init(cfg.clone(), 17)?;
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let batch: Vec<Tensor4<f64>> = (0..2)
        .map(|_| {
            let vals: Vec<f64> = (0..cfg.n * cfg.n * cfg.d).map(|_| rng.gen::<f64>()).collect();
            Tensor4::from_vec(cfg.n, cfg.n, cfg.d, 1, vals)
        })
        .collect();
    let labels = vec![1.0, 0.0];
    let indices: Vec<usize> = net
        .layout()
        .trainable_indices()
        .into_iter()
        .step_by(7)
        .collect();
    let worst = gradient_check(&mut net, &batch, &labels, 5, Some(&indices), 1e-5)?;
    println!(
        "\ngradient check (tiny config, {} sampled parameters): worst relative error {worst:.2e}",
        indices.len()
    );
    Ok(())
}
