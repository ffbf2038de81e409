//! The cost-curve archetypes behind confidence estimation.
//!
//! Whether a winner-take-all disparity can be trusted shows in the shape
//! of its cost curve: a single deep minimum is trustworthy, a flat curve
//! or two rival minima are not. These fixtures generate each shape
//! deterministically; the confidence network learns to tell them apart.
//! Run with:
//!
//! ```text
//! cargo run --example cost_curves
//! ```

use cva::synth::{gen_cost_curve, CurveArchetype, CurveParams};

fn sketch(curve: &[f32]) -> String {
    // Five-level vertical resolution, one column per disparity.
    curve
        .iter()
        .map(|c| match (c * 4.0).round() as usize {
            0 => '_',
            1 => '.',
            2 => '-',
            3 => '=',
            _ => '#',
        })
        .collect()
}

fn main() -> cva::Result<()> {
    let d = 32;
    let params = CurveParams {
        min_pos: Some(12),
        ..CurveParams::default()
    };

    for archetype in [
        CurveArchetype::Ideal,
        CurveArchetype::DistinctMin,
        CurveArchetype::DoubleMin,
        CurveArchetype::FlatMin,
    ] {
        let curve = gen_cost_curve(archetype, d, &params, 5)?;
        let min = curve.iter().cloned().fold(f32::INFINITY, f32::min);
        let argmins: Vec<usize> = curve
            .iter()
            .enumerate()
            .filter(|(_, c)| **c <= min + 0.05)
            .map(|(i, _)| i)
            .collect();
        println!("{archetype:?}");
        println!("  {}", sketch(&curve));
        println!("  min {min:.2} near d ∈ {argmins:?}");
        println!(
            "  winner-take-all would pick d = {} ({} candidate minima within 0.05)",
            argmins[0],
            argmins.len()
        );
        println!();
    }

    println!("legend: _ ≈ 0 cost, # ≈ 1 cost, one column per disparity level");
    println!("Ideal/DistinctMin → confident match; DoubleMin/FlatMin → ambiguous");
    Ok(())
}
