//! Generating martingale differences and predictable multipliers.
//!
//! Draws paths from each difference family, attaches a sign-of-past
//! multiplier, and prints the empirical norms and tails of the normalised
//! sums. The streaming summary at the end records several horizons in one
//! pass without keeping the paths.
//!
//! `cargo run --release --example simulate_paths`

use martingale_bounds::simulate::{
    attach_multipliers, empirical_norms, empirical_tail, generate, summarize, Generator, MultiplierSpec,
    SimulationSpec, StreamSpec, Target,
};

fn main() -> martingale_bounds::Result<()> {
    let families = [
        Generator::Rademacher,
        Generator::Gaussian { variances: vec![1.0, 2.0] },
        Generator::TwoPointAsymmetric { up: 3.0, down: 1.0 },
        Generator::PredictableVariance { feedback: 0.5, cap: 4.0 },
        Generator::DyadicEmbedded { bits_per_step: 3 },
    ];
    for generator in families {
        let batch = generate(&SimulationSpec { generator: generator.clone(), n: 16, reps: 20_000, seed: 1 })?;
        let batch = attach_multipliers(&batch, &MultiplierSpec::SignOfPast)?;
        let norms = empirical_norms(&batch, &[2.0, 4.0])?;
        let tail = empirical_tail(&batch, &[2.0], Target::W)?;
        let w = norms.w.expect("multipliers attached");
        println!(
            "{:<22} |S|_2 {:.4} |S|_4 {:.4} |W|_4 {:.4} P(|W| > 2) {:.4}",
            generator.name(),
            norms.s[0].value,
            norms.s[1].value,
            w[1].value,
            tail.points[0].estimate
        );
    }

    let summary = summarize(&StreamSpec {
        generator: Generator::Rademacher,
        checkpoints: vec![16, 256, 4096],
        reps: 20_000,
        seed: 9,
        multipliers: vec![],
        p_values: vec![4.0],
        tail_u: vec![3.0],
        table_grid: None,
    })?;
    for c in &summary.s {
        println!("n = {:>5}: |n^-1/2 S(n)|_4 = {:.4}, P(> 3) = {:.5}", c.n, c.norms[0].value, c.tails[0].estimate);
    }
    Ok(())
}
