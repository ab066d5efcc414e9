//! Choosing the Hölder quadruple for a martingale transform.
//!
//! The transform `W(n) = sum b(i) xi(i)` admits one bound per quadruple
//! `(alpha, beta, lambda, mu)`. This example compares the bounded-multiplier
//! choice `(inf, 1, inf, 1)` with the optimised one for a few multiplier
//! families.
//!
//! `cargo run --release --example optimize_quadruple`

use martingale_bounds::bounds::{bound_transform, optimize_quadruple, HolderQuadruple};
use martingale_bounds::simulate::{Generator, MultiplierSpec};

fn main() -> martingale_bounds::Result<()> {
    let n = 256;
    let p = 4.0;
    let grid = [2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0, 64.0];
    let xi = Generator::TwoPointAsymmetric { up: 3.0, down: 1.0 }
        .exact_table(&grid, n)
        .expect("two-point tables are exact");
    let families = [
        MultiplierSpec::Constant { value: 2.0 },
        MultiplierSpec::SignOfPast,
        MultiplierSpec::GaussianPredictable { variances: vec![1.0] },
        MultiplierSpec::DeterministicSequence { values: vec![0.1, 0.1, 0.1, 5.0] },
    ];
    for spec in &families {
        let b = spec.exact_table(&grid, n).expect("exact multiplier table");
        let bounded = bound_transform(&b, &xi, p, n, &HolderQuadruple::bounded_multipliers());
        let best = optimize_quadruple(&b, &xi, p, n)?;
        let q = best.quadruple;
        println!(
            "{:<24} bounded {:>10} optimised {:>9.4} at (alpha, beta, lambda, mu) = ({}, {}, {}, {})",
            spec.name(),
            bounded.map(|v| format!("{v:.4}")).unwrap_or_else(|_| "n/a".into()),
            best.value,
            q.alpha,
            q.beta,
            q.lambda,
            q.mu
        );
    }
    Ok(())
}
