//! Runs the bound-verification matrix and prints its summary.
//!
//! `cargo run --release --example verify_matrix -- quick 7`

use martingale_bounds::verify::{run_verify, VerifyConfig};

fn main() -> martingale_bounds::Result<()> {
    let mut args = std::env::args().skip(1);
    let preset = args.next().unwrap_or_else(|| "quick".into());
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);
    let config = VerifyConfig::preset(&preset, seed)?;
    let report = run_verify(&config, None)?;
    let s = &report.summary;
    println!(
        "{} adjudications: {} hold, {} violated, {} inconclusive",
        s.adjudications, s.holds, s.violated, s.inconclusive
    );
    println!("bounded-multiplier ties: {}/{}", s.tie_checks - s.tie_failures, s.tie_checks);
    let tightest = report
        .martingale
        .iter()
        .chain(report.transform.iter().map(|t| &t.report))
        .max_by(|a, b| (a.empirical / a.bound).total_cmp(&(b.empirical / b.bound)))
        .expect("non-empty matrix");
    println!(
        "tightest: {} p = {} n = {}: empirical {:.5} vs bound {:.5}",
        tightest.generator, tightest.p, tightest.n, tightest.empirical, tightest.bound
    );
    Ok(())
}
