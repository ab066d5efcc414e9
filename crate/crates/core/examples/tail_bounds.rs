//! Exponential tails from moment growth.
//!
//! A Grand Lebesgue norm `sup_p |X|_p / psi(p)` turns into the tail bound
//! `P(|X| > u) <= min(1, 2 exp(-psi_bar*(ln(u / norm))))` through the Young–Fenchel
//! transform of `ln psi`. The example computes the subgaussian norm of a
//! standard Gaussian, then the transform-based `theta` function for
//! Gaussian differences with Gaussian predictable multipliers.
//!
//! `cargo run --release --example tail_bounds`

use martingale_bounds::bounds::theta_function;
use martingale_bounds::gls::{default_p_grid, gls_norm, tail_bound, MomentCurve, PsiFunction};
use martingale_bounds::numeric::gaussian_abs_norm;
use martingale_bounds::simulate::{Generator, MultiplierSpec};

fn main() -> martingale_bounds::Result<()> {
    let curve = MomentCurve::from_fn(&default_p_grid(), gaussian_abs_norm)?;
    let norm = gls_norm(&curve, &PsiFunction::Sub2)?;
    println!("sup_p |g|_p / sqrt(p) = {norm:.6}");
    for u in [1.0, 2.0, 3.0, 4.0, 5.0] {
        let exact = gaussian_two_sided_tail(u);
        let bound = tail_bound(&PsiFunction::Sub2, norm, u)?;
        println!("  u = {u}: P(|g| > u) = {exact:.3e} <= {bound:.3e}");
    }

    let n = 32;
    let grid = [2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0, 64.0];
    let xi = Generator::gaussian_unit().exact_table(&grid, n).expect("exact");
    let b = MultiplierSpec::GaussianPredictable { variances: vec![1.0] }
        .exact_table(&grid, n)
        .expect("exact");
    let theta = theta_function(&b, &xi, n)?;
    println!("theta-based tail of n^-1/2 W(n):");
    for u in [2.0, 5.0, 10.0, 20.0] {
        println!("  u = {u}: <= {:.3e}", tail_bound(&theta, 1.0, u)?);
    }
    Ok(())
}

/// `P(|g| > u) = erfc(u / sqrt 2)` by the continued fraction, accurate to
/// a few digits for `u >= 1`.
fn gaussian_two_sided_tail(u: f64) -> f64 {
    let mut f = 0.0;
    for k in (1..=60).rev() {
        f = f64::from(k) / (u + f);
    }
    2.0 * (-u * u / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt() / (u + f)
}
