//! Covering entropy and the integral continuity criteria.
//!
//! Points on a helix give a finite metric space. The example computes the
//! upper and lower covering-entropy curves, fits a model to the small-scale
//! end, and evaluates the Dudley, Pisier and GLS integrals on it. The last
//! lines classify `epsilon^-gamma` models analytically and check the Hölder
//! condition `alpha r > d` for a few parameter sets.
//!
//! `cargo run --release --example entropy_criteria`

use martingale_bounds::entropy::{
    covering_entropy, fit_entropy_model, holder_condition, integral_dudley, integral_gls, integral_pisier,
    DistanceMatrix, EntropyModel, EntropySource,
};
use martingale_bounds::gls::PsiFunction;

fn main() -> martingale_bounds::Result<()> {
    let points: Vec<Vec<f64>> = (0..400)
        .map(|k| {
            let t = f64::from(k) / 400.0 * 6.0;
            vec![t.cos(), t.sin(), 0.2 * t]
        })
        .collect();
    let d = DistanceMatrix::euclidean(&points)?;
    let eps: Vec<f64> = (0..12).map(|k| d.diameter() * 0.6f64.powi(k)).collect();
    let profile = covering_entropy(&d, &eps)?;
    for ((e, hi), lo) in profile.epsilon.iter().zip(&profile.h_upper).zip(&profile.h_lower) {
        println!("epsilon {e:.4}: {lo:.3} <= H <= {hi:.3}");
    }
    if let Some(fit) = fit_entropy_model(&profile) {
        println!("fitted {} (residual {:.3})", fit.model.describe(), fit.residual);
    }
    for v in [
        integral_dudley(EntropySource::Profile(&profile))?,
        integral_pisier(EntropySource::Profile(&profile), 2.0)?,
        integral_gls(&PsiFunction::Sub2, EntropySource::Profile(&profile))?,
    ] {
        println!("{:<7} {:?} value {:?}", v.criterion, v.verdict, v.value);
    }

    for gamma in [0.5, 1.5, 2.5] {
        let v = integral_dudley(EntropySource::Model(EntropyModel::Power { c: 1.0, gamma }))?;
        println!("Dudley on H = epsilon^-{gamma}: {:?}", v.verdict);
    }
    for (dim, alpha, r) in [(1, 0.5, 4.0), (2, 0.5, 4.0), (3, 1.0, 2.0)] {
        println!("alpha r > d for d = {dim}, alpha = {alpha}, r = {r}: {}", holder_condition(dim, alpha, r)?);
    }
    Ok(())
}
