//! How close the martingale constant `p - 1` is to optimal.
//!
//! The dyadic conditional-expectation martingale of `f(x) = |ln x| - 1`
//! has `|f|_p` of order `p` while its differences stay bounded, so the
//! ratio of the two sides of the moment inequality stays away from zero.
//! The example prints certified lower bounds of that ratio and the limit
//! constant `C`.
//!
//! `cargo run --release --example sharpness`

use martingale_bounds::sharpness::{
    constant_c, limit_formula, lower_bound_ratio, series_bound, DyadicMartingale, DEFAULT_CELL_BUDGET,
};

fn main() -> martingale_bounds::Result<()> {
    println!("C = {:.7}", constant_c());
    for p in [2u32, 3, 4] {
        let levels = DyadicMartingale::max_levels(p, DEFAULT_CELL_BUDGET);
        let r = lower_bound_ratio(p, levels, DEFAULT_CELL_BUDGET)?;
        println!(
            "p = {p}, {levels} levels: ratio >= {:.5} (|f|_p = {:.5}, denominator {:.5}, series bound {:.5})",
            r.ratio,
            r.numerator,
            r.denominator,
            series_bound(f64::from(p))?
        );
    }
    for p in [10.0, 50.0, 200.0] {
        println!("limit formula at p = {p}: {:.6}", limit_formula(p)?);
    }
    Ok(())
}
