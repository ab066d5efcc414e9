//! Riemann zeta on the real axis and the powers `zeta(p)^{2/p}` that enter
//! the squared-norm series bound.
//!
//! `cargo run --release --example zeta`

use martingale_bounds::sharpness::{zeta, zeta_minus_one, zeta_root, zeta_root_excess};

fn main() -> martingale_bounds::Result<()> {
    for p in [1.5, 2.0, 3.0, 4.0, 10.0, 40.0] {
        println!("zeta({p}) = {:.12}   zeta - 1 = {:.3e}", zeta(p)?, zeta_minus_one(p)?);
    }
    for p in [4.0, 8.0, 16.0, 32.0, 50.0] {
        let excess = zeta_root_excess(p, 2.0 / p)?;
        println!("zeta({p})^(2/{p}) = {:.15} (excess over 1: {excess:.3e})", zeta_root(p, 2.0 / p)?);
    }
    Ok(())
}
