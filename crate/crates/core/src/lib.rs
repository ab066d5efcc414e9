//! Moment and tail bounds for discrete-time martingales and martingale
//! transforms.
//!
//! The crate is organised around a few layers:
//!
//! * [`gls`]: Grand Lebesgue norms `sup_p |X|_p / psi(p)`, the
//!   Young–Fenchel transform used to turn moment growth into exponential
//!   tails, and the lower transform used by the entropy criteria.
//! * [`mixed_norms`]: the mixed `L_p x l_lambda` norms over indices, moment
//!   tables and empirical moment estimation from samples.
//! * [`bounds`]: right-hand sides of the moment inequalities for `S(n)`
//!   and `W(n)`, the Hölder-quadruple optimiser and `theta(p)`.
//! * [`sharpness`]: the dyadic conditional-expectation martingale built
//!   from `f(x) = |ln x| - 1`, zeta sums and the limiting constant.
//! * [`simulate`] and [`verify`]: a Monte Carlo oracle that generates
//!   martingale differences and predictable multipliers, and adjudicates
//!   every bound against empirical moments.
//! * [`entropy`]: covering numbers, natural distances and the integral
//!   continuity criteria (GLS, Pisier and Dudley forms).
//! * [`cli`]: the `mtbounds` command-line driver.

pub mod bounds;
pub mod cli;
pub mod entropy;
pub mod error;
pub mod gls;
pub mod mixed_norms;
pub mod numeric;
pub mod sharpness;
pub mod simulate;
pub mod verify;

pub use error::{Error, Result};
