//! Lower-bound construction for the best constant of the martingale moment
//! inequality.
//!
//! On `(0, 1)` with Lebesgue measure take `f(x) = |ln x| - 1`, whose
//! primitive is `F(x) = x |ln x|`, and the dyadic filtration whose level `m`
//! consists of the `2^{mp}` cells `(k 2^{-mp}, (k+1) 2^{-mp})`. The
//! martingale `S(m) = E(f | F(m))` starts at `S(0) = 0` and converges to
//! `f`, so
//!
//! ```text
//! K(p) >= |f|_p / ((p - 1) [sum_m |S(m+1) - S(m)|_p^2]^{1/2}).
//! ```
//!
//! The cell average of `f` on cell `k` of level `m` has the closed form
//! `m p ln 2 - ln(k + 1) - k ln(1 + 1/k)`, which is what every level
//! computation below evaluates.

use std::f64::consts::{E, LN_2};
use std::io::Write;

use serde::Serialize;

use crate::numeric::{integrate, ln_gamma};
use crate::{Error, Result};

/// Default cap on the number of cells at the finest stored level.
pub const DEFAULT_CELL_BUDGET: u64 = 1 << 24;

const ZETA_TERMS: u32 = 1000;
const OSCILLATION_TERMS: u64 = 100_000;
const SEQUENTIAL_BLOCK: u64 = 1 << 14;

/// `(1/e) / [20 ln^2 2 / 9 + 1/3]^{1/2}`.
pub fn constant_c() -> f64 {
    (1.0 / E) / series_bound_limit().sqrt()
}

/// `20 ln^2 2 / 9 + 1/3`.
pub fn series_bound_limit() -> f64 {
    20.0 * LN_2 * LN_2 / 9.0 + 1.0 / 3.0
}

/// `20 ln^2 2 / 9 + zeta(p)^{2/p} / 3`, the bound on the squared-norm
/// series of the dyadic martingale.
pub fn series_bound(p: f64) -> Result<f64> {
    Ok(20.0 * LN_2 * LN_2 / 9.0 + zeta_root(p, 2.0 / p)? / 3.0)
}

/// `zeta(p) - 1 = sum_{k >= 2} k^-p`.
///
/// Summed directly up to `k = 1000`, smallest terms first, with an
/// Euler–Maclaurin remainder for `k > 1000`.
pub fn zeta_minus_one(p: f64) -> Result<f64> {
    if !(p > 1.0 + 1e-6) || p.is_nan() {
        return Err(Error::domain(format!("zeta needs p > 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(0.0);
    }
    let k = ZETA_TERMS as f64;
    let mut tail = k.powf(1.0 - p) / (p - 1.0) - 0.5 * k.powf(-p) + p * k.powf(-p - 1.0) / 12.0
        - p * (p + 1.0) * (p + 2.0) * k.powf(-p - 3.0) / 720.0;
    for j in (2..=ZETA_TERMS).rev() {
        tail += (j as f64).powf(-p);
    }
    Ok(tail)
}

/// Riemann zeta function for real `p > 1`.
pub fn zeta(p: f64) -> Result<f64> {
    Ok(1.0 + zeta_minus_one(p)?)
}

/// `zeta(p)^e`, accurate when `zeta(p)` is close to 1.
pub fn zeta_root(p: f64, e: f64) -> Result<f64> {
    Ok((e * zeta_minus_one(p)?.ln_1p()).exp())
}

/// `zeta(p)^e - 1` without cancellation, resolvable far below `f64::EPSILON`.
pub fn zeta_root_excess(p: f64, e: f64) -> Result<f64> {
    Ok((e * zeta_minus_one(p)?.ln_1p()).exp_m1())
}

/// The norm `|f|_p = [int_0^1 | |ln x| - 1 |^p dx]^{1/p}` and the Gamma
/// surrogate `Gamma(p + 1)^{1/p}` it is asymptotically equivalent to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SInfinityNorm {
    pub value: f64,
    pub surrogate: f64,
    /// Estimated relative error of `value`.
    pub rel_error: f64,
}

/// With `t = -ln x` the integral is
/// `e^{-1} Gamma(p + 1) + int_0^1 (1 - t)^p e^{-t} dt`.
pub fn s_infinity_norm(p: f64) -> Result<SInfinityNorm> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::domain(format!("s_infinity_norm needs finite p >= 1, got {p}")));
    }
    let head = integrate(|t| (1.0 - t).powf(p) * (-t).exp(), 0.0, 1.0, 1e-300, 1e-14, 200);
    let ln_gamma_part = ln_gamma(p + 1.0) - 1.0;
    let ratio = head.value / ln_gamma_part.exp();
    let ln_integral = ln_gamma_part + ratio.ln_1p();
    let rel_error = head.error / (ln_gamma_part.exp() + head.value) / p;
    Ok(SInfinityNorm {
        value: (ln_integral / p).exp(),
        surrogate: (ln_gamma(p + 1.0) / p).exp(),
        rel_error,
    })
}

/// Sum of `f(i)` over `lo..hi` by fixed binary splitting, parallel above a
/// block size; the result does not depend on the thread count.
fn index_sum<F: Fn(u64) -> f64 + Sync>(lo: u64, hi: u64, f: &F) -> f64 {
    let len = hi - lo;
    if len <= 32 {
        return (lo..hi).map(f).sum();
    }
    let mid = lo + len / 2;
    if len > SEQUENTIAL_BLOCK {
        let (a, b) = rayon::join(|| index_sum(lo, mid, f), || index_sum(mid, hi, f));
        a + b
    } else {
        index_sum(lo, mid, f) + index_sum(mid, hi, f)
    }
}

fn index_max<F: Fn(u64) -> f64 + Sync>(lo: u64, hi: u64, f: &F) -> f64 {
    let len = hi - lo;
    if len <= SEQUENTIAL_BLOCK {
        return (lo..hi).map(f).fold(0.0, f64::max);
    }
    let mid = lo + len / 2;
    let (a, b) = rayon::join(|| index_max(lo, mid, f), || index_max(mid, hi, f));
    a.max(b)
}

/// `k ln(1 + 1/k)`, zero at `k = 0`.
fn k_log1p_inv(k: u64) -> f64 {
    if k == 0 {
        0.0
    } else {
        let k = k as f64;
        k * (1.0 / k).ln_1p()
    }
}

/// Upper bound on `Z_p = sum_{j >= 1} ln(1 + 1/j)^p`.
pub fn oscillation_series(p: f64) -> f64 {
    let direct = index_sum(1, OSCILLATION_TERMS + 1, &|j| (1.0 / j as f64).ln_1p().powf(p));
    direct + (OSCILLATION_TERMS as f64).powf(1.0 - p) / (p - 1.0)
}

/// A norm of one martingale difference: exact, or a certified upper bound
/// for levels beyond the cell budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelNorm {
    pub value: f64,
    pub exact: bool,
}

/// Worst deviation found by the tower check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TowerCheck {
    /// `max |mean(children) - parent| / max(1, |parent|)` over all stored
    /// parent cells.
    pub max_rel_deviation: f64,
    pub levels_checked: u32,
}

/// The martingale `S(m) = E(f | F(m))` for an integer `p >= 2`, with levels
/// `0..=levels` stored (evaluated lazily from the closed form).
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicMartingale {
    p: u32,
    levels: u32,
    budget: u64,
}

impl DyadicMartingale {
    /// Levels `0..=levels`; fails if level `levels` would need more than
    /// `budget` cells.
    pub fn build(p: u32, levels: u32, budget: u64) -> Result<Self> {
        if p < 2 {
            return Err(Error::domain("the dyadic construction needs an integer p >= 2"));
        }
        let bits = u64::from(p) * u64::from(levels);
        let cells = if bits >= 127 { u128::MAX } else { 1u128 << bits };
        if cells > u128::from(budget) || bits > 62 {
            return Err(Error::Budget {
                what: format!("dyadic level {levels} for p = {p}"),
                needed: cells,
                limit: u128::from(budget),
            });
        }
        Ok(DyadicMartingale { p, levels, budget })
    }

    /// Largest number of levels whose finest level fits in `budget` cells.
    pub fn max_levels(p: u32, budget: u64) -> u32 {
        (63 - budget.max(1).leading_zeros()) / p.max(1)
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    fn cells(&self, m: u32) -> u64 {
        1u64 << (self.p * m)
    }

    /// `S(m)` on cell `k`.
    pub fn cell_value(&self, m: u32, k: u64) -> f64 {
        f64::from(self.p * m) * LN_2 - ((k + 1) as f64).ln() - k_log1p_inv(k)
    }

    /// All cell values of level `m`.
    pub fn level(&self, m: u32) -> Result<Vec<f64>> {
        self.check_stored(m)?;
        Ok((0..self.cells(m)).map(|k| self.cell_value(m, k)).collect())
    }

    fn check_stored(&self, m: u32) -> Result<()> {
        if m > self.levels {
            return Err(Error::domain(format!("level {m} is beyond the stored levels 0..={}", self.levels)));
        }
        Ok(())
    }

    /// `S(m + 1) - S(m)` on child cell `l` of level `m + 1`.
    fn difference(&self, l: u64) -> f64 {
        let k = l >> self.p;
        let ratio = ((k + 1) << self.p) as f64 / (l + 1) as f64;
        ratio.ln() + k_log1p_inv(k) - k_log1p_inv(l)
    }

    /// `E|S(m)|^q`.
    pub fn level_moment(&self, m: u32, q: f64) -> Result<f64> {
        self.check_stored(m)?;
        let w = (self.cells(m) as f64).recip();
        Ok(w * index_sum(0, self.cells(m), &|k| self.cell_value(m, k).abs().powf(q)))
    }

    /// `E|xi(m)|^q` for `xi(m) = S(m + 1) - S(m)`, `m < levels`.
    pub fn difference_moment(&self, m: u32, q: f64) -> Result<f64> {
        self.check_stored(m + 1)?;
        let w = (self.cells(m + 1) as f64).recip();
        Ok(w * index_sum(0, self.cells(m + 1), &|l| self.difference(l).abs().powf(q)))
    }

    /// Mean of the children minus the parent, over every parent cell of
    /// every level below the finest.
    pub fn tower_check(&self) -> TowerCheck {
        let children = 1u64 << self.p;
        let mut worst = 0.0f64;
        for m in 0..self.levels {
            let dev = index_max(0, self.cells(m), &|k| {
                let parent = self.cell_value(m, k);
                let first = k << self.p;
                let mean = index_sum(first, first + children, &|l| self.cell_value(m + 1, l)) / children as f64;
                (mean - parent).abs() / parent.abs().max(1.0)
            });
            worst = worst.max(dev);
        }
        TowerCheck { max_rel_deviation: worst, levels_checked: self.levels }
    }

    /// `|xi(m)|_p` at the construction's own `p`: exact for `m < levels`,
    /// otherwise the bound `2^-m A^{1/p}` with `A = E|xi(0)|^p + Z_p`.
    ///
    /// The bound holds because the level-`m` cell `(0, 2^{-mp})` is a scaled
    /// copy of level 0 (its differences equal those of `xi(0)`), while on
    /// cell `k >= 1` the children deviate from the parent by at most the
    /// oscillation `ln(1 + 1/k)` of `f`.
    pub fn xi_level_norm(&self, m: u32) -> Result<LevelNorm> {
        let p = f64::from(self.p);
        if m < self.levels {
            return Ok(LevelNorm { value: self.difference_moment(m, p)?.powf(1.0 / p), exact: true });
        }
        Ok(LevelNorm { value: 2f64.powi(-(m as i32)) * self.tail_constant()?.powf(1.0 / p), exact: false })
    }

    /// `A = E|xi(0)|^p + Z_p`.
    fn tail_constant(&self) -> Result<f64> {
        if self.levels == 0 {
            return Err(Error::domain("the tail bound needs at least one stored level"));
        }
        let p = f64::from(self.p);
        Ok(self.difference_moment(0, p)? + oscillation_series(p))
    }

    /// `sum_{m = from}^{levels - 1} |xi(m)|_p^2` from exact levels.
    pub fn series_prefix(&self, from: u32) -> Result<f64> {
        (from..self.levels).map(|m| Ok(self.xi_level_norm(m)?.value.powi(2))).sum()
    }

    /// Bound on `sum_{m >= levels} |xi(m)|_p^2`:
    /// `A^{2/p} 4^{-levels} 4/3`.
    pub fn series_tail_bound(&self) -> Result<f64> {
        let p = f64::from(self.p);
        Ok(self.tail_constant()?.powf(2.0 / p) * 4f64.powi(-(self.levels as i32)) * 4.0 / 3.0)
    }
}

/// The per-level estimate `ln^2 2 m^2 4^-m + 4^-m zeta(p)^{2/p}` of
/// `|xi(m)|_p^2` whose sum over `m >= 1` gives [`series_bound`]. It
/// is reported for comparison only; at small `m` and `p >= 3` it can fall
/// below the exact value.
pub fn per_level_estimate(p: f64, m: u32) -> Result<f64> {
    let m2 = f64::from(m) * f64::from(m);
    let w = 4f64.powi(-(m as i32));
    Ok(LN_2 * LN_2 * m2 * w + w * zeta_root(p, 2.0 / p)?)
}

/// `(1/e) / [20 ln^2 2 / 9 + zeta(p)^{2/p} / 3]^{1/2}`, which tends to
/// [`constant_c`] as `p -> inf`.
pub fn limit_formula(p: f64) -> Result<f64> {
    Ok((1.0 / E) / series_bound(p)?.sqrt())
}

/// `constant_c() - limit_formula(p)` without cancellation. With
/// `x = (zeta(p)^{2/p} - 1) / (3 L)` and `L` the limit of [`series_bound`],
/// the gap is `C (1 - (1 + x)^{-1/2})`. It stays resolvable once the two
/// values agree in every `f64` digit.
pub fn limit_formula_gap(p: f64) -> Result<f64> {
    let x = zeta_root_excess(p, 2.0 / p)? / (3.0 * series_bound_limit());
    Ok(-constant_c() * (-0.5 * x.ln_1p()).exp_m1())
}

/// One row of the sharpness report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SharpnessRatio {
    pub p: u32,
    #[serde(rename = "M")]
    pub levels: u32,
    /// `|f|_p`.
    pub numerator: f64,
    /// `Gamma(p + 1)^{1/p}`.
    pub surrogate: f64,
    /// `(p - 1) [series_prefix + series_tail_bound]^{1/2}`.
    pub denominator: f64,
    /// A certified lower bound of `numerator / ((p - 1) [sum_m |xi(m)|_p^2]^{1/2})`.
    pub ratio: f64,
    pub limit_formula: f64,
    /// `sum_{m < M} |xi(m)|_p^2`, exact.
    pub series_prefix: f64,
    /// Bound on `sum_{m >= M} |xi(m)|_p^2`.
    pub series_tail_bound: f64,
}

pub fn lower_bound_ratio(p: u32, levels: u32, budget: u64) -> Result<SharpnessRatio> {
    let mart = DyadicMartingale::build(p, levels, budget)?;
    let pf = f64::from(p);
    let norm = s_infinity_norm(pf)?;
    let series_prefix = mart.series_prefix(0)?;
    let series_tail_bound = mart.series_tail_bound()?;
    let denominator = (pf - 1.0) * (series_prefix + series_tail_bound).sqrt();
    Ok(SharpnessRatio {
        p,
        levels,
        numerator: norm.value,
        surrogate: norm.surrogate,
        denominator,
        ratio: norm.value / denominator,
        limit_formula: limit_formula(pf)?,
        series_prefix,
        series_tail_bound,
    })
}

/// Writes `p,M,numerator,denominator,ratio,limit_formula,series_prefix,series_tail_bound`.
pub fn write_sharpness_csv<W: Write>(rows: &[SharpnessRatio], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "p",
        "M",
        "numerator",
        "denominator",
        "ratio",
        "limit_formula",
        "series_prefix",
        "series_tail_bound",
    ])?;
    for r in rows {
        wr.write_record([
            r.p.to_string(),
            r.levels.to_string(),
            r.numerator.to_string(),
            r.denominator.to_string(),
            r.ratio.to_string(),
            r.limit_formula.to_string(),
            r.series_prefix.to_string(),
            r.series_tail_bound.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_matches_printed_decimal() {
        assert!((constant_c() - 0.31080315).abs() < 5e-9);
        assert!((series_bound_limit() - 1.4010067).abs() < 5e-8);
        assert!(constant_c() < 1.0 / E);
    }

    #[test]
    fn limit_gap_matches_direct_difference_and_stays_resolvable() {
        for p in [2.0, 4.0, 8.0, 16.0] {
            let direct = constant_c() - limit_formula(p).unwrap();
            assert!((limit_formula_gap(p).unwrap() - direct).abs() < 1e-15, "p = {p}");
        }
        // zeta(50) - 1 = 2^-50 + 3^-50 up to a relative 2^-50
        let excess = zeta_root_excess(50.0, 2.0 / 50.0).unwrap();
        assert!((excess / (0.04 * (2f64.powi(-50) + 3f64.powi(-50))) - 1.0).abs() < 1e-12);
        let gaps: Vec<f64> = [64.0, 100.0, 200.0, 400.0].iter().map(|&p| limit_formula_gap(p).unwrap()).collect();
        assert!(gaps.iter().all(|&g| g > 0.0));
        assert!(gaps.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn zeta_classical_values() {
        assert!((zeta(2.0).unwrap() - PI.powi(2) / 6.0).abs() < 1e-13);
        assert!((zeta(4.0).unwrap() - PI.powi(4) / 90.0).abs() < 1e-13);
        assert!((zeta(10.0).unwrap() - PI.powi(10) / 93555.0).abs() < 1e-13);
        assert!((zeta(10.0).unwrap() - 1.0009946).abs() < 5e-8);
        assert!(zeta_root(50.0, 2.0 / 50.0).unwrap() - 1.0 < 1e-8);
        assert!(zeta(1.0).is_err());
    }

    #[test]
    fn zeta_near_one_matches_laurent_expansion() {
        // zeta(1 + e) = 1/e + gamma + O(e)
        let e = 1e-3;
        let euler_gamma = 0.577_215_664_901_532_9;
        assert!((zeta(1.0 + e).unwrap() - (1.0 / e + euler_gamma)).abs() < 1e-3);
    }

    #[test]
    fn s_infinity_surrogate_values() {
        let n = s_infinity_norm(5.0).unwrap();
        assert!((n.surrogate - 120f64.powf(0.2)).abs() < 1e-12);
        let big = s_infinity_norm(200.0).unwrap();
        assert!((big.surrogate / (200.0 / E) - 1.0).abs() < 0.02);
        for p in [2.0, 3.0, 7.5, 20.0, 64.0] {
            let n = s_infinity_norm(p).unwrap();
            assert!(n.value <= n.surrogate + 1.0);
            assert!(n.rel_error < 1e-10);
        }
    }

    #[test]
    fn s_infinity_at_p2_is_unit_variance() {
        // |ln x| is Exp(1) under Lebesgue measure, so |f|_2 = 1.
        assert!((s_infinity_norm(2.0).unwrap().value - 1.0).abs() < 1e-13);
        // E|Y - 1|^3 = 12/e - 2 for Y ~ Exp(1).
        let third = s_infinity_norm(3.0).unwrap().value.powi(3);
        assert!((third - (12.0 / E - 2.0)).abs() < 1e-12);
    }

    #[test]
    fn first_levels() {
        let m = DyadicMartingale::build(2, 3, DEFAULT_CELL_BUDGET).unwrap();
        assert_eq!(m.cell_value(0, 0), 0.0);
        assert!((m.cell_value(1, 0) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(m.level(0).unwrap(), vec![0.0]);
        assert!(m.level(4).is_err());
    }

    #[test]
    fn cell_values_match_primitive_differences() {
        let prim = |x: f64| if x == 0.0 { 0.0 } else { -x * x.ln() };
        let mart = DyadicMartingale::build(3, 2, DEFAULT_CELL_BUDGET).unwrap();
        let cells = 64u64;
        for k in [0, 1, 5, 31, 63] {
            let (a, b) = (k as f64 / cells as f64, (k + 1) as f64 / cells as f64);
            let want = cells as f64 * (prim(b) - prim(a));
            assert!((mart.cell_value(2, k) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn tower_property() {
        for (p, levels) in [(2, 3), (2, 8), (3, 5), (4, 4)] {
            let m = DyadicMartingale::build(p, levels, DEFAULT_CELL_BUDGET).unwrap();
            assert!(m.tower_check().max_rel_deviation < 1e-12);
        }
    }

    #[test]
    fn l2_orthogonality() {
        let mart = DyadicMartingale::build(2, 8, DEFAULT_CELL_BUDGET).unwrap();
        let sum: f64 = (0..8).map(|m| mart.difference_moment(m, 2.0).unwrap()).sum();
        let total = mart.level_moment(8, 2.0).unwrap();
        assert!((sum - total).abs() <= 1e-10 * total);
    }

    #[test]
    fn tail_bound_dominates_exact_levels() {
        for p in [2u32, 3, 4] {
            let full = DyadicMartingale::build(p, DyadicMartingale::max_levels(p, DEFAULT_CELL_BUDGET), DEFAULT_CELL_BUDGET)
                .unwrap();
            let coarse = DyadicMartingale::build(p, 1, DEFAULT_CELL_BUDGET).unwrap();
            for m in 1..full.levels() {
                let exact = full.xi_level_norm(m).unwrap();
                let bound = coarse.xi_level_norm(m).unwrap();
                assert!(exact.exact && !bound.exact);
                assert!(exact.value <= bound.value, "p = {p}, m = {m}");
                assert!(exact.value > 0.0);
            }
        }
    }

    #[test]
    fn level_norms_decay_geometrically() {
        let mart = DyadicMartingale::build(2, 10, DEFAULT_CELL_BUDGET).unwrap();
        let norms: Vec<f64> = (0..10).map(|m| mart.xi_level_norm(m).unwrap().value).collect();
        for w in norms.windows(2).skip(2) {
            assert!((w[1] / w[0] - 0.5).abs() < 0.05);
        }
    }

    #[test]
    fn budget_error_names_the_limit() {
        let err = DyadicMartingale::build(4, 7, DEFAULT_CELL_BUDGET).unwrap_err();
        match err {
            Error::Budget { needed, limit, .. } => {
                assert_eq!(needed, 1 << 28);
                assert_eq!(limit, 1 << 24);
            }
            other => panic!("unexpected error {other:?}"),
        }
        assert_eq!(DyadicMartingale::max_levels(4, DEFAULT_CELL_BUDGET), 6);
        assert_eq!(DyadicMartingale::max_levels(3, DEFAULT_CELL_BUDGET), 8);
    }

    #[test]
    fn oscillation_series_at_two() {
        // sum ln(1 + 1/j)^2 is between sum 1/(j + 1)^2 and sum 1/j^2.
        let z = oscillation_series(2.0);
        assert!(z > PI * PI / 6.0 - 1.0 && z < PI * PI / 6.0);
    }

    #[test]
    fn limit_formula_values() {
        let v = limit_formula(10.0).unwrap();
        let want = (1.0 / E) / (20.0 * LN_2 * LN_2 / 9.0 + zeta(10.0).unwrap().powf(0.2) / 3.0).sqrt();
        assert!((v - want).abs() < 1e-15);
        assert!((v - 0.3107958).abs() < 5e-8);
        assert!((limit_formula(400.0).unwrap() - constant_c()).abs() < 1e-4);
        let seq: Vec<f64> = [2.0, 3.0, 4.0, 8.0, 16.0, 32.0, 64.0].iter().map(|&p| limit_formula(p).unwrap()).collect();
        assert!(seq.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn ratio_report_is_consistent() {
        let r = lower_bound_ratio(3, 4, DEFAULT_CELL_BUDGET).unwrap();
        assert!(r.ratio > 0.0 && r.ratio.is_finite());
        assert!((r.denominator - 2.0 * (r.series_prefix + r.series_tail_bound).sqrt()).abs() < 1e-12);
        let mut buf = Vec::new();
        write_sharpness_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("p,M,numerator,denominator,ratio,limit_formula,series_prefix,series_tail_bound\n3,4,"));
    }
}
