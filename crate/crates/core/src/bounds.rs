//! Moment bounds for martingales `S(n) = sum xi(i)` and martingale
//! transforms `W(n) = sum b(i) xi(i)`, together with the report type used to
//! compare them against empirical moments.
//!
//! ```text
//! |n^-1/2 S(n)|_p <= (p - 1) [n^-1 sum |xi(i)|_p^2]^{1/2}
//! |n^-1/2 W(n)|_p <= (p - 1) |b|_{alpha p, 2 lambda} |xi|_{beta p, 2 mu}
//! ```
//!
//! for `p >= 2` and any Hölder quadruple `1/alpha + 1/beta = 1`,
//! `1/lambda + 1/mu = 1`.

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::gls::PsiFunction;
use crate::mixed_norms::{mixed_norm, MomentTable};
use crate::numeric::{golden_min, pairwise_sum_by};
use crate::{Error, Result};

const CONJUGACY_TOL: f64 = 1e-12;
const SEARCH_CELLS: usize = 32;
const TIE_TOL: f64 = 1e-12;

/// Exponents `(alpha, beta, lambda, mu)` in `[1, inf]` with
/// `1/alpha + 1/beta = 1` and `1/lambda + 1/mu = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderQuadruple {
    #[serde(with = "ext_real")]
    pub alpha: f64,
    #[serde(with = "ext_real")]
    pub beta: f64,
    #[serde(with = "ext_real")]
    pub lambda: f64,
    #[serde(with = "ext_real")]
    pub mu: f64,
}

impl HolderQuadruple {
    pub fn new(alpha: f64, beta: f64, lambda: f64, mu: f64) -> Result<Self> {
        let q = HolderQuadruple { alpha, beta, lambda, mu };
        for x in [alpha, beta, lambda, mu] {
            if !(x >= 1.0) {
                return Err(Error::domain(format!("Hölder exponent {x} is not in [1, inf]")));
            }
        }
        if (1.0 / alpha + 1.0 / beta - 1.0).abs() > CONJUGACY_TOL {
            return Err(Error::domain(format!("1/alpha + 1/beta != 1 for alpha = {alpha}, beta = {beta}")));
        }
        if (1.0 / lambda + 1.0 / mu - 1.0).abs() > CONJUGACY_TOL {
            return Err(Error::domain(format!("1/lambda + 1/mu != 1 for lambda = {lambda}, mu = {mu}")));
        }
        Ok(q)
    }

    /// Quadruple with `1/alpha = s` and `1/lambda = t`, `s, t in [0, 1]`.
    pub fn from_reciprocals(s: f64, t: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&t) {
            return Err(Error::domain("reciprocal exponents must lie in [0, 1]"));
        }
        Ok(HolderQuadruple { alpha: 1.0 / s, beta: 1.0 / (1.0 - s), lambda: 1.0 / t, mu: 1.0 / (1.0 - t) })
    }

    /// `(alpha, beta, lambda, mu) = (inf, 1, inf, 1)`: bounded multipliers.
    pub fn bounded_multipliers() -> Self {
        HolderQuadruple { alpha: f64::INFINITY, beta: 1.0, lambda: f64::INFINITY, mu: 1.0 }
    }

    /// `(1/alpha, 1/lambda)`.
    pub fn reciprocals(&self) -> (f64, f64) {
        (1.0 / self.alpha, 1.0 / self.lambda)
    }
}

/// Serialises `f64` as a JSON number, or `"inf"` for `+inf`.
pub(crate) mod ext_real {
    use super::*;

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if x.is_infinite() && *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*x)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {s:?}"))),
        }
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 2.0) || !p.is_finite() {
        return Err(Error::domain(format!("moment bounds need finite p >= 2, got {p}")));
    }
    Ok(())
}

/// `(p - 1) [n^-1 sum_{i<=n} |xi(i)|_p^2]^{1/2}`, the bound on
/// `|n^-1/2 S(n)|_p`.
pub fn bound_martingale(xi: &MomentTable, p: f64, n: usize) -> Result<f64> {
    check_p(p)?;
    Ok((p - 1.0) * mixed_norm(xi, p, 2.0, n)?)
}

/// `(p - 1) |b|_{alpha p, 2 lambda} |xi|_{beta p, 2 mu}`, the bound on
/// `|n^-1/2 W(n)|_p` for one Hölder quadruple.
pub fn bound_transform(b: &MomentTable, xi: &MomentTable, p: f64, n: usize, quad: &HolderQuadruple) -> Result<f64> {
    check_p(p)?;
    let quad = HolderQuadruple::new(quad.alpha, quad.beta, quad.lambda, quad.mu)?;
    let bf = mixed_norm(b, quad.alpha * p, 2.0 * quad.lambda, n)?;
    let xf = mixed_norm(xi, quad.beta * p, 2.0 * quad.mu, n)?;
    Ok((p - 1.0) * bf * xf)
}

/// Result of minimising [`bound_transform`] over Hölder quadruples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizedQuadruple {
    pub quadruple: HolderQuadruple,
    pub value: f64,
    /// Grid cells evaluated.
    pub probed: usize,
    /// Grid cells skipped because `alpha p` or `beta p` fell outside the
    /// moment grids.
    pub excluded: usize,
}

/// A column prepared for fast power means: `max` and `ln(x / max)`.
struct LogColumn {
    max: f64,
    logs: Vec<f64>,
}

impl LogColumn {
    fn new(col: Vec<f64>) -> Self {
        let max = col.iter().copied().fold(0.0, f64::max);
        let logs = col.iter().map(|&x| (x / max).ln()).collect();
        LogColumn { max, logs }
    }

    /// `ln power_mean(col, r)`.
    fn ln_power_mean(&self, r: f64) -> f64 {
        if r.is_infinite() || self.max == 0.0 || !self.max.is_finite() {
            return self.max.ln();
        }
        let mean = pairwise_sum_by(&self.logs, |l| (r * l).exp()) / self.logs.len() as f64;
        self.max.ln() + mean.ln() / r
    }
}

struct Objective<'a> {
    b: &'a MomentTable,
    xi: &'a MomentTable,
    p: f64,
    n: usize,
}

impl Objective<'_> {
    /// Columns at `alpha p` and `beta p` for `1/alpha = s`, or `None` if a
    /// grid does not cover them.
    fn columns(&self, s: f64) -> Option<(LogColumn, LogColumn)> {
        let bcol = self.b.column_at(self.p / s, self.n)?;
        let xcol = self.xi.column_at(self.p / (1.0 - s), self.n)?;
        Some((LogColumn::new(bcol), LogColumn::new(xcol)))
    }

    fn ln_value(&self, cols: &(LogColumn, LogColumn), t: f64) -> f64 {
        (self.p - 1.0).ln() + cols.0.ln_power_mean(2.0 / t) + cols.1.ln_power_mean(2.0 / (1.0 - t))
    }

    fn ln_value_at(&self, s: f64, t: f64) -> f64 {
        match self.columns(s) {
            Some(cols) => self.ln_value(&cols, t),
            None => f64::INFINITY,
        }
    }
}

/// Minimises [`bound_transform`] over the Hölder quadruples, parameterised
/// by `(1/alpha, 1/lambda)` in `[0, 1]^2`.
///
/// A 33 x 33 grid is searched first; ties (relative `1e-12`) go to the
/// smaller `1/alpha`, then the smaller `1/lambda`. The best cell is then
/// refined by alternating golden-section searches in its neighbourhood.
pub fn optimize_quadruple(b: &MomentTable, xi: &MomentTable, p: f64, n: usize) -> Result<OptimizedQuadruple> {
    check_p(p)?;
    for table in [b, xi] {
        if n == 0 || n > table.horizon() {
            return Err(Error::domain(format!("n = {n} outside the table horizon {}", table.horizon())));
        }
    }
    let obj = Objective { b, xi, p, n };
    let steps: Vec<f64> = (0..=SEARCH_CELLS).map(|k| k as f64 / SEARCH_CELLS as f64).collect();
    let rows: Vec<Option<Vec<f64>>> = steps
        .par_iter()
        .map(|&s| obj.columns(s).map(|cols| steps.iter().map(|&t| obj.ln_value(&cols, t)).collect()))
        .collect();

    let mut best: Option<(f64, f64, f64)> = None;
    let mut probed = 0;
    let mut excluded = 0;
    for (i, row) in rows.iter().enumerate() {
        let Some(row) = row else {
            excluded += steps.len();
            continue;
        };
        for (j, &v) in row.iter().enumerate() {
            if v.is_nan() {
                excluded += 1;
                continue;
            }
            probed += 1;
            let better = match best {
                None => true,
                Some((bv, _, _)) => v.exp() < bv.exp() * (1.0 - TIE_TOL),
            };
            if better {
                best = Some((v, steps[i], steps[j]));
            }
        }
    }
    let (mut best_v, mut s, mut t) = best.ok_or_else(|| Error::domain("no admissible Hölder quadruple on the moment grids"))?;
    if best_v.is_finite() {
        let h = 1.0 / SEARCH_CELLS as f64;
        let (s_lo, s_hi) = ((s - h).max(0.0), (s + h).min(1.0));
        let (t_lo, t_hi) = ((t - h).max(0.0), (t + h).min(1.0));
        let (mut cs, mut ct) = (s, t);
        let mut cv = best_v;
        for _ in 0..8 {
            let cols = obj.columns(cs);
            let (nt, vt) = match &cols {
                Some(cols) => golden_min(|x| obj.ln_value(cols, x), t_lo, t_hi, 1e-10),
                None => break,
            };
            if vt < cv {
                ct = nt;
                cv = vt;
            }
            let (ns, vs) = golden_min(|x| obj.ln_value_at(x, ct), s_lo, s_hi, 1e-10);
            if vs < cv {
                cs = ns;
                cv = vs;
            }
        }
        if cv.exp() < best_v.exp() * (1.0 - TIE_TOL) {
            best_v = cv;
            s = cs;
            t = ct;
        }
    }
    let quadruple = HolderQuadruple::from_reciprocals(s, t)?;
    let value = if best_v.is_finite() { bound_transform(b, xi, p, n, &quadruple)? } else { f64::INFINITY };
    Ok(OptimizedQuadruple { quadruple, value, probed, excluded })
}

/// `p Q`: the bound on `sup_n |n^-1/2 S(n)|_p` when
/// `E(|xi(i)|^p | F(i-1)) <= Q^p` uniformly.
pub fn bound_conditional_uniform(q: f64, p: f64) -> Result<f64> {
    check_p(p)?;
    if !(q >= 0.0) || !q.is_finite() {
        return Err(Error::domain("Q must be finite and nonnegative"));
    }
    Ok(p * q)
}

/// `theta(p)`: the optimised transform bound at every grid point of `xi`
/// at or above 2, returned as a grid psi-function. Points where no
/// quadruple is admissible are dropped.
pub fn theta_function(b: &MomentTable, xi: &MomentTable, n: usize) -> Result<PsiFunction> {
    let mut ps = Vec::new();
    let mut vals = Vec::new();
    for &p in xi.grid() {
        if p < 2.0 {
            continue;
        }
        if let Ok(opt) = optimize_quadruple(b, xi, p, n) {
            if opt.value.is_finite() && opt.value > 0.0 {
                ps.push(p);
                vals.push(opt.value);
            }
        }
    }
    if ps.is_empty() {
        return Err(Error::domain("theta is infinite at every p > 2: the inputs have no finite admissible bound"));
    }
    PsiFunction::grid(f64::INFINITY, ps, vals)
}

/// `c3 (p / ln p) [sum_{i<=n} |E(xi(i)^2 | F(i-1))|_p]^{1/2}`, the bound on
/// `|S(n)|_p` through the conditional quadratic characteristic.
pub fn bound_quadratic_characteristic(cond: &MomentTable, p: f64, n: usize, c3: f64) -> Result<f64> {
    check_p(p)?;
    if !(c3 > 0.0) || !c3.is_finite() {
        return Err(Error::domain("c3 must be finite and positive"));
    }
    Ok(c3 * p / p.ln() * quadratic_characteristic(cond, p, n)?)
}

/// `<f>_{n,p} = [sum_{i<=n} |E(xi(i)^2 | F(i-1))|_p]^{1/2}`.
pub fn quadratic_characteristic(cond: &MomentTable, p: f64, n: usize) -> Result<f64> {
    Ok((n as f64 * mixed_norm(cond, p, 1.0, n)?).sqrt())
}

/// Two-sided bracket on the best constant of the moment inequality for
/// independent differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MpBracket {
    /// `0.87 p / ln p`.
    pub lower: f64,
    /// `p - 1`.
    pub upper: f64,
    /// Whether `lower <= upper` at this `p`.
    pub valid: bool,
}

pub fn mp_bracket(p: f64) -> Result<MpBracket> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::domain("mp_bracket needs finite p > 1"));
    }
    let lower = 0.87 * p / p.ln();
    let upper = p - 1.0;
    Ok(MpBracket { lower, upper, valid: lower <= upper })
}

/// Outcome of comparing a bound with an empirical norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Holds,
    Violated,
    Inconclusive,
}

/// Where a reported number came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Formula,
    Mc,
    Quadrature,
}

/// Half-widths an empirical value must exceed the bound by before it counts
/// as a violation.
pub const DEFAULT_VIOLATION_WIDTHS: f64 = 3.0;

/// `violated` iff `empirical - k * halfwidth > bound`; `inconclusive` when
/// no finite half-width is available.
pub fn judge(bound: f64, empirical: f64, halfwidth: Option<f64>, widths: f64) -> Verdict {
    match halfwidth {
        Some(hw) if hw.is_finite() && empirical.is_finite() && !bound.is_nan() => {
            if empirical - widths * hw > bound {
                Verdict::Violated
            } else {
                Verdict::Holds
            }
        }
        _ => Verdict::Inconclusive,
    }
}

/// A bound paired with the empirical statistic it should dominate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound: f64,
    pub empirical: f64,
    /// 95% confidence half-width of `empirical`.
    pub halfwidth: Option<f64>,
    pub verdict: Verdict,
    pub p: f64,
    pub n: usize,
    pub generator: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub quadruple: Option<HolderQuadruple>,
    pub bound_provenance: Provenance,
    pub empirical_provenance: Provenance,
    /// Allowed excess `k * halfwidth` before a violation is declared.
    pub tolerance: Option<f64>,
}

impl BoundReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        bound: f64,
        empirical: f64,
        halfwidth: Option<f64>,
        p: f64,
        n: usize,
        generator: impl Into<String>,
        seed: u64,
        widths: f64,
    ) -> Self {
        BoundReport {
            bound,
            empirical,
            halfwidth,
            verdict: judge(bound, empirical, halfwidth, widths),
            p,
            n,
            generator: generator.into(),
            seed,
            quadruple: None,
            bound_provenance: Provenance::Formula,
            empirical_provenance: Provenance::Mc,
            tolerance: halfwidth.map(|h| widths * h),
        }
    }

    pub fn with_quadruple(mut self, q: HolderQuadruple) -> Self {
        self.quadruple = Some(q);
        self
    }
}
