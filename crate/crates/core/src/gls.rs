//! Grand Lebesgue Space machinery.
//!
//! A random variable `X` belongs to `G(psi)` when
//!
//! ```text
//! ||X||_{G psi} = sup_{p in [2, a)} |X|_p / psi(p) < inf
//! ```
//!
//! With `psi_bar(p) = p ln psi(p)` and its upper transform
//! `psi_bar*(y) = sup_{x >= 2} (x y - psi_bar(x))` the norm yields the tail
//! estimate `P(|X| > u) <= 2 exp(-psi_bar*(ln(u / ||X||)))`.
//!
//! Outside its support a psi-function is `+inf`, with the convention
//! `c / inf = 0`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numeric::{grid_min, log_grid};
use crate::{Error, Result};

/// Largest abscissa probed by the Young–Fenchel search when the support is
/// unbounded.
pub const CONJUGATE_SEARCH_CAP: f64 = 1e6;

const SEARCH_POINTS: usize = 2049;

/// A moment curve `p -> |X|_p` sampled on a strictly increasing p-grid.
///
/// Between grid points the curve is interpolated linearly in
/// `(1/p, ln |X|_p)`. Since `1/p -> ln |X|_p` is convex, this never
/// underestimates the true norm of a genuine random variable.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentCurve {
    p: Vec<f64>,
    values: Vec<f64>,
    halfwidths: Option<Vec<f64>>,
    ess_sup: Option<f64>,
}

impl MomentCurve {
    pub fn new(p: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if p.is_empty() || p.len() != values.len() {
            return Err(Error::domain("moment curve needs matching, non-empty p and value vectors"));
        }
        if p[0] < 1.0 || !p.iter().all(|x| x.is_finite()) {
            return Err(Error::domain("moment curve p-grid must be finite and >= 1"));
        }
        if !p.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::domain("moment curve p-grid must be strictly increasing"));
        }
        if !values.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::domain("moment curve values must be finite and nonnegative"));
        }
        Ok(MomentCurve { p, values, halfwidths: None, ess_sup: None })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: &[f64], f: F) -> Result<Self> {
        MomentCurve::new(grid.to_vec(), grid.iter().map(|&p| f(p)).collect())
    }

    /// Curve of a degenerate variable `|X| = c`.
    pub fn constant(grid: &[f64], c: f64) -> Result<Self> {
        Ok(MomentCurve::from_fn(grid, |_| c.abs())?.with_ess_sup(c.abs()))
    }

    /// Exact curve of `N(0, sigma^2)`.
    pub fn gaussian(grid: &[f64], sigma: f64) -> Result<Self> {
        Ok(MomentCurve::from_fn(grid, |p| sigma.abs() * crate::numeric::gaussian_abs_norm(p))?
            .with_ess_sup(if sigma == 0.0 { 0.0 } else { f64::INFINITY }))
    }

    pub fn with_halfwidths(mut self, hw: Vec<f64>) -> Result<Self> {
        if hw.len() != self.p.len() || hw.iter().any(|h| h.is_nan() || *h < 0.0) {
            return Err(Error::domain("half-widths must match the grid and be nonnegative"));
        }
        self.halfwidths = Some(hw);
        Ok(self)
    }

    /// Attach `ess sup |X|`; `inf` records a known unbounded variable.
    pub fn with_ess_sup(mut self, s: f64) -> Self {
        self.ess_sup = Some(s);
        self
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn halfwidths(&self) -> Option<&[f64]> {
        self.halfwidths.as_deref()
    }

    pub fn ess_sup(&self) -> Option<f64> {
        self.ess_sup
    }

    pub fn p_min(&self) -> f64 {
        self.p[0]
    }

    pub fn p_max(&self) -> f64 {
        self.p[self.p.len() - 1]
    }

    /// Value at `q`, or `None` when `q` is outside the grid. `q = inf`
    /// returns the attached essential supremum, if any.
    pub fn eval(&self, q: f64) -> Option<f64> {
        if q.is_infinite() && q > 0.0 {
            return self.ess_sup;
        }
        let (lo, hi) = (self.p_min(), self.p_max());
        let slack = 1e-12 * hi;
        if q < lo - slack || q > hi + slack || q.is_nan() {
            return None;
        }
        let q = q.clamp(lo, hi);
        let k = self.p.partition_point(|&x| x < q);
        if k < self.p.len() && self.p[k] == q {
            return Some(self.values[k]);
        }
        if k == 0 {
            return Some(self.values[0]);
        }
        let (p0, p1) = (self.p[k - 1], self.p[k]);
        let (m0, m1) = (self.values[k - 1], self.values[k]);
        let t = (1.0 / p0 - 1.0 / q) / (1.0 / p0 - 1.0 / p1);
        if m0 > 0.0 && m1 > 0.0 {
            Some((m0.ln() + t * (m1.ln() - m0.ln())).exp())
        } else {
            Some(m0 + t * (m1 - m0))
        }
    }

    pub fn scaled(&self, c: f64) -> MomentCurve {
        let c = c.abs();
        MomentCurve {
            p: self.p.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
            halfwidths: self.halfwidths.as_ref().map(|h| h.iter().map(|v| v * c).collect()),
            ess_sup: self.ess_sup.map(|s| s * c),
        }
    }

    /// Largest relative decrease between consecutive grid values.
    pub fn monotonicity_violation(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| if w[1] < w[0] { (w[0] - w[1]) / w[0].max(f64::MIN_POSITIVE) } else { 0.0 })
            .fold(0.0, f64::max)
    }

    pub fn is_nondecreasing(&self, rel_tol: f64) -> bool {
        self.monotonicity_violation() <= rel_tol
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["p", "value"])?;
        for (p, v) in self.p.iter().zip(&self.values) {
            wr.write_record([p.to_string(), v.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["p", "value"] {
            return Err(Error::format("moment curve CSV header must be `p,value`"));
        }
        let (mut p, mut v) = (Vec::new(), Vec::new());
        for rec in rd.records() {
            let rec = rec?;
            p.push(parse_f64(&rec[0])?);
            v.push(parse_f64(&rec[1])?);
        }
        MomentCurve::new(p, v)
    }
}

pub(crate) fn parse_f64(s: &str) -> Result<f64> {
    let t = s.trim();
    match t {
        "inf" | "+inf" | "Infinity" => Ok(f64::INFINITY),
        _ => t.parse::<f64>().map_err(|_| Error::format(format!("not a number: `{s}`"))),
    }
}

/// A generating function `psi` on `[2, a)`.
#[derive(Debug, Clone, PartialEq)]
pub enum PsiFunction {
    /// Tabulated values, interpolated linearly in `(ln p, ln psi)`. The
    /// function is finite only between the first and last grid point.
    Grid { a: f64, p: Vec<f64>, values: Vec<f64> },
    /// `psi_r(r) = 1`, `+inf` elsewhere; `G(psi_r)` is `L_r`.
    PsiR { r: f64 },
    /// `psi(p) = sqrt(p)`, the subgaussian generating function.
    Sub2,
}

impl PsiFunction {
    pub fn grid(a: f64, p: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if p.is_empty() || p.len() != values.len() {
            return Err(Error::domain("psi grid needs matching, non-empty p and value vectors"));
        }
        if !(a > 2.0) {
            return Err(Error::domain("psi support bound a must exceed 2"));
        }
        if p[0] < 2.0 || p[p.len() - 1] >= a || !p.iter().all(|x| x.is_finite()) {
            return Err(Error::domain("psi grid points must lie in [2, a)"));
        }
        if !p.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::domain("psi grid must be strictly increasing"));
        }
        if !values.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::domain("psi values must be finite and strictly positive"));
        }
        Ok(PsiFunction::Grid { a, p, values })
    }

    pub fn psi_r(r: f64) -> Result<Self> {
        if !(r >= 1.0) || !r.is_finite() {
            return Err(Error::domain("psi_r needs a finite r >= 1"));
        }
        Ok(PsiFunction::PsiR { r })
    }

    /// Tabulate `f` on `points` log-spaced grid points of `[lo, hi]`.
    pub fn from_fn<F: Fn(f64) -> f64>(a: f64, lo: f64, hi: f64, points: usize, f: F) -> Result<Self> {
        let p = log_grid(lo, hi, points);
        let values = p.iter().map(|&x| f(x)).collect();
        PsiFunction::grid(a, p, values)
    }

    /// Declared support bound `a`.
    pub fn a(&self) -> f64 {
        match self {
            PsiFunction::Grid { a, .. } => *a,
            PsiFunction::PsiR { .. } | PsiFunction::Sub2 => f64::INFINITY,
        }
    }

    /// Interval on which `psi` is finite.
    pub fn finite_support(&self) -> (f64, f64) {
        match self {
            PsiFunction::Grid { p, .. } => (p[0], p[p.len() - 1]),
            PsiFunction::PsiR { r } => (*r, *r),
            PsiFunction::Sub2 => (2.0, f64::INFINITY),
        }
    }

    pub fn eval(&self, p: f64) -> f64 {
        match self {
            PsiFunction::Sub2 => {
                if p >= 2.0 && p.is_finite() {
                    p.sqrt()
                } else {
                    f64::INFINITY
                }
            }
            PsiFunction::PsiR { r } => {
                if p == *r {
                    1.0
                } else {
                    f64::INFINITY
                }
            }
            PsiFunction::Grid { p: grid, values, .. } => {
                let (lo, hi) = (grid[0], grid[grid.len() - 1]);
                if !(p >= lo && p <= hi) {
                    return f64::INFINITY;
                }
                let k = grid.partition_point(|&x| x < p);
                if grid[k] == p {
                    return values[k];
                }
                let (p0, p1) = (grid[k - 1], grid[k]);
                let t = (p.ln() - p0.ln()) / (p1.ln() - p0.ln());
                (values[k - 1].ln() + t * (values[k].ln() - values[k - 1].ln())).exp()
            }
        }
    }

    /// `psi_bar(p) = p ln psi(p)`.
    pub fn psi_bar(&self, p: f64) -> f64 {
        p * self.eval(p).ln()
    }

    fn nodes(&self) -> &[f64] {
        match self {
            PsiFunction::Grid { p, .. } => p,
            _ => &[],
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let doc = match self {
            PsiFunction::Grid { a, p, values } => PsiJson {
                kind: "grid".into(),
                a: bound_to_json(*a),
                r: None,
                grid: p.iter().zip(values).map(|(&x, &v)| [x, v]).collect(),
            },
            PsiFunction::PsiR { r } => PsiJson { kind: "psi_r".into(), a: bound_to_json(f64::INFINITY), r: Some(*r), grid: vec![] },
            PsiFunction::Sub2 => PsiJson { kind: "psi_sub2".into(), a: bound_to_json(f64::INFINITY), r: None, grid: vec![] },
        };
        serde_json::to_value(doc).expect("psi json is always serialisable")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let doc: PsiJson = serde_json::from_value(v.clone())?;
        match doc.kind.as_str() {
            "grid" => {
                let a = match &doc.a {
                    serde_json::Value::Number(n) => n.as_f64().unwrap_or(f64::NAN),
                    serde_json::Value::String(s) if s == "inf" => f64::INFINITY,
                    _ => return Err(Error::format("psi `a` must be a number or \"inf\"")),
                };
                let (p, values) = doc.grid.iter().map(|r| (r[0], r[1])).unzip();
                PsiFunction::grid(a, p, values)
            }
            "psi_r" => PsiFunction::psi_r(doc.r.ok_or_else(|| Error::format("psi_r needs `r`"))?),
            "psi_sub2" => Ok(PsiFunction::Sub2),
            other => Err(Error::format(format!("unknown psi kind `{other}`"))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(&self.to_json())?;
        std::fs::write(path, s + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        PsiFunction::from_json(&v)
    }
}

#[derive(Serialize, Deserialize)]
struct PsiJson {
    kind: String,
    a: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    grid: Vec<[f64; 2]>,
}

fn bound_to_json(a: f64) -> serde_json::Value {
    if a.is_infinite() {
        serde_json::Value::String("inf".into())
    } else {
        serde_json::json!(a)
    }
}

/// `||X||_{G psi}` evaluated on the common grid of `curve` and `psi`.
///
/// Returns `+inf` if the ratio is unbounded on the grid. With `psi_r` the
/// result is the curve value at `r` (the `L_r` norm).
pub fn gls_norm(curve: &MomentCurve, psi: &PsiFunction) -> Result<f64> {
    if let PsiFunction::PsiR { r } = psi {
        return curve
            .eval(*r)
            .ok_or_else(|| Error::domain(format!("curve does not cover p = {r} required by psi_r")));
    }
    let (slo, shi) = psi.finite_support();
    let lo = slo.max(curve.p_min()).max(2.0);
    let hi = shi.min(curve.p_max());
    if lo > hi {
        return Err(Error::domain("moment curve and psi have disjoint supports"));
    }
    let mut best = f64::NEG_INFINITY;
    for &p in curve.p().iter().chain(psi.nodes()) {
        if p < lo || p > hi {
            continue;
        }
        if let Some(m) = curve.eval(p) {
            let ratio = m / psi.eval(p);
            if ratio.is_nan() {
                continue;
            }
            best = best.max(ratio);
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(Error::domain("moment curve and psi share no grid point"));
    }
    Ok(best)
}

/// Value of the upper (Young–Fenchel) transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Conjugate {
    Finite { value: f64, at: f64 },
    /// The objective was still increasing at the search cap.
    Unbounded,
}

impl Conjugate {
    pub fn value(&self) -> f64 {
        match self {
            Conjugate::Finite { value, .. } => *value,
            Conjugate::Unbounded => f64::INFINITY,
        }
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(self, Conjugate::Unbounded)
    }
}

/// `psi_bar*(y) = sup_{x >= 2} (x y - x ln psi(x))`.
///
/// Searched on a log-spaced grid over `[2, min(a, cap)]`, refined by golden
/// section around the best point.
pub fn young_fenchel_upper(psi: &PsiFunction, y: f64) -> Result<Conjugate> {
    if !y.is_finite() {
        return Err(Error::domain("young_fenchel_upper needs a finite argument"));
    }
    if let PsiFunction::PsiR { r } = psi {
        if *r < 2.0 {
            return Err(Error::domain("psi_r with r < 2 has no support in [2, a)"));
        }
        return Ok(Conjugate::Finite { value: r * y, at: *r });
    }
    let (slo, shi) = psi.finite_support();
    let lo = slo.max(2.0);
    let hi = shi.min(CONJUGATE_SEARCH_CAP);
    if !(hi > lo) {
        return Err(Error::domain("psi must be finite on a nondegenerate part of [2, a)"));
    }
    let neg = |u: f64| {
        let x = u.exp().clamp(lo, hi);
        -(x * y - psi.psi_bar(x))
    };
    let kinks: Vec<f64> = psi.nodes().iter().map(|x| x.ln()).collect();
    let best = grid_min(neg, lo.ln(), hi.ln(), SEARCH_POINTS, &kinks);
    if shi > CONJUGATE_SEARCH_CAP && best.grid_index + 1 == best.points {
        let edge = -neg(hi.ln());
        let inside = -neg(hi.ln() - 1e-6);
        if edge > inside {
            return Ok(Conjugate::Unbounded);
        }
    }
    Ok(Conjugate::Finite { value: -best.value, at: best.x.exp() })
}

/// `psi_*(x) = inf_{y in (0, 1/2]} (x y + ln psi(1/y))`.
///
/// Returns `+inf` when `psi` is infinite on every admissible `p = 1/y >= 2`.
pub fn psi_lower_transform(psi: &PsiFunction, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::domain("psi_lower_transform needs a finite argument"));
    }
    match psi {
        PsiFunction::PsiR { r } => {
            if *r >= 2.0 {
                Ok(x / r)
            } else {
                Ok(f64::INFINITY)
            }
        }
        PsiFunction::Sub2 | PsiFunction::Grid { .. } => {
            let (slo, shi) = psi.finite_support();
            let p_lo = slo.max(2.0);
            if p_lo > shi {
                return Ok(f64::INFINITY);
            }
            let y_hi = 1.0 / p_lo;
            let y_lo = if shi.is_infinite() {
                // the minimiser for power-type growth sits near 1/x
                let scaled = if x > 0.0 { 1e-3 / x } else { 1.0 };
                scaled.min(1e-6)
            } else {
                1.0 / shi
            };
            let objective = |v: f64| {
                let y = v.exp().clamp(y_lo, y_hi);
                x * y + psi.eval(1.0 / y).ln()
            };
            let kinks: Vec<f64> = psi.nodes().iter().map(|p| -p.ln()).collect();
            let best = grid_min(objective, y_lo.ln(), y_hi.ln(), SEARCH_POINTS, &kinks);
            Ok(best.value)
        }
    }
}

/// `min(1, 2 exp(-psi_bar*(ln(u / norm))))`, the exponential tail bound for
/// a variable with `||X||_{G psi} = norm`.
pub fn tail_bound(psi: &PsiFunction, norm: f64, u: f64) -> Result<f64> {
    if !(u > 0.0) || !u.is_finite() {
        return Err(Error::domain("tail_bound needs u > 0"));
    }
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::domain("tail_bound needs a finite positive GLS norm"));
    }
    let conj = young_fenchel_upper(psi, (u / norm).ln())?;
    Ok((2.0 * (-conj.value()).exp()).min(1.0))
}

/// Grid spanning the default support used for moment curves: 64 log-spaced
/// points on `[2, 64]`.
pub fn default_p_grid() -> Vec<f64> {
    log_grid(2.0, 64.0, 64)
}
