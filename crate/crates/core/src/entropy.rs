//! Metric entropy and the integral continuity criteria.
//!
//! Covering numbers are bracketed from both sides on finite point sets:
//! farthest-point traversal gives an upper curve, a greedy maximal packing a
//! lower one. The three integral criteria (GLS, Pisier, Dudley) are decided
//! on analytic entropy models, either supplied directly or fitted to the
//! small-`epsilon` end of a computed profile.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gls::{gls_norm, psi_lower_transform, MomentCurve, PsiFunction};
use crate::mixed_norms::{mixed_norm_sup_horizon, MomentTable};
use crate::numeric::{fit_line, integrate};
use crate::{Error, Result};

/// Largest tolerated triangle-inequality excess of a [`DistanceMatrix`].
pub const TRIANGLE_TOLERANCE: f64 = 1e-9;

/// Symmetric, nonnegative, zero-diagonal matrix of semi-distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    size: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Validates symmetry, nonnegativity and the zero diagonal.
    pub fn new(size: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != size * size {
            return Err(Error::domain(format!("distance matrix needs {} entries, got {}", size * size, data.len())));
        }
        for i in 0..size {
            if data[i * size + i] != 0.0 {
                return Err(Error::domain(format!("nonzero diagonal entry at {i}")));
            }
            for j in 0..i {
                let (a, b) = (data[i * size + j], data[j * size + i]);
                if !(a >= 0.0) || a.is_infinite() {
                    return Err(Error::domain(format!("distance ({i}, {j}) = {a} is not finite and nonnegative")));
                }
                if a != b {
                    return Err(Error::domain(format!("distance matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(DistanceMatrix { size, data })
    }

    /// Builds the matrix from a symmetric distance function, evaluating each
    /// unordered pair once.
    pub fn from_fn<F: Fn(usize, usize) -> f64 + Sync>(size: usize, d: F) -> Result<Self> {
        let rows: Vec<Vec<f64>> = (0..size).into_par_iter().map(|i| (0..i).map(|j| d(i, j)).collect()).collect();
        let mut data = vec![0.0; size * size];
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                data[i * size + j] = v;
                data[j * size + i] = v;
            }
        }
        DistanceMatrix::new(size, data)
    }

    /// Euclidean distances between points of `R^k`.
    pub fn euclidean(points: &[Vec<f64>]) -> Result<Self> {
        DistanceMatrix::from_fn(points.len(), |i, j| {
            points[i].iter().zip(&points[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    pub fn diameter(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// `max d(i, k) - d(i, j) - d(j, k)` over all triples (0 if none).
    pub fn triangle_excess(&self) -> f64 {
        let n = self.size;
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut worst = 0.0f64;
                for j in 0..n {
                    for k in 0..n {
                        worst = worst.max(self.get(i, k) - self.get(i, j) - self.get(j, k));
                    }
                }
                worst
            })
            .reduce(|| 0.0, f64::max)
    }

    pub fn satisfies_triangle(&self) -> bool {
        self.triangle_excess() <= TRIANGLE_TOLERANCE
    }
}

/// Moment curve of `eta(i) - eta(j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCurve {
    pub i: usize,
    pub j: usize,
    pub curve: MomentCurve,
}

/// `d(v_i, v_j) = ||eta(v_i) - eta(v_j)||_{G psi}` for all pairs of
/// `points` indices. Every unordered pair `i != j` must be supplied.
pub fn natural_distance(points: usize, pairs: &[PairCurve], psi: &PsiFunction) -> Result<DistanceMatrix> {
    let mut slot: Vec<Option<&MomentCurve>> = vec![None; points * points];
    for pc in pairs {
        if pc.i >= points || pc.j >= points {
            return Err(Error::domain(format!("pair ({}, {}) outside {points} points", pc.i, pc.j)));
        }
        let (a, b) = (pc.i.min(pc.j), pc.i.max(pc.j));
        slot[a * points + b] = Some(&pc.curve);
    }
    for i in 0..points {
        for j in i + 1..points {
            if slot[i * points + j].is_none() {
                return Err(Error::domain(format!("missing difference curve for pair ({i}, {j})")));
            }
        }
    }
    let values: Vec<Result<f64>> = (0..points * points)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / points, k % points);
            match slot[k] {
                Some(c) if i < j => gls_norm(c, psi),
                _ => Ok(0.0),
            }
        })
        .collect();
    let mut data = vec![0.0; points * points];
    for (k, v) in values.into_iter().enumerate() {
        let (i, j) = (k / points, k % points);
        if i < j {
            let v = v?;
            data[i * points + j] = v;
            data[j * points + i] = v;
        }
    }
    DistanceMatrix::new(points, data)
}

/// `tau(p) = sup_v sup_n (p - 1) [n^-1 sum_i |xi_v(i)|_p^2]^{1/2}`: the
/// moment-bound envelope of a family of martingales, used as the psi of the
/// martingale natural distance. The supremum over `n` runs over the stored
/// horizons.
pub fn martingale_psi(tables: &[MomentTable]) -> Result<PsiFunction> {
    let first = tables.first().ok_or_else(|| Error::domain("need at least one moment table"))?;
    let grid: Vec<f64> = first.grid().iter().copied().filter(|p| *p >= 2.0).collect();
    if grid.is_empty() {
        return Err(Error::domain("moment grid has no point at or above 2"));
    }
    let mut values = Vec::with_capacity(grid.len());
    for &p in &grid {
        let mut best = 0.0f64;
        for t in tables {
            best = best.max((p - 1.0) * mixed_norm_sup_horizon(t, p, 2.0)?.value);
        }
        values.push(best);
    }
    PsiFunction::grid(f64::INFINITY, grid, values)
}

/// How an entropy profile was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileSource {
    Points,
    Model(EntropyModel),
}

/// `epsilon -> H(epsilon) = ln N(epsilon)` bracketed by an upper and a lower
/// curve. `epsilon` is strictly decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyProfile {
    pub epsilon: Vec<f64>,
    pub h_upper: Vec<f64>,
    pub h_lower: Vec<f64>,
    pub source: ProfileSource,
}

fn check_eps_grid(eps: &[f64]) -> Result<()> {
    if eps.is_empty() || !eps.iter().all(|e| *e > 0.0 && e.is_finite()) || !eps.windows(2).all(|w| w[0] > w[1]) {
        return Err(Error::domain("epsilon grid must be positive and strictly decreasing"));
    }
    Ok(())
}

/// Farthest-point traversal from index 0 (ties to the lowest index).
/// Returns the insertion radius of every point in traversal order; the
/// first is `+inf`.
fn farthest_point_radii(d: &DistanceMatrix) -> Vec<f64> {
    let n = d.size();
    let mut dist: Vec<f64> = (0..n).map(|j| d.get(0, j)).collect();
    let mut used = vec![false; n];
    used[0] = true;
    let mut radii = vec![f64::INFINITY];
    for _ in 1..n {
        let mut best = (usize::MAX, -1.0f64);
        for j in 0..n {
            if !used[j] && dist[j] > best.1 {
                best = (j, dist[j]);
            }
        }
        let (c, r) = best;
        used[c] = true;
        radii.push(r);
        for j in 0..n {
            dist[j] = dist[j].min(d.get(c, j));
        }
    }
    radii
}

/// Size of a maximal set with pairwise distances `> sep`, built greedily in
/// index order.
fn greedy_packing(d: &DistanceMatrix, sep: f64) -> usize {
    let mut chosen: Vec<usize> = Vec::new();
    for i in 0..d.size() {
        if chosen.iter().all(|&c| d.get(i, c) > sep) {
            chosen.push(i);
        }
    }
    chosen.len()
}

/// Brackets `H(epsilon)` for the finite set described by `d`.
///
/// Upper: the number of farthest-point centres needed before every point
/// lies within `epsilon` of one (a valid covering by closed balls).
/// Lower: a maximal packing with pairwise distances `> 2 epsilon`, whose
/// points need distinct closed `epsilon`-balls.
pub fn covering_entropy(d: &DistanceMatrix, eps: &[f64]) -> Result<EntropyProfile> {
    if d.size() == 0 {
        return Err(Error::domain("cannot cover an empty set"));
    }
    check_eps_grid(eps)?;
    let radii = farthest_point_radii(d);
    let h_upper: Vec<f64> = eps
        .iter()
        .map(|&e| {
            let centres = 1 + radii[1..].iter().take_while(|&&r| r > e).count();
            (centres as f64).ln()
        })
        .collect();
    let h_lower: Vec<f64> = eps.par_iter().map(|&e| (greedy_packing(d, 2.0 * e) as f64).ln()).collect();
    Ok(EntropyProfile { epsilon: eps.to_vec(), h_upper, h_lower, source: ProfileSource::Points })
}

impl EntropyProfile {
    /// Profile of an analytic model; both curves equal the model.
    pub fn from_model(model: &EntropyModel, eps: &[f64]) -> Result<Self> {
        check_eps_grid(eps)?;
        model.validate()?;
        let h: Vec<f64> = eps.iter().map(|&e| model.h(e)).collect();
        Ok(EntropyProfile { epsilon: eps.to_vec(), h_upper: h.clone(), h_lower: h, source: ProfileSource::Model(*model) })
    }

    /// Both curves nonnegative and nonincreasing in `epsilon`, upper above
    /// lower.
    pub fn is_consistent(&self) -> bool {
        let mono = |h: &[f64]| h.windows(2).all(|w| w[0] <= w[1] + 1e-12);
        self.h_upper.iter().chain(&self.h_lower).all(|h| *h >= 0.0)
            && mono(&self.h_upper)
            && mono(&self.h_lower)
            && self.h_upper.iter().zip(&self.h_lower).all(|(u, l)| u >= l)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["epsilon", "H_upper", "H_lower"])?;
        for k in 0..self.epsilon.len() {
            wr.write_record([self.epsilon[k].to_string(), self.h_upper[k].to_string(), self.h_lower[k].to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["epsilon", "H_upper", "H_lower"] {
            return Err(Error::format("entropy profile CSV needs header epsilon,H_upper,H_lower"));
        }
        let (mut eps, mut up, mut lo) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rd.records() {
            let rec = rec?;
            let field = |k: usize| crate::gls::parse_f64(&rec[k]);
            eps.push(field(0)?);
            up.push(field(1)?);
            lo.push(field(2)?);
        }
        check_eps_grid(&eps)?;
        Ok(EntropyProfile { epsilon: eps, h_upper: up, h_lower: lo, source: ProfileSource::Points })
    }
}

/// Analytic entropy growth near `epsilon = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum EntropyModel {
    /// `H = h`.
    Constant { h: f64 },
    /// `H = a ln(1/epsilon) + b`, i.e. `N = e^b epsilon^-a`.
    Log { a: f64, b: f64 },
    /// `H = c epsilon^-gamma`.
    Power { c: f64, gamma: f64 },
}

impl EntropyModel {
    /// `N(z) = z^{-d/alpha}`: the covering numbers of a `d`-dimensional set
    /// under an `alpha`-Hölder distance.
    pub fn holder(d: u32, alpha: f64) -> Self {
        EntropyModel::Log { a: f64::from(d) / alpha, b: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            EntropyModel::Constant { h } => h >= 0.0 && h.is_finite(),
            EntropyModel::Log { a, b } => a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite(),
            EntropyModel::Power { c, gamma } => c >= 0.0 && gamma > 0.0 && c.is_finite() && gamma.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("entropy model {self:?} must have finite nonnegative coefficients")))
        }
    }

    pub fn h(&self, eps: f64) -> f64 {
        self.h_at_t(-eps.ln())
    }

    /// `H(e^-t)`.
    fn h_at_t(&self, t: f64) -> f64 {
        match *self {
            EntropyModel::Constant { h } => h,
            EntropyModel::Log { a, b } => a * t + b,
            EntropyModel::Power { c, gamma } => c * (gamma * t).exp(),
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            EntropyModel::Constant { h } => format!("H = {h}"),
            EntropyModel::Log { a, b } => format!("H = {a} ln(1/eps) + {b}"),
            EntropyModel::Power { c, gamma } => format!("H = {c} eps^-{gamma}"),
        }
    }
}

/// Outcome of an integral criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    Converges,
    Diverges,
    /// The data do not determine the behaviour near `epsilon = 0`.
    Inconclusive,
}

/// Verdict of an integral criterion with the model it rests on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegralVerdict {
    pub criterion: String,
    pub verdict: Convergence,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<f64>,
    pub model: String,
    /// `[epsilon_min, epsilon_max]` of the points a fitted model rests on.
    pub fit_window: Option<[f64; 2]>,
    /// RMS residual of the fitted model on its window.
    pub residual: Option<f64>,
    /// What a finite integral yields, stated as a consequence of the
    /// criterion rather than a checked fact.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub implication: Option<String>,
}

/// An entropy curve as an integral criterion consumes it.
#[derive(Debug, Clone, Copy)]
pub enum EntropySource<'a> {
    Model(EntropyModel),
    Profile(&'a EntropyProfile),
}

/// Model fitted to the small-`epsilon` end of a profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedModel {
    pub model: EntropyModel,
    pub window: [f64; 2],
    pub residual: f64,
}

/// Fits the log and power families to the smaller-`epsilon` half of the
/// upper curve (at least three points) and keeps the one with the smaller
/// RMS residual. A curve that vanishes there is the constant 0.
pub fn fit_entropy_model(profile: &EntropyProfile) -> Option<FittedModel> {
    let k = profile.epsilon.len();
    let take = (k / 2).max(3);
    if k < 3 {
        return None;
    }
    let start = k - take.min(k);
    let eps = &profile.epsilon[start..];
    let h = &profile.h_upper[start..];
    let window = [eps[eps.len() - 1], eps[0]];
    if h.iter().all(|x| *x == 0.0) {
        return Some(FittedModel { model: EntropyModel::Constant { h: 0.0 }, window, residual: 0.0 });
    }
    let t: Vec<f64> = eps.iter().map(|e| -e.ln()).collect();
    let rms = |m: &EntropyModel| {
        (t.iter().zip(h).map(|(t, h)| (m.h_at_t(*t) - h).powi(2)).sum::<f64>() / t.len() as f64).sqrt()
    };
    let mut candidates = Vec::new();
    if let Some(f) = fit_line(&t, h) {
        let m = EntropyModel::Log { a: f.slope.max(0.0), b: f.intercept.max(0.0) };
        candidates.push(m);
    }
    let pos: Vec<(f64, f64)> = t.iter().zip(h).filter(|(_, h)| **h > 0.0).map(|(t, h)| (*t, h.ln())).collect();
    if pos.len() >= 3 {
        let (pt, ph): (Vec<f64>, Vec<f64>) = pos.into_iter().unzip();
        if let Some(f) = fit_line(&pt, &ph) {
            if f.slope > 0.0 {
                candidates.push(EntropyModel::Power { c: f.intercept.exp(), gamma: f.slope });
            }
        }
    }
    candidates
        .into_iter()
        .map(|m| (rms(&m), m))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(residual, model)| FittedModel { model, window, residual })
}

/// The function `F` of a criterion `int_0^1 F(H(epsilon)) d epsilon`, with
/// the analytic convergence test on each model family.
trait Criterion {
    fn name(&self) -> String;
    /// `ln F(H)`.
    fn ln_integrand(&self, h: f64) -> Result<f64>;
    fn converges(&self, model: &EntropyModel) -> bool;
    fn implication(&self) -> Option<String> {
        None
    }
}

struct Dudley;

impl Criterion for Dudley {
    fn name(&self) -> String {
        "dudley".into()
    }
    fn ln_integrand(&self, h: f64) -> Result<f64> {
        Ok(0.5 * h.ln())
    }
    fn converges(&self, model: &EntropyModel) -> bool {
        match *model {
            EntropyModel::Constant { .. } | EntropyModel::Log { .. } => true,
            EntropyModel::Power { c, gamma } => c == 0.0 || gamma < 2.0,
        }
    }
    fn implication(&self) -> Option<String> {
        Some("finite entropy integral: a Gaussian field with this natural distance has continuous paths".into())
    }
}

struct Pisier {
    r: f64,
}

impl Criterion for Pisier {
    fn name(&self) -> String {
        format!("pisier(r = {})", self.r)
    }
    fn ln_integrand(&self, h: f64) -> Result<f64> {
        Ok(h / self.r)
    }
    fn converges(&self, model: &EntropyModel) -> bool {
        match *model {
            EntropyModel::Constant { .. } => true,
            EntropyModel::Log { a, .. } => a / self.r < 1.0,
            EntropyModel::Power { c, .. } => c == 0.0,
        }
    }
    fn implication(&self) -> Option<String> {
        Some(format!("finite entropy integral: the L_{} moment-increment condition yields continuous paths", self.r))
    }
}

struct Gls<'a> {
    psi: &'a PsiFunction,
}

impl Criterion for Gls<'_> {
    fn name(&self) -> String {
        "gls".into()
    }
    fn ln_integrand(&self, h: f64) -> Result<f64> {
        psi_lower_transform(self.psi, std::f64::consts::LN_2 + h)
    }
    fn converges(&self, model: &EntropyModel) -> bool {
        // psi_*(x) grows like x / p_max, so finite support behaves like the
        // Pisier criterion at r = p_max and unbounded support like Dudley.
        let (_, p_max) = self.psi.finite_support();
        if p_max.is_finite() {
            Pisier { r: p_max }.converges(model)
        } else {
            Dudley.converges(model)
        }
    }
    fn implication(&self) -> Option<String> {
        Some("finite entropy integral: sample-path continuity and the GLS bound on the supremum follow, given weak compactness at one point".into())
    }
}

const SEGMENT_LIMIT: usize = 24;

/// `int_{t0}^inf F(H(e^-t)) e^-t dt` over doubling segments, stopping once a
/// segment adds less than `1e-13` of the running total.
fn model_integral(c: &dyn Criterion, model: &EntropyModel, t0: f64) -> Result<(f64, f64)> {
    let g = |t: f64| -> f64 {
        let h = model.h_at_t(t);
        match c.ln_integrand(h) {
            Ok(l) => (l - t).exp(),
            Err(_) => f64::NAN,
        }
    };
    c.ln_integrand(model.h_at_t(t0))?;
    let (mut total, mut err) = (0.0, 0.0);
    let mut lo = t0;
    let mut width = 1.0;
    for k in 0..SEGMENT_LIMIT {
        let hi = lo + width;
        let q = integrate(g, lo, hi, 1e-15, 1e-12, 2000);
        if !q.value.is_finite() {
            return Err(Error::domain("integrand is not finite on the model"));
        }
        total += q.value;
        err += q.error;
        if k >= 3 && q.value.abs() <= 1e-13 * total.abs().max(1e-300) {
            return Ok((total, err));
        }
        lo = hi;
        width *= 2.0;
    }
    Ok((total, err))
}

/// Integral of the criterion over `[eps_min, 1]` from the upper curve,
/// treated as a step function (nonincreasing integrand). Returns the
/// midpoint of the lower and upper sums and half their gap.
fn profile_integral(c: &dyn Criterion, profile: &EntropyProfile) -> Result<(f64, f64)> {
    let f = |h: f64| c.ln_integrand(h).map(f64::exp);
    let mut nodes: Vec<(f64, f64)> = profile
        .epsilon
        .iter()
        .zip(&profile.h_upper)
        .filter(|(e, _)| **e <= 1.0)
        .map(|(e, h)| (*e, *h))
        .collect();
    if nodes.first().is_none_or(|n| n.0 < 1.0) {
        let above = profile.epsilon.iter().position(|e| *e <= 1.0).map_or(profile.h_upper.len(), |k| k);
        let h1 = if above == 0 { profile.h_upper[0] } else { profile.h_upper[above - 1] };
        nodes.insert(0, (1.0, h1));
    }
    let (mut lower, mut upper) = (0.0, 0.0);
    for w in nodes.windows(2) {
        let (e_hi, h_hi) = w[0];
        let (e_lo, h_lo) = w[1];
        let width = e_hi - e_lo;
        lower += width * f(h_hi)?;
        upper += width * f(h_lo)?;
    }
    Ok((0.5 * (lower + upper), 0.5 * (upper - lower)))
}

fn decide(c: &dyn Criterion, source: EntropySource) -> Result<IntegralVerdict> {
    let (model, fit, grid_part, t0) = match source {
        EntropySource::Model(m) => {
            m.validate()?;
            (Some(m), None, None, 0.0)
        }
        EntropySource::Profile(p) => {
            let fit = fit_entropy_model(p);
            let eps_min = p.epsilon[p.epsilon.len() - 1];
            let grid = if eps_min < 1.0 { Some(profile_integral(c, p)?) } else { None };
            (fit.map(|f| f.model), fit, grid, (-eps_min.ln()).max(0.0))
        }
    };
    let mut out = IntegralVerdict {
        criterion: c.name(),
        verdict: Convergence::Inconclusive,
        value: grid_part.map(|g| g.0),
        error: grid_part.map(|g| g.1),
        model: model.map_or_else(|| "none: too few points to fit".into(), |m| m.describe()),
        fit_window: fit.map(|f| f.window),
        residual: fit.map(|f| f.residual),
        implication: None,
    };
    let Some(model) = model else { return Ok(out) };
    if !c.converges(&model) {
        out.verdict = Convergence::Diverges;
        out.value = None;
        out.error = None;
        return Ok(out);
    }
    let (head, head_err) = model_integral(c, &model, t0)?;
    let (g, ge) = grid_part.unwrap_or((0.0, 0.0));
    out.verdict = Convergence::Converges;
    out.value = Some(g + head);
    out.error = Some(ge + head_err);
    out.implication = c.implication();
    Ok(out)
}

/// `int_0^1 exp(psi_*(ln 2 + H(epsilon))) d epsilon`.
pub fn integral_gls(psi: &PsiFunction, source: EntropySource) -> Result<IntegralVerdict> {
    decide(&Gls { psi }, source)
}

/// The integrand `exp(psi_*(ln 2 + H))` of [`integral_gls`].
pub fn gls_integrand(psi: &PsiFunction, h: f64) -> Result<f64> {
    Gls { psi }.ln_integrand(h).map(f64::exp)
}

/// `int_0^1 N(z)^{1/r} dz`.
pub fn integral_pisier(source: EntropySource, r: f64) -> Result<IntegralVerdict> {
    if !(r >= 1.0) || !r.is_finite() {
        return Err(Error::domain("Pisier criterion needs a finite r >= 1"));
    }
    decide(&Pisier { r }, source)
}

/// `int_0^1 H(epsilon)^{1/2} d epsilon`.
pub fn integral_dudley(source: EntropySource) -> Result<IntegralVerdict> {
    decide(&Dudley, source)
}

/// Whether `r > d / alpha`: the moment exponent `r` makes the Pisier
/// integral converge on a `d`-dimensional `alpha`-Hölder parameter set.
pub fn holder_condition(d: u32, alpha: f64, r: f64) -> Result<bool> {
    if d == 0 || !(alpha > 0.0 && alpha <= 1.0) || !(r >= 1.0) {
        return Err(Error::domain("holder_condition needs d >= 1, alpha in (0, 1] and r >= 1"));
    }
    Ok(r > f64::from(d) / alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::gaussian_abs_norm;
    use proptest::prelude::*;

    fn line_points(k: u32) -> DistanceMatrix {
        let m = 1usize << k;
        let pts: Vec<Vec<f64>> = (0..m).map(|i| vec![i as f64 / (m - 1) as f64]).collect();
        DistanceMatrix::euclidean(&pts).unwrap()
    }

    #[test]
    fn single_point_has_zero_entropy() {
        let d = DistanceMatrix::new(1, vec![0.0]).unwrap();
        let prof = covering_entropy(&d, &[1.0, 0.1, 0.01]).unwrap();
        assert!(prof.h_upper.iter().chain(&prof.h_lower).all(|h| *h == 0.0));
    }

    #[test]
    fn grid_covering_is_bracketed_by_interval_arithmetic() {
        let d = line_points(8);
        let eps: Vec<f64> = (1..=6).map(|j| 0.5f64.powi(j)).collect();
        let prof = covering_entropy(&d, &eps).unwrap();
        assert!(prof.is_consistent());
        for (j, k) in (1..=6).zip(0..) {
            let up = prof.h_upper[k].exp().round();
            let lo = prof.h_lower[k].exp().round();
            let (min, max) = (2f64.powi(j - 1), 2f64.powi(j) + 1.0);
            assert!(lo >= min && lo <= max, "j = {j}: lower {lo}");
            assert!(up >= min && up <= max, "j = {j}: upper {up}");
        }
    }

    #[test]
    fn entropy_vanishes_beyond_the_diameter() {
        let d = line_points(4);
        let prof = covering_entropy(&d, &[1.5, 1.0]).unwrap();
        assert_eq!(prof.h_upper, vec![0.0, 0.0]);
    }

    #[test]
    fn identical_points_are_at_distance_zero() {
        let grid = vec![2.0, 4.0, 8.0];
        let zero = MomentCurve::constant(&grid, 0.0).unwrap();
        let d = natural_distance(2, &[PairCurve { i: 0, j: 1, curve: zero }], &PsiFunction::Sub2).unwrap();
        assert_eq!(d.get(0, 1), 0.0);
    }

    #[test]
    fn independent_gaussians_scale_by_sqrt_two() {
        let grid = crate::gls::default_p_grid();
        let unit = gls_norm(&MomentCurve::gaussian(&grid, 1.0).unwrap(), &PsiFunction::Sub2).unwrap();
        let diff = MomentCurve::gaussian(&grid, 2f64.sqrt()).unwrap();
        let d = natural_distance(2, &[PairCurve { i: 1, j: 0, curve: diff }], &PsiFunction::Sub2).unwrap();
        assert!((d.get(0, 1) - 2f64.sqrt() * unit).abs() < 1e-12);
        // the supremum sits at p = 2: sqrt(2) |Z|_2 / sqrt(2)
        assert!((d.get(1, 0) - gaussian_abs_norm(2.0)).abs() < 1e-12);
    }

    #[test]
    fn missing_pair_is_a_domain_error() {
        let c = MomentCurve::constant(&[2.0, 4.0], 1.0).unwrap();
        let err = natural_distance(3, &[PairCurve { i: 0, j: 1, curve: c }], &PsiFunction::Sub2).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn martingale_psi_is_p_minus_one_for_rademacher() {
        let grid = vec![2.0, 3.0, 5.0];
        let t = MomentTable::constant(&grid, 4, 1.0).unwrap();
        let psi = martingale_psi(&[t]).unwrap();
        for p in grid {
            assert!((psi.eval(p) - (p - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_entropy_gives_constant_integrand() {
        let v = integral_gls(&PsiFunction::Sub2, EntropySource::Model(EntropyModel::Constant { h: 0.0 })).unwrap();
        let expected = psi_lower_transform(&PsiFunction::Sub2, std::f64::consts::LN_2).unwrap().exp();
        assert_eq!(v.verdict, Convergence::Converges);
        assert!((v.value.unwrap() - expected).abs() < 1e-10);
    }

    #[test]
    fn dudley_on_log_entropy_is_half_sqrt_pi() {
        let v = integral_dudley(EntropySource::Model(EntropyModel::Log { a: 1.0, b: 0.0 })).unwrap();
        assert!((v.value.unwrap() - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-8);
        let z = integral_dudley(EntropySource::Model(EntropyModel::Constant { h: 0.0 })).unwrap();
        assert_eq!(z.value, Some(0.0));
        let d = integral_dudley(EntropySource::Model(EntropyModel::Power { c: 1.0, gamma: 2.0 })).unwrap();
        assert_eq!(d.verdict, Convergence::Diverges);
        let ok = integral_dudley(EntropySource::Model(EntropyModel::Power { c: 1.0, gamma: 1.5 })).unwrap();
        assert!((ok.value.unwrap() - 1.0 / (1.0 - 0.75)).abs() < 1e-6);
    }

    #[test]
    fn pisier_examples() {
        let one = integral_pisier(EntropySource::Model(EntropyModel::Constant { h: 0.0 }), 2.0).unwrap();
        assert!((one.value.unwrap() - 1.0).abs() < 1e-12);
        let two = integral_pisier(EntropySource::Model(EntropyModel::holder(1, 1.0)), 2.0).unwrap();
        assert!((two.value.unwrap() - 2.0).abs() < 1e-8);
        let div = integral_pisier(EntropySource::Model(EntropyModel::holder(2, 0.5)), 3.0).unwrap();
        assert_eq!(div.verdict, Convergence::Diverges);
    }

    #[test]
    fn gls_with_sub2_diverges_on_steep_power_entropy() {
        let v = integral_gls(&PsiFunction::Sub2, EntropySource::Model(EntropyModel::Power { c: 1.0, gamma: 2.5 })).unwrap();
        assert_eq!(v.verdict, Convergence::Diverges);
    }

    #[test]
    fn gls_with_psi_r_matches_pisier() {
        let psi = PsiFunction::psi_r(3.0).unwrap();
        for a in [1.0, 2.0, 2.9, 3.1, 5.0] {
            let m = EntropyModel::Log { a, b: 0.0 };
            let g = integral_gls(&psi, EntropySource::Model(m)).unwrap();
            let p = integral_pisier(EntropySource::Model(m), 3.0).unwrap();
            assert_eq!(g.verdict, p.verdict);
            if let (Some(gv), Some(pv)) = (g.value, p.value) {
                assert!((gv - 2f64.powf(1.0 / 3.0) * pv).abs() < 1e-8 * gv);
            }
        }
    }

    #[test]
    fn profile_of_finite_set_converges_with_fitted_model() {
        let d = line_points(6);
        let eps: Vec<f64> = (0..30).map(|j| 0.8f64.powi(j)).collect();
        let prof = covering_entropy(&d, &eps).unwrap();
        let v = integral_dudley(EntropySource::Profile(&prof)).unwrap();
        assert_eq!(v.verdict, Convergence::Converges);
        assert!(v.fit_window.is_some() && v.residual.is_some());
    }

    #[test]
    fn holder_condition_examples() {
        assert!(holder_condition(1, 1.0, 2.0).unwrap());
        assert!(!holder_condition(2, 0.5, 3.0).unwrap());
        assert!(!holder_condition(1, 0.5, 2.0).unwrap());
        assert!(holder_condition(0, 0.5, 2.0).is_err());
    }

    #[test]
    fn profile_csv_round_trip() {
        let prof = EntropyProfile::from_model(&EntropyModel::Log { a: 1.0, b: 0.5 }, &[1.0, 0.5, 0.25]).unwrap();
        let mut buf = Vec::new();
        prof.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("epsilon,H_upper,H_lower\n"));
        let back = EntropyProfile::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.h_upper, prof.h_upper);
    }

    proptest! {
        #[test]
        fn random_euclidean_matrices_are_metric(pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 2..12)) {
            let d = DistanceMatrix::euclidean(&pts).unwrap();
            prop_assert!(d.satisfies_triangle());
            let eps = [4.0, 2.0, 1.0, 0.5, 0.25];
            prop_assert!(covering_entropy(&d, &eps).unwrap().is_consistent());
        }

        #[test]
        fn gaussian_natural_distance_is_metric(sig in prop::collection::vec(0.1f64..3.0, 3..6)) {
            // eta(v) = sig[v] Z with a common Z: differences are Gaussian with
            // standard deviation |sig[i] - sig[j]|.
            let grid = crate::gls::default_p_grid();
            let m = sig.len();
            let mut pairs = Vec::new();
            for i in 0..m {
                for j in i + 1..m {
                    let curve = MomentCurve::gaussian(&grid, (sig[i] - sig[j]).abs()).unwrap();
                    pairs.push(PairCurve { i, j, curve });
                }
            }
            let d = natural_distance(m, &pairs, &PsiFunction::Sub2).unwrap();
            prop_assert!(d.satisfies_triangle());
        }
    }
}
