//! Mixed `L_p(Omega) x l_lambda({1..n})` norms over a family of random
//! variables, and the moment tables they are computed from.
//!
//! For a family `b(1), .., b(n)`
//!
//! ```text
//! |b|_{p,lambda} = [ n^-1 sum_i |b(i)|_p^lambda ]^{1/lambda}
//! ```
//!
//! with `lambda = inf` giving `max_i |b(i)|_p`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gls::{parse_f64, MomentCurve, PsiFunction};
use crate::numeric::{isotonic_nondecreasing, pairwise_sum, pairwise_sum_by, Z_95};
use crate::{Error, Result};

/// Per-index moment curves sharing one p-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable {
    grid: Vec<f64>,
    curves: Vec<MomentCurve>,
}

impl MomentTable {
    pub fn new(curves: Vec<MomentCurve>) -> Result<Self> {
        let first = curves.first().ok_or_else(|| Error::domain("moment table needs at least one curve"))?;
        let grid = first.p().to_vec();
        if curves.iter().any(|c| c.p() != grid.as_slice()) {
            return Err(Error::domain("all curves of a moment table must share one p-grid"));
        }
        Ok(MomentTable { grid, curves })
    }

    /// Table with entry `f(i, p)` for `i = 1..=n`.
    pub fn from_fn<F: Fn(usize, f64) -> f64>(grid: &[f64], n: usize, f: F) -> Result<Self> {
        let curves = (1..=n)
            .map(|i| MomentCurve::from_fn(grid, |p| f(i, p)))
            .collect::<Result<Vec<_>>>()?;
        MomentTable::new(curves)
    }

    /// Every entry equal to the degenerate curve `|X| = c`.
    pub fn constant(grid: &[f64], n: usize, c: f64) -> Result<Self> {
        MomentTable::new(vec![MomentCurve::constant(grid, c)?; n])
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn curves(&self) -> &[MomentCurve] {
        &self.curves
    }

    /// Number of indices stored (the horizon).
    pub fn horizon(&self) -> usize {
        self.curves.len()
    }

    /// Table restricted to the first `n` indices.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.horizon() {
            return Err(Error::domain(format!("cannot truncate a table of horizon {} to {n}", self.horizon())));
        }
        MomentTable::new(self.curves[..n].to_vec())
    }

    pub fn scaled(&self, c: f64) -> Self {
        MomentTable { grid: self.grid.clone(), curves: self.curves.iter().map(|k| k.scaled(c)).collect() }
    }

    /// Entries `|X(i)|_q` for `i <= n`, or `None` if some entry cannot be
    /// evaluated at `q`.
    pub fn column_at(&self, q: f64, n: usize) -> Option<Vec<f64>> {
        self.curves[..n].iter().map(|c| c.eval(q)).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["i", "p", "value"])?;
        for (i, c) in self.curves.iter().enumerate() {
            for (p, v) in c.p().iter().zip(c.values()) {
                wr.write_record([(i + 1).to_string(), p.to_string(), v.to_string()])?;
            }
            if let Some(s) = c.ess_sup() {
                wr.write_record([(i + 1).to_string(), "inf".to_string(), s.to_string()])?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads the `i,p,value` format; a row with `p = inf` sets the
    /// essential supremum of that index.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        if rd.headers()?.iter().collect::<Vec<_>>() != ["i", "p", "value"] {
            return Err(Error::format("moment table CSV header must be `i,p,value`"));
        }
        let mut rows: BTreeMap<usize, (Vec<(f64, f64)>, Option<f64>)> = BTreeMap::new();
        for rec in rd.records() {
            let rec = rec?;
            let i: usize = rec[0].trim().parse().map_err(|_| Error::format(format!("bad index `{}`", &rec[0])))?;
            let p = parse_f64(&rec[1])?;
            let v = parse_f64(&rec[2])?;
            let entry = rows.entry(i).or_default();
            if p.is_infinite() {
                entry.1 = Some(v);
            } else {
                entry.0.push((p, v));
            }
        }
        let expected: Vec<usize> = (1..=rows.len()).collect();
        if rows.keys().copied().collect::<Vec<_>>() != expected {
            return Err(Error::format("moment table indices must be 1..n without gaps"));
        }
        let curves = rows
            .into_values()
            .map(|(mut pts, sup)| {
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                let (p, v) = pts.into_iter().unzip();
                let c = MomentCurve::new(p, v)?;
                Ok(match sup {
                    Some(s) => c.with_ess_sup(s),
                    None => c,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MomentTable::new(curves)
    }

    pub fn load(path: &Path) -> Result<Self> {
        MomentTable::read_csv(std::fs::File::open(path)?)
    }
}

/// `[mean_i x_i^r]^{1/r}` with `r = inf` giving the maximum. Computed
/// relative to the maximum so large `r` cannot overflow.
pub fn power_mean(xs: &[f64], r: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let m = xs.iter().copied().fold(0.0, f64::max);
    if r.is_infinite() || m == 0.0 || !m.is_finite() {
        return m;
    }
    let s = pairwise_sum_by(xs, |x| (x / m).powf(r)) / xs.len() as f64;
    m * s.powf(1.0 / r)
}

/// `[n^-1 sum_{i<=n} |b(i)|_p^lambda]^{1/lambda}`.
pub fn mixed_norm(table: &MomentTable, p: f64, lambda: f64, n: usize) -> Result<f64> {
    if !(lambda >= 1.0) {
        return Err(Error::domain("mixed norm needs lambda >= 1"));
    }
    if !(p >= 1.0) {
        return Err(Error::domain("mixed norm needs p >= 1"));
    }
    if n == 0 || n > table.horizon() {
        return Err(Error::domain(format!("n = {n} outside the table horizon {}", table.horizon())));
    }
    let col = table
        .column_at(p, n)
        .ok_or_else(|| Error::domain(format!("p = {p} is not covered by the table grid")))?;
    Ok(power_mean(&col, lambda))
}

/// Supremum over `n` of [`mixed_norm`], restricted to the stored horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonSup {
    pub value: f64,
    /// Prefix length attaining the maximum (smallest on ties).
    pub n: usize,
    /// Always true: only the stored horizon was searched, so this is a
    /// lower bound of the supremum over all `n`.
    pub lower_bound: bool,
}

pub fn mixed_norm_sup_horizon(table: &MomentTable, p: f64, lambda: f64) -> Result<HorizonSup> {
    if !(lambda >= 1.0) {
        return Err(Error::domain("mixed norm needs lambda >= 1"));
    }
    let col = table
        .column_at(p, table.horizon())
        .ok_or_else(|| Error::domain(format!("p = {p} is not covered by the table grid")))?;
    let mut best = HorizonSup { value: f64::NEG_INFINITY, n: 0, lower_bound: true };
    if lambda.is_infinite() {
        let mut running = 0.0f64;
        for (k, &x) in col.iter().enumerate() {
            running = running.max(x);
            if running > best.value {
                best = HorizonSup { value: running, n: k + 1, lower_bound: true };
            }
        }
        return Ok(best);
    }
    let m = col.iter().copied().fold(0.0, f64::max);
    if m == 0.0 {
        return Ok(HorizonSup { value: 0.0, n: 1, lower_bound: true });
    }
    let mut acc = 0.0;
    for (k, &x) in col.iter().enumerate() {
        acc += (x / m).powf(lambda);
        let v = m * (acc / (k + 1) as f64).powf(1.0 / lambda);
        if v > best.value {
            best = HorizonSup { value: v, n: k + 1, lower_bound: true };
        }
    }
    Ok(best)
}

/// An empirical moment curve with its isotonic correction.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCurve {
    pub curve: MomentCurve,
    /// Largest absolute change applied by the monotone correction.
    pub correction: f64,
}

/// Single-point estimate of `|X|_p` from draws with a 95% delta-method
/// half-width (`None` below 100 draws).
pub fn empirical_norm(samples: &[f64], p: f64) -> Result<(f64, Option<f64>)> {
    if samples.len() < 2 {
        return Err(Error::domain("need at least two samples"));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("samples must be finite"));
    }
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::domain("empirical norm needs finite p >= 1"));
    }
    let scale = samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return Ok((0.0, if samples.len() >= 100 { Some(0.0) } else { None }));
    }
    let n = samples.len() as f64;
    let powered: Vec<f64> = samples.iter().map(|x| (x.abs() / scale).powf(p)).collect();
    let mean = pairwise_sum(&powered) / n;
    let value = scale * mean.powf(1.0 / p);
    let hw = if samples.len() >= 100 {
        let var = pairwise_sum_by(&powered, |v| (v - mean) * (v - mean)) / (n - 1.0);
        let se_moment = (var / n).sqrt();
        // d/dM M^{1/p} = M^{1/p - 1} / p
        Some(Z_95 * scale * mean.powf(1.0 / p - 1.0) / p * se_moment)
    } else {
        None
    };
    Ok((value, hw))
}

/// Estimate `p -> |X|_p` on `grid` from draws of `X`, then project the
/// values onto nondecreasing sequences (pool-adjacent-violators).
pub fn empirical_moment_curve(samples: &[f64], grid: &[f64]) -> Result<EmpiricalCurve> {
    let mut raw = Vec::with_capacity(grid.len());
    let mut hws = Vec::with_capacity(grid.len());
    for &p in grid {
        let (v, hw) = empirical_norm(samples, p)?;
        raw.push(v);
        hws.push(hw);
    }
    let fitted = isotonic_nondecreasing(&raw);
    let correction = raw.iter().zip(&fitted).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let sup = samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut curve = MomentCurve::new(grid.to_vec(), fitted)?.with_ess_sup(sup);
    if hws.iter().all(Option::is_some) {
        curve = curve.with_halfwidths(hws.into_iter().map(Option::unwrap).collect())?;
    }
    Ok(EmpiricalCurve { curve, correction })
}

/// Natural function of a family: the pointwise supremum of its moment
/// curves, restricted to `p >= 2`.
pub fn natural_function(curves: &[MomentCurve]) -> Result<PsiFunction> {
    let first = curves.first().ok_or_else(|| Error::domain("natural function of an empty family"))?;
    if curves.iter().any(|c| c.p() != first.p()) {
        return Err(Error::domain("natural function needs curves on a shared p-grid"));
    }
    let mut p = Vec::new();
    let mut values = Vec::new();
    for (k, &x) in first.p().iter().enumerate() {
        if x < 2.0 {
            continue;
        }
        p.push(x);
        values.push(curves.iter().map(|c| c.values()[k]).fold(f64::NEG_INFINITY, f64::max));
    }
    if p.is_empty() {
        return Err(Error::domain("curves have no grid point at p >= 2"));
    }
    PsiFunction::grid(f64::INFINITY, p, values)
}

/// Sidecar metadata of a [`SampleMatrix`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub generator: String,
}

/// `reps x n` draws of one index family, row-major (one row per replicate).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    meta: SampleMeta,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn new(meta: SampleMeta, data: Vec<f64>) -> Result<Self> {
        if meta.reps < 2 {
            return Err(Error::domain("sample matrix needs reps >= 2"));
        }
        if data.len() != meta.reps * meta.n {
            return Err(Error::domain("sample matrix data length must be reps * n"));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("sample matrix entries must be finite"));
        }
        Ok(SampleMatrix { meta, data })
    }

    pub fn meta(&self) -> &SampleMeta {
        &self.meta
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.meta.n..(r + 1) * self.meta.n]
    }

    /// Draws of index `i` (0-based) across replicates.
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.data.iter().skip(i).step_by(self.meta.n).copied().collect()
    }

    /// Empirical moment table of all columns; returns the table and the
    /// largest isotonic correction applied to any column.
    pub fn moment_table(&self, grid: &[f64]) -> Result<(MomentTable, f64)> {
        let cols: Vec<EmpiricalCurve> = (0..self.meta.n)
            .into_par_iter()
            .map(|i| empirical_moment_curve(&self.column(i), grid))
            .collect::<Result<_>>()?;
        let correction = cols.iter().map(|c| c.correction).fold(0.0, f64::max);
        Ok((MomentTable::new(cols.into_iter().map(|c| c.curve).collect())?, correction))
    }

    /// Writes little-endian `f64`s to `path` and the JSON sidecar next to
    /// it (same stem, `.json` extension).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.data.len() * 8);
        for x in &self.data {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        std::fs::write(path, bytes)?;
        std::fs::write(path.with_extension("json"), serde_json::to_string_pretty(&self.meta)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let meta: SampleMeta = serde_json::from_str(&std::fs::read_to_string(path.with_extension("json"))?)?;
        let bytes = std::fs::read(path)?;
        if bytes.len() % 8 != 0 {
            return Err(Error::format("sample matrix file length is not a multiple of 8"));
        }
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        SampleMatrix::new(meta, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> Vec<f64> {
        vec![2.0, 3.0, 4.0, 6.0, 8.0]
    }

    #[test]
    fn unit_table_has_unit_norm() {
        let t = MomentTable::constant(&grid(), 5, 1.0).unwrap();
        for lambda in [1.0, 2.0, 7.5, f64::INFINITY] {
            assert_eq!(mixed_norm(&t, 3.0, lambda, 5).unwrap(), 1.0);
        }
    }

    #[test]
    fn two_term_example() {
        let t = MomentTable::from_fn(&grid(), 2, |i, _| if i == 1 { 0.0 } else { 2.0 }).unwrap();
        assert!((mixed_norm(&t, 2.0, 2.0, 2).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mixed_norm(&t, 2.0, f64::INFINITY, 2).unwrap(), 2.0);
    }

    #[test]
    fn mixed_norm_domain_errors() {
        let t = MomentTable::constant(&grid(), 3, 1.0).unwrap();
        assert!(mixed_norm(&t, 2.0, 0.5, 3).is_err());
        assert!(mixed_norm(&t, 2.0, 2.0, 4).is_err());
        assert!(mixed_norm(&t, 2.0, 2.0, 0).is_err());
        assert!(mixed_norm(&t, 100.0, 2.0, 3).is_err());
        assert!(MomentTable::new(vec![]).is_err());
    }

    #[test]
    fn horizon_sup_is_labelled_lower_bound() {
        let t = MomentTable::from_fn(&grid(), 4, |i, _| [1.0, 5.0, 1.0, 1.0][i - 1]).unwrap();
        let s = mixed_norm_sup_horizon(&t, 2.0, 2.0).unwrap();
        assert_eq!(s.n, 2);
        assert!((s.value - 13f64.sqrt()).abs() < 1e-12);
        assert!(s.lower_bound);
    }

    #[test]
    fn rademacher_and_constant_samples() {
        let rad: Vec<f64> = (0..1000).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let c = empirical_moment_curve(&rad, &grid()).unwrap();
        assert!(c.curve.values().iter().all(|v| (v - 1.0).abs() < 1e-14));
        let two = vec![2.0; 200];
        let c = empirical_moment_curve(&two, &grid()).unwrap();
        assert!(c.curve.values().iter().all(|&v| v == 2.0));
        assert_eq!(c.correction, 0.0);
    }

    #[test]
    fn non_finite_samples_rejected() {
        assert!(empirical_moment_curve(&[1.0, f64::NAN, 2.0], &grid()).is_err());
    }

    #[test]
    fn natural_function_is_pointwise_max() {
        let g = grid();
        let a = MomentCurve::from_fn(&g, f64::sqrt).unwrap();
        let b = MomentCurve::constant(&g, 1.0).unwrap();
        let psi = natural_function(&[a.clone(), b]).unwrap();
        for &p in &g {
            assert_eq!(psi.eval(p), p.sqrt());
        }
        let single = natural_function(&[a.clone()]).unwrap();
        assert_eq!(single.eval(4.0), 2.0);
        assert!(natural_function(&[]).is_err());
    }

    #[test]
    fn table_csv_round_trip_keeps_ess_sup() {
        let t = MomentTable::new(vec![
            MomentCurve::constant(&grid(), 2.0).unwrap(),
            MomentCurve::gaussian(&grid(), 1.5).unwrap(),
        ])
        .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = MomentTable::read_csv(&buf[..]).unwrap();
        assert_eq!(back.curves()[0].ess_sup(), Some(2.0));
        assert_eq!(back.curves()[1].ess_sup(), Some(f64::INFINITY));
        assert_eq!(back.curves()[1].values(), t.curves()[1].values());
    }

    #[test]
    fn sample_matrix_binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let meta = SampleMeta { n: 3, reps: 2, seed: 9, generator: "test".into() };
        let m = SampleMatrix::new(meta, vec![1.0, -2.0, 3.5, 0.25, 1e-300, -7.0]).unwrap();
        let path = dir.path().join("xi.bin");
        m.save(&path).unwrap();
        assert_eq!(SampleMatrix::load(&path).unwrap(), m);
        assert_eq!(m.column(1), vec![-2.0, 1e-300]);
    }

    fn random_table() -> impl Strategy<Value = MomentTable> {
        (1usize..12).prop_flat_map(|n| {
            proptest::collection::vec((0.1f64..5.0, 0.0f64..0.5), n).prop_map(|rows| {
                MomentTable::new(
                    rows.into_iter()
                        .map(|(base, slope)| MomentCurve::from_fn(&grid(), |p| base * (1.0 + slope * (p - 2.0))).unwrap())
                        .collect(),
                )
                .unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn matches_reversed_brute_force(t in random_table(), lambda in 1.0f64..9.0, pi in 0usize..5) {
            let p = grid()[pi];
            let n = t.horizon();
            let got = mixed_norm(&t, p, lambda, n).unwrap();
            let mut acc = 0.0;
            for c in t.curves().iter().rev() {
                acc += c.eval(p).unwrap().powf(lambda);
            }
            let want = (acc / n as f64).powf(1.0 / lambda);
            prop_assert!((got - want).abs() <= 1e-12 * want.max(1e-300));
        }

        #[test]
        fn power_mean_ordering(t in random_table(), l1 in 1.0f64..6.0, dl in 0.0f64..6.0) {
            let n = t.horizon();
            let a = mixed_norm(&t, 3.0, l1, n).unwrap();
            let b = mixed_norm(&t, 3.0, l1 + dl, n).unwrap();
            let c = mixed_norm(&t, 3.0, f64::INFINITY, n).unwrap();
            prop_assert!(a <= b * (1.0 + 1e-12));
            prop_assert!(b <= c * (1.0 + 1e-12));
        }

        #[test]
        fn permutation_and_scaling(t in random_table(), c in 0.01f64..100.0, lambda in 1.0f64..8.0) {
            let n = t.horizon();
            let mut rev = t.curves().to_vec();
            rev.reverse();
            let r = MomentTable::new(rev).unwrap();
            let base = mixed_norm(&t, 4.0, lambda, n).unwrap();
            prop_assert!((mixed_norm(&r, 4.0, lambda, n).unwrap() - base).abs() <= 1e-12 * base);
            let s = mixed_norm(&t.scaled(c), 4.0, lambda, n).unwrap();
            prop_assert!((s - c * base).abs() <= 1e-12 * c * base);
        }

        #[test]
        fn nondecreasing_in_p(t in random_table(), lambda in 1.0f64..8.0) {
            let n = t.horizon();
            let vals: Vec<f64> = grid().iter().map(|&p| mixed_norm(&t, p, lambda, n).unwrap()).collect();
            prop_assert!(vals.windows(2).all(|w| w[0] <= w[1] * (1.0 + 1e-12)));
        }

        #[test]
        fn natural_function_matches_brute_max(t in random_table()) {
            let psi = natural_function(t.curves()).unwrap();
            for &p in &grid() {
                let mut m = f64::NEG_INFINITY;
                for c in t.curves() {
                    m = m.max(c.eval(p).unwrap());
                }
                prop_assert_eq!(psi.eval(p), m);
            }
        }
    }
}
