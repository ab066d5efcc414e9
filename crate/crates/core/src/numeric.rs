//! Small numerical kernels shared by the bound evaluators: deterministic
//! summation, adaptive quadrature, one-dimensional optimisation and a few
//! special functions.

/// Two-sided 95% normal quantile used for confidence half-widths.
pub const Z_95: f64 = 1.959_963_984_540_054;

const PAIRWISE_BLOCK: usize = 8;

/// Pairwise (cascade) summation.
///
/// The recursion splits at fixed midpoints, so the result depends only on
/// the input order, never on how work was scheduled.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BLOCK {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise sum of `f(x)` over `xs` without materialising the mapped slice
/// for short inputs.
pub fn pairwise_sum_by<F: Fn(f64) -> f64 + Copy>(xs: &[f64], f: F) -> f64 {
    if xs.len() <= PAIRWISE_BLOCK {
        let mut acc = 0.0;
        for &x in xs {
            acc += f(x);
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum_by(&xs[..mid], f) + pairwise_sum_by(&xs[mid..], f)
}

/// `n` points spaced uniformly in `ln p` on `[lo, hi]`, endpoints exact.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2, "log_grid needs 0 < lo < hi and n >= 2");
    let (a, b) = (lo.ln(), hi.ln());
    let mut out: Vec<f64> = (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
        .collect();
    out[0] = lo;
    out[n - 1] = hi;
    out
}

/// Natural log of the gamma function.
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// `|Z|_q = (E|Z|^q)^{1/q}` for a standard normal `Z`; `q = inf` gives `inf`.
pub fn gaussian_abs_norm(q: f64) -> f64 {
    if q.is_infinite() {
        return f64::INFINITY;
    }
    // E|Z|^q = 2^{q/2} Gamma((q+1)/2) / sqrt(pi)
    let ln_moment =
        0.5 * q * std::f64::consts::LN_2 + ln_gamma(0.5 * (q + 1.0)) - 0.5 * std::f64::consts::PI.ln();
    (ln_moment / q).exp()
}

/// Result of an adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    /// Estimated absolute error (sum of Gauss/Kronrod discrepancies).
    pub error: f64,
    pub converged: bool,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Globally adaptive Gauss–Kronrod (7/15) quadrature on a finite interval.
///
/// The interval with the largest error estimate is bisected until the total
/// estimate falls below `max(abs_tol, rel_tol * |value|)` or `max_intervals`
/// is reached. Selection is by lowest index on ties, so results are
/// reproducible.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Quadrature {
    if a == b {
        return Quadrature { value: 0.0, error: 0.0, converged: true };
    }
    let (v, e) = gk15(&f, a, b);
    let mut parts = vec![(a, b, v, e)];
    loop {
        let value = pairwise_sum(&parts.iter().map(|p| p.2).collect::<Vec<_>>());
        let error: f64 = parts.iter().map(|p| p.3).sum();
        let target = abs_tol.max(rel_tol * value.abs());
        if error <= target {
            return Quadrature { value, error, converged: true };
        }
        if parts.len() >= max_intervals {
            return Quadrature { value, error, converged: false };
        }
        let (worst, _) = parts
            .iter()
            .enumerate()
            .fold((0usize, -1.0f64), |best, (i, p)| if p.3 > best.1 { (i, p.3) } else { best });
        let (lo, hi, _, _) = parts[worst];
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Quadrature { value, error, converged: false };
        }
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        parts[worst] = (lo, mid, v1, e1);
        parts.insert(worst + 1, (mid, hi, v2, e2));
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimisation of `f` on `[a, b]`; returns `(x, f(x))`.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Outcome of [`grid_min`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridMin {
    pub x: f64,
    pub value: f64,
    /// Index of the best coarse-grid point (0 or `points - 1` means the
    /// minimum sat on a boundary of the search interval).
    pub grid_index: usize,
    pub points: usize,
}

/// Minimise `f` on `[lo, hi]`: uniform coarse grid, then golden-section
/// refinement on the bracket around the best grid point. Extra candidate
/// abscissae (e.g. kinks of a piecewise function) are also probed. The
/// returned value is never worse than the best probed point.
pub fn grid_min<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, points: usize, extra: &[f64]) -> GridMin {
    if hi <= lo {
        let v = f(lo);
        return GridMin { x: lo, value: v, grid_index: 0, points: 1 };
    }
    let points = points.max(3);
    let step = (hi - lo) / (points - 1) as f64;
    let mut best = (0usize, f64::INFINITY, lo);
    for k in 0..points {
        let x = if k == points - 1 { hi } else { lo + step * k as f64 };
        let v = f(x);
        if v < best.1 {
            best = (k, v, x);
        }
    }
    let (k, _, _) = best;
    let a = if k == 0 { lo } else { lo + step * (k - 1) as f64 };
    let b = if k + 1 >= points { hi } else { lo + step * (k + 1) as f64 };
    let (xr, vr) = golden_min(&f, a, b, 1e-13 * (1.0 + (hi - lo).abs()));
    let mut out = GridMin { x: best.2, value: best.1, grid_index: k, points };
    if vr < out.value {
        out.x = xr;
        out.value = vr;
    }
    for &x in extra {
        if x >= lo && x <= hi {
            let v = f(x);
            if v < out.value {
                out.x = x;
                out.value = v;
            }
        }
    }
    out
}

/// Pool-adjacent-violators fit of a nondecreasing sequence (unit weights).
/// Returns the fitted values.
pub fn isotonic_nondecreasing(values: &[f64]) -> Vec<f64> {
    // blocks of (sum, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() >= 2 {
            let (s2, c2) = blocks[blocks.len() - 1];
            let (s1, c1) = blocks[blocks.len() - 2];
            if s1 / c1 as f64 > s2 / c2 as f64 {
                blocks.pop();
                let last = blocks.len() - 1;
                blocks[last] = (s1 + s2, c1 + c2);
            } else {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (s, c) in blocks {
        let m = s / c as f64;
        out.extend(std::iter::repeat(m).take(c));
    }
    out
}

/// Least-squares line `y = intercept + slope * x` with its R².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Some(LineFit { slope, intercept, r_squared })
}
