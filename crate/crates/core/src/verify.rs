//! The verification matrix: every moment bound adjudicated against the
//! Monte Carlo oracle over a grid of orders, horizons, difference families
//! and multiplier families.

use serde::{Deserialize, Serialize};

use crate::bounds::{
    bound_martingale, bound_transform, optimize_quadruple, BoundReport, HolderQuadruple, Verdict,
    DEFAULT_VIOLATION_WIDTHS,
};
use crate::mixed_norms::MomentTable;
use crate::simulate::{summarize, CheckpointStats, Generator, MultiplierSpec, StreamSpec};
use crate::{Error, Result};

/// Relative tolerance of the tie between the optimised transform bound and
/// the bounded-multiplier quadruple on constant multipliers.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Everything a verification run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub preset: String,
    pub p_values: Vec<f64>,
    pub horizons: Vec<usize>,
    pub generators: Vec<Generator>,
    pub multipliers: Vec<MultiplierSpec>,
    pub reps: usize,
    pub seed: u64,
    /// Moment grid used for the bound inputs; must cover `alpha p` and
    /// `beta p` for the optimiser to find admissible quadruples.
    pub table_grid: Vec<f64>,
    #[serde(default = "default_widths")]
    pub violation_widths: f64,
}

fn default_widths() -> f64 {
    DEFAULT_VIOLATION_WIDTHS
}

fn default_generators() -> Vec<Generator> {
    vec![
        Generator::Rademacher,
        Generator::Gaussian { variances: vec![1.0, 0.5, 2.0] },
        Generator::TwoPointAsymmetric { up: 3.0, down: 1.0 },
        Generator::PredictableVariance { feedback: 0.5, cap: 4.0 },
    ]
}

fn default_multipliers() -> Vec<MultiplierSpec> {
    vec![
        MultiplierSpec::Constant { value: 2.0 },
        MultiplierSpec::SignOfPast,
        MultiplierSpec::ClampedRunningSum { bound: 2.0 },
        MultiplierSpec::GaussianPredictable { variances: vec![1.0] },
    ]
}

impl VerifyConfig {
    /// Named presets: `default` (the full matrix at 10^5 replicates) and
    /// `quick` (a small smoke run).
    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        let table_grid = vec![2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0, 64.0];
        match name {
            "default" => Ok(VerifyConfig {
                preset: name.into(),
                p_values: vec![2.0, 3.0, 4.0, 6.0, 8.0],
                horizons: vec![16, 256, 4096],
                generators: default_generators(),
                multipliers: default_multipliers(),
                reps: 100_000,
                seed,
                table_grid,
                violation_widths: DEFAULT_VIOLATION_WIDTHS,
            }),
            "quick" => Ok(VerifyConfig {
                preset: name.into(),
                p_values: vec![2.0, 4.0],
                horizons: vec![16, 64],
                generators: default_generators(),
                multipliers: default_multipliers(),
                reps: 2_000,
                seed,
                table_grid,
                violation_widths: DEFAULT_VIOLATION_WIDTHS,
            }),
            other => Err(Error::domain(format!("unknown preset {other:?}; expected default or quick"))),
        }
    }
}

/// Comparison of the optimised transform bound with the bounded-multiplier
/// quadruple `(inf, 1, inf, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TieCheck {
    pub optimized: f64,
    pub bounded_multipliers: f64,
    pub rel_difference: f64,
    /// The optimum neither beats nor exceeds the bounded-multiplier value
    /// beyond [`TIE_TOLERANCE`].
    pub ties: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformEntry {
    pub multiplier: String,
    pub report: BoundReport,
    pub probed: usize,
    pub excluded: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tie_check: Option<TieCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifySummary {
    pub adjudications: usize,
    pub holds: usize,
    pub violated: usize,
    pub inconclusive: usize,
    pub tie_checks: usize,
    pub tie_failures: usize,
    /// Largest monotone correction applied to an empirical moment table.
    pub max_table_correction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub config: VerifyConfig,
    pub martingale: Vec<BoundReport>,
    pub transform: Vec<TransformEntry>,
    pub summary: VerifySummary,
}

impl VerifyReport {
    pub fn any_violated(&self) -> bool {
        self.summary.violated > 0
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn norm_at(stats: &CheckpointStats, p: f64) -> (f64, Option<f64>) {
    let e = stats.norms.iter().find(|e| e.p == p).expect("p recorded in the stream");
    (e.value, e.halfwidth)
}

/// Runs the matrix on `threads` workers (`None`: the global pool). The
/// report does not depend on the worker count.
pub fn run_verify(config: &VerifyConfig, threads: Option<usize>) -> Result<VerifyReport> {
    match threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| Error::domain(format!("cannot build thread pool: {e}")))?;
            pool.install(|| run_matrix(config))
        }
        None => run_matrix(config),
    }
}

fn run_matrix(config: &VerifyConfig) -> Result<VerifyReport> {
    if config.p_values.iter().any(|p| !(*p >= 2.0)) {
        return Err(Error::domain("verification orders must be >= 2"));
    }
    let mut horizons = config.horizons.clone();
    horizons.sort_unstable();
    horizons.dedup();
    let n_max = *horizons.last().ok_or_else(|| Error::domain("need at least one horizon"))?;
    let mut martingale = Vec::new();
    let mut transform = Vec::new();
    let mut max_correction = 0.0f64;

    for (g, generator) in config.generators.iter().enumerate() {
        let spec = StreamSpec {
            generator: generator.clone(),
            checkpoints: horizons.clone(),
            reps: config.reps,
            seed: config.seed.wrapping_add(g as u64),
            multipliers: config.multipliers.clone(),
            p_values: config.p_values.clone(),
            tail_u: Vec::new(),
            table_grid: Some(config.table_grid.clone()),
        };
        let summary = summarize(&spec)?;
        let xi: MomentTable = match generator.exact_table(&config.table_grid, n_max) {
            Some(t) => t,
            None => {
                let t = summary.xi_table.clone().ok_or_else(|| Error::domain("missing empirical xi table"))?;
                max_correction = max_correction.max(t.correction);
                t.table
            }
        };
        let b_tables: Vec<MomentTable> = config
            .multipliers
            .iter()
            .zip(&summary.b_tables)
            .map(|(m, emp)| match m.exact_table(&config.table_grid, n_max) {
                Some(t) => Ok(t),
                None => {
                    let t = emp.clone().ok_or_else(|| Error::domain("missing empirical multiplier table"))?;
                    max_correction = max_correction.max(t.correction);
                    Ok(t.table)
                }
            })
            .collect::<Result<_>>()?;

        for (c, &n) in horizons.iter().enumerate() {
            for &p in &config.p_values {
                let (emp, hw) = norm_at(&summary.s[c], p);
                let bound = bound_martingale(&xi, p, n)?;
                martingale.push(BoundReport::new(
                    bound,
                    emp,
                    hw,
                    p,
                    n,
                    generator.name(),
                    spec.seed,
                    config.violation_widths,
                ));
                for (j, m) in config.multipliers.iter().enumerate() {
                    let (emp, hw) = norm_at(&summary.w[j][c], p);
                    let opt = optimize_quadruple(&b_tables[j], &xi, p, n)?;
                    let report = BoundReport::new(
                        opt.value,
                        emp,
                        hw,
                        p,
                        n,
                        format!("{}+{}", generator.name(), m.name()),
                        spec.seed,
                        config.violation_widths,
                    )
                    .with_quadruple(opt.quadruple);
                    let tie_check = match m {
                        MultiplierSpec::Constant { .. } => {
                            let reference =
                                bound_transform(&b_tables[j], &xi, p, n, &HolderQuadruple::bounded_multipliers())?;
                            let rel = (opt.value - reference).abs() / reference;
                            Some(TieCheck {
                                optimized: opt.value,
                                bounded_multipliers: reference,
                                rel_difference: rel,
                                ties: rel <= TIE_TOLERANCE,
                            })
                        }
                        _ => None,
                    };
                    transform.push(TransformEntry {
                        multiplier: m.name().into(),
                        report,
                        probed: opt.probed,
                        excluded: opt.excluded,
                        tie_check,
                    });
                }
            }
        }
    }

    let verdicts = martingale.iter().map(|r| r.verdict).chain(transform.iter().map(|t| t.report.verdict));
    let (mut holds, mut violated, mut inconclusive) = (0, 0, 0);
    for v in verdicts {
        match v {
            Verdict::Holds => holds += 1,
            Verdict::Violated => violated += 1,
            Verdict::Inconclusive => inconclusive += 1,
        }
    }
    let ties: Vec<&TieCheck> = transform.iter().filter_map(|t| t.tie_check.as_ref()).collect();
    let summary = VerifySummary {
        adjudications: holds + violated + inconclusive,
        holds,
        violated,
        inconclusive,
        tie_checks: ties.len(),
        tie_failures: ties.iter().filter(|t| !t.ties).count(),
        max_table_correction: max_correction,
    };
    Ok(VerifyReport { config: config.clone(), martingale, transform, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> VerifyConfig {
        VerifyConfig { reps: 400, horizons: vec![8, 16], p_values: vec![2.0, 3.0], ..VerifyConfig::preset("quick", 5).unwrap() }
    }

    #[test]
    fn tiny_matrix_holds_and_ties() {
        let report = run_verify(&tiny(), None).unwrap();
        let s = &report.summary;
        assert_eq!(s.adjudications, 4 * 2 * 2 * (1 + 4));
        assert_eq!(s.violated, 0);
        assert_eq!(s.inconclusive, 0);
        assert_eq!(s.tie_checks, 4 * 2 * 2);
        assert_eq!(s.tie_failures, 0);
    }

    #[test]
    fn report_is_independent_of_thread_count() {
        let cfg = VerifyConfig { generators: vec![Generator::PredictableVariance { feedback: 0.5, cap: 4.0 }], ..tiny() };
        let a = run_verify(&cfg, Some(1)).unwrap().to_json().unwrap();
        let b = run_verify(&cfg, Some(3)).unwrap().to_json().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_preset_is_rejected() {
        assert!(VerifyConfig::preset("huge", 1).is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = VerifyConfig::preset("default", 7).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: VerifyConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
