//! Multi-seed experiments, log-log rate fits and the named checks that turn
//! the convergence statements into pass/fail numbers.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::averaging::{self, StreamingAverage};
use crate::birr::{birr_exponent_check, birr_run};
use crate::config::{Method, RunConfig};
use crate::engine::{self, StepsizeSchedule, Trajectory};
use crate::linalg::{self, CompensatedSum, Vector};
use crate::objective::{self, FiniteSumProblem};
use crate::oracles;
use crate::{Error, Result};

/// Tolerances and experiment sizes shared by the checks.
pub mod thresholds {
    pub const VERSION: &str = "1";

    pub const SEEDS: u64 = 20;
    pub const LONG_RUN: usize = 100_000;
    pub const FIT_WINDOW_START: f64 = 1e3;

    pub const PERMUTATION_MEAN_ABS: f64 = 1e-12;
    pub const RESIDUAL_RATIO_MAX_SLOPE: f64 = 0.05;
    pub const RESIDUAL_RATIO_WINDOW: usize = 100;
    pub const LIMIT_REL: f64 = 0.10;
    pub const LIMIT_ABS: f64 = 0.02;
    pub const LIMIT_PAIRS: [(f64, f64); 3] = [(1.0, 0.75), (0.5, 0.75), (0.5, 0.6)];
    pub const RR_F_GAP_SLOPE: (f64, f64) = (-1.7, -1.3);
    pub const SGD_F_GAP_MIN_SLOPE: f64 = -1.2;
    pub const ENVELOPE_SLACK: f64 = 1.5;
    pub const BIRR_DIST_MAX_SLOPE: f64 = -0.85;
    pub const BIRR_F_GAP_MAX_SLOPE: f64 = -1.7;
    pub const BIRR_WIN_FRACTION: f64 = 0.8;
    pub const BIRR_Q: f64 = 0.5;
    pub const BIRR_K_GRID: [usize; 5] = [1_000, 3_162, 10_000, 31_623, 100_000];
    pub const STREAMING_REL: f64 = 1e-12;
    pub const SUFFIX_REL: f64 = 1e-10;
    pub const AVERAGING_CASES: usize = 1000;
    pub const INCREMENT_MAX_SLOPE: f64 = 0.05;
    pub const INCREMENT_POINTS: usize = 9;
    pub const ZETA_CYCLES: usize = 10_000_000;
    pub const ZETA_REL: f64 = 1e-3;
}

pub const MIN_FIT_POINTS: usize = 5;
pub const MIN_FIT_DECADES: f64 = 1.5;

/// Least-squares fit of `log y = intercept + slope · log k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub n_points: usize,
}

/// Fits the points with `k` inside `window`. Non-positive or non-finite
/// values are dropped with a warning and the window shrinks to the points
/// kept; fewer than [`MIN_FIT_POINTS`] points or less than
/// [`MIN_FIT_DECADES`] of span is an error.
pub fn fit_rate(ks: &[f64], values: &[f64], window: (f64, f64)) -> Result<RateFit> {
    if ks.len() != values.len() {
        return Err(Error::InvalidInput(format!(
            "{} abscissae for {} values",
            ks.len(),
            values.len()
        )));
    }
    let (lo, hi) = window;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut dropped = 0;
    for (&k, &y) in ks.iter().zip(values) {
        if !(k >= lo && k <= hi) {
            continue;
        }
        if k > 0.0 && y > 0.0 && y.is_finite() {
            xs.push(k.ln());
            ys.push(y.ln());
        } else {
            dropped += 1;
        }
    }
    if dropped > 0 {
        log::warn!("fit_rate: dropped {dropped} non-positive values inside [{lo}, {hi}]");
    }
    if xs.len() < MIN_FIT_POINTS {
        return Err(Error::TooFewPoints {
            needed: MIN_FIT_POINTS,
            got: xs.len(),
        });
    }
    let x_min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let x_max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let decades = (x_max - x_min) / std::f64::consts::LN_10;
    if decades < MIN_FIT_DECADES - 1e-9 {
        return Err(Error::InvalidInput(format!(
            "fit points span {decades:.3} decades, need {MIN_FIT_DECADES}"
        )));
    }
    // Centre on the first point so constant data gives exactly zero slope.
    let (x0, y0) = (xs[0], ys[0]);
    let n = xs.len() as f64;
    let mean = |v: &[f64], origin: f64| {
        let mut s = CompensatedSum::default();
        v.iter().for_each(|&a| s.add(a - origin));
        s.value() / n
    };
    let (mx, my) = (mean(&xs, x0), mean(&ys, y0));
    let (mut sxx, mut sxy, mut syy) = (CompensatedSum::default(), CompensatedSum::default(), CompensatedSum::default());
    for (&x, &y) in xs.iter().zip(&ys) {
        let (dx, dy) = (x - x0 - mx, y - y0 - my);
        sxx.add(dx * dx);
        sxy.add(dx * dy);
        syy.add(dy * dy);
    }
    let (sxx, sxy, syy) = (sxx.value(), sxy.value(), syy.value());
    let slope = sxy / sxx;
    let intercept = (y0 + my) - slope * (x0 + mx);
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        window: (x_min.exp(), x_max.exp()),
        n_points: xs.len(),
    })
}

/// [`fit_rate`] on a named trajectory column.
pub fn fit_trajectory(trajectory: &Trajectory, column: &str, window: (f64, f64)) -> Result<RateFit> {
    fit_rate(&trajectory.column("k")?, &trajectory.column(column)?, window)
}

/// Up to `n` distinct integers, log-evenly spaced over `[lo, hi]`.
pub fn log_spaced(lo: usize, hi: usize, n: usize) -> Vec<usize> {
    if n == 0 || lo == 0 || hi < lo {
        return Vec::new();
    }
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<usize> = (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp().round() as usize)
        .map(|k| k.clamp(lo, hi))
        .collect();
    out.dedup();
    out
}

/// Median of the finite entries; NaN when there are none.
pub fn median(values: &[f64]) -> f64 {
    percentile(values, 50.0)
}

/// Linear-interpolated percentile of the finite entries; NaN when there are none.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let pos = (p / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos - pos.floor());
    if i + 1 < v.len() {
        v[i] + frac * (v[i + 1] - v[i])
    } else {
        v[i]
    }
}

/// Stepsize schedule used with a named fixture: `R = 1` for Example 1 and
/// `R = 1 / max_i L_i` for the generated problems.
pub fn fixture_schedule(name: &str, s: f64) -> Result<StepsizeSchedule> {
    let problem = objective::fixture(name)?;
    StepsizeSchedule::new(fixture_stepsize_scale(name, &problem), s)
}

pub fn fixture_stepsize_scale(name: &str, problem: &FiniteSumProblem) -> f64 {
    if name == "example1" {
        1.0
    } else {
        default_stepsize_scale(problem)
    }
}

/// `1 / max_i L_i`.
pub fn default_stepsize_scale(problem: &FiniteSumProblem) -> f64 {
    let l_max = problem
        .components()
        .iter()
        .map(|c| c.gradient_lipschitz())
        .fold(0.0_f64, f64::max);
    1.0 / l_max
}

/// One named verdict with the numbers behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub measured: BTreeMap<String, f64>,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            passed: true,
            measured: BTreeMap::new(),
            detail: String::new(),
        }
    }

    fn record(&mut self, key: impl Into<String>, value: f64) {
        self.measured.insert(key.into(), value);
    }

    /// Records `value` and ANDs `ok` into the verdict, noting failures in `detail`.
    fn require(&mut self, key: impl Into<String>, value: f64, ok: bool) {
        let key = key.into();
        if !ok {
            self.passed = false;
            if !self.detail.is_empty() {
                self.detail.push_str("; ");
            }
            self.detail.push_str(&format!("{key} = {value:.6e}"));
        }
        self.measured.insert(key, value);
    }

    fn failed(name: &str, err: Error) -> Self {
        Self {
            name: name.to_string(),
            passed: false,
            measured: BTreeMap::new(),
            detail: err.to_string(),
        }
    }

    /// `PASS name` or `FAIL name: detail`.
    pub fn summary_line(&self) -> String {
        if self.passed {
            format!("PASS {}", self.name)
        } else {
            format!("FAIL {}: {}", self.name, self.detail)
        }
    }
}

fn guarded(name: &str, f: impl FnOnce(&mut CheckOutcome) -> Result<()>) -> CheckOutcome {
    let mut out = CheckOutcome::new(name);
    match f(&mut out) {
        Ok(()) => out,
        Err(e) => {
            let mut failed = CheckOutcome::failed(name, e);
            failed.measured = out.measured;
            failed
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub fits: BTreeMap<String, RateFit>,
    /// Per-seed trajectory CSV paths, when written.
    pub trajectories: Vec<String>,
    pub checks: Vec<CheckOutcome>,
    /// Runs that failed and were left out of the medians.
    pub excluded_runs: Vec<String>,
    /// Fits that could not be made, with the reason.
    pub warnings: Vec<String>,
}

impl ExperimentReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareSettings {
    /// Fit window; defaults to `[10³, K]`.
    pub window: Option<(f64, f64)>,
    /// Where to write per-seed trajectory CSVs and `k,median,p10,p90` figure CSVs.
    pub out_dir: Option<PathBuf>,
    /// Number of log-spaced cycles the median curves are fitted on.
    pub fit_points: usize,
}

impl Default for CompareSettings {
    fn default() -> Self {
        Self {
            window: None,
            out_dir: None,
            fit_points: 25,
        }
    }
}

/// Median and spread of one method's `xbar_f_gap` over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct MedianCurve {
    pub ks: Vec<usize>,
    pub median: Vec<f64>,
    pub p10: Vec<f64>,
    pub p90: Vec<f64>,
}

impl MedianCurve {
    fn from_runs(runs: &[Trajectory], column: &str) -> Result<Self> {
        let ks = runs[0].cycles();
        let columns = runs.iter().map(|t| t.column(column)).collect::<Result<Vec<_>>>()?;
        let at = |row: usize| columns.iter().map(|c| c[row]).collect::<Vec<_>>();
        Ok(Self {
            median: (0..ks.len()).map(|r| median(&at(r))).collect(),
            p10: (0..ks.len()).map(|r| percentile(&at(r), 10.0)).collect(),
            p90: (0..ks.len()).map(|r| percentile(&at(r), 90.0)).collect(),
            ks,
        })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["k", "median", "p10", "p90"])?;
        for i in 0..self.ks.len() {
            w.write_record([
                self.ks[i].to_string(),
                engine::fmt17(self.median[i]),
                engine::fmt17(self.p10[i]),
                engine::fmt17(self.p90[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Fit on the logged cycles nearest to `n` log-spaced targets in `window`.
    pub fn fit(&self, window: (f64, f64), n: usize) -> Result<RateFit> {
        let lo = window.0.max(1.0).round() as usize;
        let hi = window.1.round() as usize;
        let mut rows: Vec<usize> = log_spaced(lo, hi, n)
            .into_iter()
            .map(|target| nearest_row(&self.ks, target))
            .collect();
        rows.dedup();
        let xs: Vec<f64> = rows.iter().map(|&r| self.ks[r] as f64).collect();
        let ys: Vec<f64> = rows.iter().map(|&r| self.median[r]).collect();
        fit_rate(&xs, &ys, window)
    }
}

fn nearest_row(ks: &[usize], target: usize) -> usize {
    match ks.binary_search(&target) {
        Ok(i) => i,
        Err(0) => 0,
        Err(i) if i == ks.len() => i - 1,
        Err(i) => {
            if target - ks[i - 1] <= ks[i] - target {
                i - 1
            } else {
                i
            }
        }
    }
}

/// Runs each method over `seeds` with the shared schedule, `q` and `K` of
/// `base`, fits the median averaged f-gap curves, and checks RR against SGD
/// and IG against its order envelope when those methods are present.
pub fn compare_methods(
    problem: &FiniteSumProblem,
    base: &RunConfig,
    methods: &[Method],
    seeds: &[u64],
    settings: &CompareSettings,
) -> Result<ExperimentReport> {
    if seeds.is_empty() {
        return Err(Error::InvalidInput("no seeds".into()));
    }
    let k_total = base.cycles;
    let window = settings
        .window
        .unwrap_or((thresholds::FIT_WINDOW_START.min(k_total as f64), k_total as f64));
    let stride = (k_total / 1000).max(1);
    if let Some(dir) = &settings.out_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut report = ExperimentReport::default();
    let mut slopes: BTreeMap<Method, f64> = BTreeMap::new();
    for &method in methods {
        // IG ignores the seed.
        let method_seeds: &[u64] = if method == Method::Ig { &seeds[..1] } else { seeds };
        let results: Vec<(u64, Result<(Trajectory, Option<f64>)>)> = method_seeds
            .par_iter()
            .map(|&seed| {
                let config = base.clone().with_method(method).with_seed(seed).with_log_stride(stride);
                let outcome = if method == Method::Birr {
                    birr_run(problem, &config).map(|b| (b.trajectory, Some(b.output_f_gap)))
                } else {
                    engine::run(problem, &config).map(|t| (t, None))
                };
                (seed, outcome)
            })
            .collect();

        let mut runs = Vec::new();
        let mut birr_gaps = Vec::new();
        for (seed, outcome) in results {
            match outcome {
                Ok((trajectory, birr_gap)) => {
                    if let Some(dir) = &settings.out_dir {
                        let path = dir.join(format!("{method}_seed{seed}.csv"));
                        trajectory.save_csv(&path, &[])?;
                        report.trajectories.push(path.display().to_string());
                    }
                    birr_gaps.extend(birr_gap);
                    runs.push(trajectory);
                }
                Err(e) => {
                    log::warn!("{method} seed {seed} excluded: {e}");
                    report.excluded_runs.push(format!("{method} seed {seed}: {e}"));
                }
            }
        }
        if runs.is_empty() {
            continue;
        }
        let curve = MedianCurve::from_runs(&runs, "xbar_f_gap")?;
        if let Some(dir) = &settings.out_dir {
            curve.write_csv(dir.join(format!("{method}_figure.csv")))?;
        }
        match curve.fit(window, settings.fit_points) {
            Ok(fit) => {
                slopes.insert(method, fit.slope);
                report.fits.insert(format!("{method}.xbar_f_gap"), fit);
            }
            Err(e) => report.warnings.push(format!("{method} fit: {e}")),
        }
        if method == Method::Birr {
            let mut check = CheckOutcome::new("birr_final_f_gap");
            check.record("median_output_f_gap", median(&birr_gaps));
            check.record("median_suffix_f_gap", *curve.median.last().expect("non-empty curve"));
            report.checks.push(check);
        }
        if method == Method::Ig {
            report.checks.push(ig_envelope_check(problem, base, &runs[0])?);
        }
    }

    if let (Some(&rr), Some(&sgd)) = (slopes.get(&Method::Rr), slopes.get(&Method::Sgd)) {
        let mut check = CheckOutcome::new("rr_below_sgd");
        check.record("rr_slope", rr);
        check.record("sgd_slope", sgd);
        check.require("rr_minus_sgd", rr - sgd, rr < sgd);
        report.checks.push(check);
    }
    Ok(report)
}

fn ig_envelope_check(problem: &FiniteSumProblem, base: &RunConfig, run: &Trajectory) -> Result<CheckOutcome> {
    let sigma = base.sigma.clone().unwrap_or_else(|| (0..problem.m()).collect());
    let bound = envelope_bound(problem, &base.schedule, oracles::m_sigma(problem, &sigma)?);
    let scaled = scaled_distance(run, base.schedule.s());
    let mut check = CheckOutcome::new("ig_envelope");
    check.record("bound", bound);
    check.require("dist_k_pow_s", scaled, scaled <= bound);
    Ok(check)
}

fn envelope_bound(problem: &FiniteSumProblem, schedule: &StepsizeSchedule, m_const: f64) -> f64 {
    thresholds::ENVELOPE_SLACK * schedule.r() * m_const / problem.constants().c
}

fn scaled_distance(run: &Trajectory, s: f64) -> f64 {
    let last = run.last();
    last.dist * (last.k as f64).powf(s)
}

fn seeds(n: u64) -> Vec<u64> {
    (0..n).collect()
}

fn problem_and_schedule(name: &str, s: f64) -> Result<(FiniteSumProblem, StepsizeSchedule)> {
    let problem = objective::fixture(name)?;
    let schedule = StepsizeSchedule::new(fixture_stepsize_scale(name, &problem), s)?;
    Ok((problem, schedule))
}

fn permutation_mean_into(check: &mut CheckOutcome, name: &str) -> Result<()> {
    let problem = objective::fixture(name)?;
    let brute = oracles::permutation_mean_v(&problem)?;
    let closed = oracles::mu_star(&problem);
    let err = (&brute - &closed).amax();
    check.require(format!("{name}.abs_error"), err, err <= thresholds::PERMUTATION_MEAN_ABS);
    Ok(())
}

/// Exhaustive mean of `v(σ)` against `½ Σ H_i g_i`.
pub fn criterion_1(fixtures: &[&str]) -> CheckOutcome {
    guarded("c01_permutation_mean", |check| {
        for name in fixtures {
            permutation_mean_into(check, name)?;
        }
        Ok(())
    })
}

/// `v((1,2)) = 2` and `v((2,1)) = −1` on Example 1.
pub fn criterion_2() -> CheckOutcome {
    guarded("c02_example1_v_values", |check| {
        let p = FiniteSumProblem::example1();
        let v12 = oracles::v_of_sigma(&p, &[0, 1])?[0];
        let v21 = oracles::v_of_sigma(&p, &[1, 0])?[0];
        check.require("v(1,2)", v12, v12 == 2.0);
        check.require("v(2,1)", v21, v21 == -1.0);
        Ok(())
    })
}

/// `max_σ ‖v(σ)‖ < L·m·G*` on every fixture with `m ≤ 7`.
pub fn criterion_3(fixtures: &[&str]) -> CheckOutcome {
    guarded("c03_norm_bound", |check| {
        for name in fixtures {
            let problem = objective::fixture(name)?;
            if problem.m() > oracles::BRUTE_FORCE_MAX {
                continue;
            }
            let max_norm = oracles::m_gamma(&problem)?.value;
            let bound = problem.constants().m_gamma_bound;
            check.record(format!("{name}.bound"), bound);
            check.require(format!("{name}.max_norm"), max_norm, max_norm < bound);
        }
        Ok(())
    })
}

/// Trend of the windowed maxima of `‖E_k − α_k v(σ_k)‖ / α_k²` over `[10², K]`.
pub fn residual_ratio_trend(problem: &FiniteSumProblem, schedule: StepsizeSchedule, cycles: usize, seed: u64) -> Result<RateFit> {
    let config = RunConfig::new(Method::Rr, schedule, 1.0, cycles, seed)
        .with_dense_log(true)
        .with_log_stride(cycles);
    let trajectory = engine::run(problem, &config)?;
    let ratios = oracles::first_order_residual_ratios(problem, trajectory.dense()?, &schedule)?;
    let w = thresholds::RESIDUAL_RATIO_WINDOW;
    let starts = log_spaced(100, cycles - w, 20);
    let maxima: Vec<f64> = starts
        .iter()
        .map(|&k| ratios[k..k + w].iter().copied().fold(0.0_f64, f64::max))
        .collect();
    let ks: Vec<f64> = starts.iter().map(|&k| k as f64).collect();
    fit_rate(&ks, &maxima, (100.0, cycles as f64))
}

pub fn criterion_4() -> CheckOutcome {
    guarded("c04_cycle_error_expansion", |check| {
        let schedule = StepsizeSchedule::new(1.0, 0.75)?;
        let fit = residual_ratio_trend(&FiniteSumProblem::example1(), schedule, thresholds::LONG_RUN, 1)?;
        check.record("r_squared", fit.r_squared);
        check.require("slope", fit.slope, fit.slope <= thresholds::RESIDUAL_RATIO_MAX_SLOPE);
        Ok(())
    })
}

/// Median over seeds of `‖k^s (x̄_{q,k} − x*) − a_q(s) H*⁻¹ μ*‖` and the limit norm.
pub fn averaged_limit_deviation(
    problem: &FiniteSumProblem,
    schedule: StepsizeSchedule,
    q: f64,
    cycles: usize,
    seeds: &[u64],
) -> Result<(f64, f64)> {
    let limit = oracles::averaged_limit(problem, &schedule, q)?;
    let scale = (cycles as f64).powf(schedule.s());
    let deviations = seeds
        .par_iter()
        .map(|&seed| {
            let config = RunConfig::new(Method::Rr, schedule, q, cycles, seed).with_log_stride(cycles);
            let run = engine::run(problem, &config)?;
            let xbar = &run.last().averages.as_ref().expect("k > 0 is averaged").suffix;
            Ok(((xbar - problem.optimum()) * scale - &limit).norm())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((median(&deviations), limit.norm()))
}

fn limit_checks_into(check: &mut CheckOutcome, name: &str, pairs: &[(f64, f64)]) -> Result<()> {
    for &(q, s) in pairs {
        let (problem, schedule) = problem_and_schedule(name, s)?;
        let (dev, limit) = averaged_limit_deviation(&problem, schedule, q, thresholds::LONG_RUN, &seeds(thresholds::SEEDS))?;
        let tol = thresholds::LIMIT_REL * limit + thresholds::LIMIT_ABS;
        let key = format!("{name}.q{q}.s{s}");
        check.record(format!("{key}.tolerance"), tol);
        check.require(format!("{key}.median_deviation"), dev, dev <= tol);
    }
    Ok(())
}

/// Scaled suffix averages of RR against `a_q(s) H*⁻¹ μ*`.
pub fn criterion_5(fixtures: &[&str], pairs: &[(f64, f64)]) -> CheckOutcome {
    guarded("c05_averaged_limit", |check| {
        for name in fixtures {
            limit_checks_into(check, name, pairs)?;
        }
        Ok(())
    })
}

/// RR versus SGD averaged f-gap slopes on Example 1.
pub fn criterion_6() -> CheckOutcome {
    guarded("c06_rate_separation", |check| {
        let schedule = StepsizeSchedule::new(1.0, 0.75)?;
        let base = RunConfig::new(Method::Rr, schedule, 0.5, thresholds::LONG_RUN, 0);
        let report = compare_methods(
            &FiniteSumProblem::example1(),
            &base,
            &[Method::Rr, Method::Sgd],
            &seeds(thresholds::SEEDS),
            &CompareSettings::default(),
        )?;
        let slope = |m: &str| {
            report
                .fits
                .get(&format!("{m}.xbar_f_gap"))
                .map(|f| f.slope)
                .ok_or_else(|| Error::InvalidInput(format!("no {m} fit: {:?}", report.warnings)))
        };
        let (rr, sgd) = (slope("rr")?, slope("sgd")?);
        let (lo, hi) = thresholds::RR_F_GAP_SLOPE;
        check.require("rr_slope", rr, (lo..=hi).contains(&rr));
        check.require("sgd_slope", sgd, sgd >= thresholds::SGD_F_GAP_MIN_SLOPE);
        check.require("rr_minus_sgd", rr - sgd, rr < sgd);
        Ok(())
    })
}

/// `dist_K K^s ≤ 1.5 R M / c` for IG in both orders and RR on every seed.
pub fn criterion_7() -> CheckOutcome {
    guarded("c07_order_envelope", |check| {
        let problem = FiniteSumProblem::example1();
        let schedule = StepsizeSchedule::new(1.0, 0.75)?;
        let k = thresholds::LONG_RUN;
        for sigma in [vec![0, 1], vec![1, 0]] {
            let config = RunConfig::new(Method::Ig, schedule, 1.0, k, 0)
                .with_sigma(sigma.clone())
                .with_log_stride(k);
            let run = engine::run(&problem, &config)?;
            let bound = envelope_bound(&problem, &schedule, oracles::m_sigma(&problem, &sigma)?);
            let label = crate::sampling::order_label(&sigma);
            let scaled = scaled_distance(&run, schedule.s());
            check.record(format!("ig{label}.bound"), bound);
            check.require(format!("ig{label}.scaled_dist"), scaled, scaled <= bound);
        }
        let bound = envelope_bound(&problem, &schedule, oracles::m_gamma(&problem)?.value);
        let scaled = seeds(thresholds::SEEDS)
            .par_iter()
            .map(|&seed| {
                let config = RunConfig::new(Method::Rr, schedule, 1.0, k, seed).with_log_stride(k);
                Ok(scaled_distance(&engine::run(&problem, &config)?, schedule.s()))
            })
            .collect::<Result<Vec<f64>>>()?;
        let worst = scaled.iter().copied().fold(0.0_f64, f64::max);
        check.record("rr.bound", bound);
        check.require("rr.max_scaled_dist", worst, worst <= bound);
        Ok(())
    })
}

fn birr_checks_into(check: &mut CheckOutcome, name: &str, full: bool) -> Result<()> {
    let (problem, schedule) = problem_and_schedule(name, 0.75)?;
    let report = birr_exponent_check(
        &problem,
        schedule,
        thresholds::BIRR_Q,
        &thresholds::BIRR_K_GRID,
        &seeds(thresholds::SEEDS),
    )?;
    check.record(format!("{name}.suffix_dist_slope"), report.suffix_dist_fit.slope);
    check.record(format!("{name}.median_per_seed_slope"), report.median_per_seed_slope());
    let slope = report.output_dist_fit.slope;
    check.require(
        format!("{name}.output_dist_slope"),
        slope,
        slope <= thresholds::BIRR_DIST_MAX_SLOPE,
    );
    if full {
        let gap = report.output_f_gap_fit.slope;
        check.require(format!("{name}.output_f_gap_slope"), gap, gap <= thresholds::BIRR_F_GAP_MAX_SLOPE);
        let wins = report.paired_win_fraction;
        check.require(format!("{name}.paired_win_fraction"), wins, wins >= thresholds::BIRR_WIN_FRACTION);
    }
    Ok(())
}

/// BIRR distance and f-gap slopes plus the paired comparison against RR.
pub fn criterion_8() -> CheckOutcome {
    guarded("c08_birr_acceleration", |check| birr_checks_into(check, "example1", true))
}

/// Permutation mean, averaged limit and BIRR slope on the smooth fixture.
pub fn criterion_9() -> CheckOutcome {
    guarded("c09_smooth_extension", |check| {
        permutation_mean_into(check, "smooth-seed1")?;
        limit_checks_into(check, "smooth-seed1", &thresholds::LIMIT_PAIRS)?;
        birr_checks_into(check, "smooth-seed1", false)
    })
}

fn scale_of(values: &[Vector]) -> f64 {
    let mut s = CompensatedSum::default();
    let count = values.len() * values[0].len();
    values.iter().flat_map(|v| v.iter()).for_each(|x| s.add(x.abs()));
    s.value() / count as f64
}

fn direct_mean(values: &[Vector]) -> Vector {
    let mut acc = linalg::CompensatedVecSum::zeros(values[0].len());
    values.iter().for_each(|v| acc.add(v));
    acc.value() / values.len() as f64
}

/// Largest scaled errors of streaming means and suffix reconstructions over
/// random sequences; the scale is the mean absolute entry.
pub fn averaging_identity_errors(cases: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst_stream, mut worst_suffix) = (0.0_f64, 0.0_f64);
    for _ in 0..cases {
        let n = rng.random_range(1..=4);
        let k = rng.random_range(1..=500);
        let q = 1.0 - rng.random::<f64>();
        let offset = rng.random_range(-100.0..100.0);
        let values: Vec<Vector> = (0..k)
            .map(|_| Vector::from_fn(n, |_, _| offset + rng.random_range(-1.0..1.0)))
            .collect();
        let scale = scale_of(&values);
        let l = averaging::suffix_start(q, k);

        let mut stream = StreamingAverage::new(n);
        let mut prefix = Vector::zeros(n);
        for (j, v) in values.iter().enumerate() {
            if j == l {
                prefix = stream.mean();
            }
            stream.update(v);
        }
        let full = stream.mean();
        let err_stream = (&full - direct_mean(&values)).amax() / scale;
        let suffix = averaging::suffix_from_snapshots(&full, &prefix, k, l)?;
        let err_suffix = (&suffix - direct_mean(&values[l..])).amax() / scale;
        worst_stream = worst_stream.max(err_stream);
        worst_suffix = worst_suffix.max(err_suffix);
    }
    Ok((worst_stream, worst_suffix))
}

pub fn criterion_10() -> CheckOutcome {
    guarded("c10_averaging_identities", |check| {
        let (stream, suffix) = averaging_identity_errors(thresholds::AVERAGING_CASES, 10)?;
        check.require("streaming_error", stream, stream <= thresholds::STREAMING_REL);
        check.require("suffix_error", suffix, suffix <= thresholds::SUFFIX_REL);
        Ok(())
    })
}

/// Median over seeds of `‖I_{q,k}‖ k` and `‖I_{1,k}‖ k / log k` at `ks`.
pub fn increment_profiles(
    problem: &FiniteSumProblem,
    schedule: StepsizeSchedule,
    q: f64,
    ks: &[usize],
    seeds: &[u64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let cycles = *ks.iter().max().ok_or_else(|| Error::InvalidInput("no cycles".into()))?;
    let per_seed = seeds
        .par_iter()
        .map(|&seed| {
            let config = RunConfig::new(Method::Rr, schedule, q, cycles + 1, seed)
                .with_dense_log(true)
                .with_log_stride(cycles + 1);
            let run = engine::run(problem, &config)?;
            let dense = run.dense()?;
            ks.iter()
                .map(|&k| {
                    let kf = k as f64;
                    let suffix = oracles::i_qk(dense, &schedule, q, k)?.norm() * kf;
                    let full = oracles::i_qk(dense, &schedule, 1.0, k)?.norm() * kf / kf.ln();
                    Ok((suffix, full))
                })
                .collect::<Result<Vec<(f64, f64)>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let column = |pick: fn(&(f64, f64)) -> f64| -> Vec<f64> {
        (0..ks.len())
            .map(|i| median(&per_seed.iter().map(|s| pick(&s[i])).collect::<Vec<_>>()))
            .collect()
    };
    Ok((column(|p| p.0), column(|p| p.1)))
}

pub fn criterion_11() -> CheckOutcome {
    guarded("c11_increment_decay", |check| {
        let schedule = StepsizeSchedule::new(1.0, 0.75)?;
        let k_max = thresholds::LONG_RUN;
        let ks = log_spaced(1_000, k_max, thresholds::INCREMENT_POINTS);
        let (suffix, full) = increment_profiles(&FiniteSumProblem::example1(), schedule, 0.5, &ks, &seeds(thresholds::SEEDS))?;
        let xs: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
        let window = (1e3, k_max as f64);
        let s1 = fit_rate(&xs, &suffix, window)?.slope;
        let s2 = fit_rate(&xs, &full, window)?.slope;
        check.require("q0.5.slope", s1, s1 <= thresholds::INCREMENT_MAX_SLOPE);
        check.require("q1.slope", s2, s2 <= thresholds::INCREMENT_MAX_SLOPE);
        Ok(())
    })
}

/// `ζ(s)` for real `s > 1` by Euler–Maclaurin summation with cutoff `N = 64`.
pub fn zeta_euler_maclaurin(s: f64) -> f64 {
    const N: usize = 64;
    // B_2, B_4, …, B_16
    const BERNOULLI: [f64; 8] = [
        1.0 / 6.0,
        -1.0 / 30.0,
        1.0 / 42.0,
        -1.0 / 30.0,
        5.0 / 66.0,
        -691.0 / 2730.0,
        7.0 / 6.0,
        -3617.0 / 510.0,
    ];
    let mut sum = CompensatedSum::default();
    for n in (1..N).rev() {
        sum.add((n as f64).powf(-s));
    }
    let nf = N as f64;
    sum.add(nf.powf(1.0 - s) / (s - 1.0));
    sum.add(0.5 * nf.powf(-s));
    // s(s+1)…(s+2j−2) / (2j)! · N^{−s−2j+1}
    let mut rising = s;
    let mut factorial = 2.0;
    for (j, b) in BERNOULLI.iter().enumerate() {
        let order = 2 * (j + 1);
        sum.add(b / factorial * rising * nf.powf(-s - order as f64 + 1.0));
        rising *= (s + order as f64 - 1.0) * (s + order as f64);
        factorial *= ((order + 1) * (order + 2)) as f64;
    }
    sum.value()
}

pub fn criterion_12() -> CheckOutcome {
    guarded("c12_stepsize_zeta_sum", |check| {
        let schedule = StepsizeSchedule::new(1.0, 0.75)?;
        let partial = oracles::zeta_stepsize_sum(&schedule, thresholds::ZETA_CYCLES)?;
        let oracle = zeta_euler_maclaurin(2.0 * schedule.s());
        let rel = (partial - oracle).abs() / oracle;
        check.record("partial_sum", partial);
        check.record("zeta_oracle", oracle);
        check.require("relative_gap", rel, rel <= thresholds::ZETA_REL);
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub fixtures: Vec<String>,
    /// Extra stepsize exponents for the averaged-limit check (q = 0.5, Example 1).
    #[serde(default)]
    pub extra_limit_s: Vec<f64>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            fixtures: objective::FIXTURE_NAMES.iter().map(|s| s.to_string()).collect(),
            extra_limit_s: Vec::new(),
        }
    }
}

/// Evaluates every check whose fixtures are in `config.fixtures`; failures
/// are collected rather than returned. An empty fixture set gives an empty
/// report.
pub fn theorem_suite(config: &SuiteConfig) -> Result<ExperimentReport> {
    for name in &config.fixtures {
        objective::fixture(name)?;
    }
    let mut report = ExperimentReport::default();
    if config.fixtures.is_empty() {
        return Ok(report);
    }
    let have: BTreeSet<&str> = config.fixtures.iter().map(String::as_str).collect();
    let pick = |names: &[&'static str]| -> Vec<&'static str> {
        names.iter().copied().filter(|n| have.contains(n)).collect()
    };
    let quadratic = pick(&["example1", "quad-seed7"]);
    let small = pick(&objective::FIXTURE_NAMES);
    let e1 = have.contains("example1");
    let checks = &mut report.checks;

    if !quadratic.is_empty() {
        checks.push(criterion_1(&quadratic));
    }
    if e1 {
        checks.push(criterion_2());
    }
    checks.push(criterion_3(&small));
    if e1 {
        checks.push(criterion_4());
    }
    if !quadratic.is_empty() {
        checks.push(criterion_5(&quadratic, &thresholds::LIMIT_PAIRS));
    }
    if e1 {
        checks.push(criterion_6());
        checks.push(criterion_7());
        checks.push(criterion_8());
    }
    if have.contains("smooth-seed1") {
        checks.push(criterion_9());
    }
    checks.push(criterion_10());
    if e1 {
        checks.push(criterion_11());
    }
    checks.push(criterion_12());
    if e1 {
        for &s in &config.extra_limit_s {
            let mut c = criterion_5(&["example1"], &[(0.5, s)]);
            c.name = format!("c05_averaged_limit_s{s}");
            checks.push(c);
        }
    }
    Ok(report)
}
