//! Bias-removed random reshuffling.
//!
//! A plain RR run with running means of the outer iterates and stepsizes, a
//! prefix snapshot at cycle `⌊(1−q)K⌋`, and accumulation of `Ĥ` and `μ̂` over
//! the inner iterates of the last cycle. The output is
//! `x̄_{q,K} − b̂_{q,K}` with `b̂_{q,K} = −ᾱ_{q,K} · ½ · Ĥ⁻¹ μ̂`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Method, RunConfig};
use crate::engine::{self, StepsizeSchedule, Trajectory};
use crate::harness::{fit_rate, median, RateFit};
use crate::linalg::{Matrix, Vector};
use crate::objective::FiniteSumProblem;
use crate::oracles::BiasAccumulator;
use crate::{Error, Result};

/// Last-cycle accumulators and the averages BIRR combines at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct BirrState {
    pub suffix_average: Vector,
    pub alpha_bar: f64,
    pub accumulator: BiasAccumulator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirrOutcome {
    /// `x̄_{q,K} − b̂_{q,K}` (or `x̄_{q,K}` when subtraction is disabled).
    pub output: Vector,
    pub suffix_average: Vector,
    pub alpha_bar: f64,
    pub bias_estimate: Vector,
    pub h_hat: Matrix,
    pub mu_hat: Vector,
    pub output_dist: f64,
    pub output_f_gap: f64,
    pub suffix_dist: f64,
    pub suffix_f_gap: f64,
    pub trajectory: Trajectory,
}

impl BirrOutcome {
    /// `bhat_norm` and `output_dist` columns for the trajectory CSV; only the
    /// final row carries values.
    pub fn csv_columns(&self) -> [(&'static str, Vec<f64>); 2] {
        let rows = self.trajectory.entries.len();
        let mut bhat = vec![f64::NAN; rows];
        let mut dist = vec![f64::NAN; rows];
        bhat[rows - 1] = self.bias_estimate.norm();
        dist[rows - 1] = self.output_dist;
        [("bhat_norm", bhat), ("output_dist", dist)]
    }
}

pub fn birr_run(problem: &FiniteSumProblem, config: &RunConfig) -> Result<BirrOutcome> {
    birr_run_with(problem, config, true)
}

/// [`birr_run`] with the final bias subtraction optionally switched off.
pub fn birr_run_with(problem: &FiniteSumProblem, config: &RunConfig, subtract_bias: bool) -> Result<BirrOutcome> {
    if config.method != Method::Birr {
        return Err(Error::InvalidInput(format!("expected a birr config, got {}", config.method)));
    }
    if config.cycles < 2 {
        return Err(Error::InvalidInput("BIRR needs at least two cycles".into()));
    }
    let trajectory = engine::run(problem, config)?;
    let state = collect_state(problem, &trajectory)?;
    let bias_estimate = state.accumulator.estimate(state.alpha_bar)?;
    let output = if subtract_bias {
        &state.suffix_average - &bias_estimate
    } else {
        state.suffix_average.clone()
    };
    let x_star = problem.optimum();
    Ok(BirrOutcome {
        output_dist: (&output - x_star).norm(),
        output_f_gap: problem.objective_gap(&output),
        suffix_dist: (&state.suffix_average - x_star).norm(),
        suffix_f_gap: problem.objective_gap(&state.suffix_average),
        output,
        suffix_average: state.suffix_average,
        alpha_bar: state.alpha_bar,
        bias_estimate,
        h_hat: state.accumulator.h_hat,
        mu_hat: state.accumulator.mu_hat,
        trajectory,
    })
}

fn collect_state(problem: &FiniteSumProblem, trajectory: &Trajectory) -> Result<BirrState> {
    let last = trajectory
        .last_cycle
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("run recorded no final cycle".into()))?;
    let averages = trajectory
        .last()
        .averages
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("run logged no averages".into()))?;
    let mut accumulator = BiasAccumulator::new(problem.dim());
    for (pos, &i) in last.order.iter().enumerate() {
        accumulator.push(problem.component(i)?, &last.inner_iterates[pos]);
    }
    Ok(BirrState {
        suffix_average: averages.suffix.clone(),
        alpha_bar: averages.alpha_suffix,
        accumulator,
    })
}

/// Slopes of BIRR and plain suffix-averaged RR errors against `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirrExponentReport {
    pub k_grid: Vec<usize>,
    /// Median over seeds of `‖output − x*‖` per grid point.
    pub median_output_dist: Vec<f64>,
    pub median_output_f_gap: Vec<f64>,
    pub median_suffix_dist: Vec<f64>,
    pub median_suffix_f_gap: Vec<f64>,
    /// Fits on the median curves.
    pub output_dist_fit: RateFit,
    pub output_f_gap_fit: RateFit,
    pub suffix_dist_fit: RateFit,
    pub suffix_f_gap_fit: RateFit,
    /// Per-seed fits of the output distance.
    pub per_seed_output_dist_slopes: Vec<f64>,
    /// Fraction of seeds whose BIRR output beats the suffix average at the largest `K`.
    pub paired_win_fraction: f64,
}

impl BirrExponentReport {
    pub fn median_per_seed_slope(&self) -> f64 {
        median(&self.per_seed_output_dist_slopes)
    }
}

/// Runs BIRR for every `(K, seed)` pair and fits log-error against log-`K`.
pub fn birr_exponent_check(
    problem: &FiniteSumProblem,
    schedule: StepsizeSchedule,
    q: f64,
    k_grid: &[usize],
    seeds: &[u64],
) -> Result<BirrExponentReport> {
    let (k_min, k_max) = match (k_grid.iter().min(), k_grid.iter().max()) {
        (Some(&lo), Some(&hi)) => (lo as f64, hi as f64),
        _ => return Err(Error::InvalidInput("empty K grid".into())),
    };
    if seeds.is_empty() {
        return Err(Error::InvalidInput("no seeds".into()));
    }
    let runs: Vec<Vec<BirrOutcome>> = k_grid
        .par_iter()
        .map(|&k| {
            seeds
                .par_iter()
                .map(|&seed| {
                    let config = RunConfig::new(Method::Birr, schedule, q, k, seed).with_log_stride(k);
                    birr_run(problem, &config)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let ks: Vec<f64> = k_grid.iter().map(|&k| k as f64).collect();
    let window = (k_min, k_max);
    let med = |f: fn(&BirrOutcome) -> f64| -> Vec<f64> {
        runs.iter()
            .map(|per_k| median(&per_k.iter().map(f).collect::<Vec<_>>()))
            .collect()
    };
    let median_output_dist = med(|o| o.output_dist);
    let median_output_f_gap = med(|o| o.output_f_gap);
    let median_suffix_dist = med(|o| o.suffix_dist);
    let median_suffix_f_gap = med(|o| o.suffix_f_gap);

    let per_seed_output_dist_slopes = (0..seeds.len())
        .map(|s| {
            let ys: Vec<f64> = runs.iter().map(|per_k| per_k[s].output_dist).collect();
            fit_rate(&ks, &ys, window).map(|f| f.slope)
        })
        .collect::<Result<Vec<_>>>()?;
    let last = runs.last().expect("non-empty grid");
    let wins = last.iter().filter(|o| o.output_dist < o.suffix_dist).count();

    Ok(BirrExponentReport {
        k_grid: k_grid.to_vec(),
        output_dist_fit: fit_rate(&ks, &median_output_dist, window)?,
        output_f_gap_fit: fit_rate(&ks, &median_output_f_gap, window)?,
        suffix_dist_fit: fit_rate(&ks, &median_suffix_dist, window)?,
        suffix_f_gap_fit: fit_rate(&ks, &median_suffix_f_gap, window)?,
        median_output_dist,
        median_output_f_gap,
        median_suffix_dist,
        median_suffix_f_gap,
        per_seed_output_dist_slopes,
        paired_win_fraction: wins as f64 / last.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(k: usize, q: f64) -> RunConfig {
        RunConfig::new(Method::Birr, StepsizeSchedule::new(1.0, 0.75).unwrap(), q, k, 3)
    }

    #[test]
    fn quadratic_h_hat_is_sum_of_curvatures() {
        let p = FiniteSumProblem::example1();
        let out = birr_run(&p, &config(50, 0.5)).unwrap();
        assert!((out.h_hat[(0, 0)] - 3.0).abs() <= 1e-12 * 3.0);
    }

    #[test]
    fn full_window_uses_simple_average() {
        let p = FiniteSumProblem::example1();
        let out = birr_run(&p, &config(40, 1.0)).unwrap();
        let averages = out.trajectory.last().averages.clone().unwrap();
        assert_eq!(out.suffix_average, averages.simple);
        assert_eq!(out.alpha_bar, averages.alpha_simple);
    }

    #[test]
    fn disabled_subtraction_matches_plain_rr() {
        let p = FiniteSumProblem::example1();
        let birr = birr_run_with(&p, &config(200, 0.5), false).unwrap();
        let rr = engine::run(&p, &config(200, 0.5).with_method(Method::Rr)).unwrap();
        assert_eq!(birr.output, rr.last().averages.as_ref().unwrap().suffix);
    }

    #[test]
    fn rejects_wrong_method_and_short_runs() {
        let p = FiniteSumProblem::example1();
        assert!(birr_run(&p, &config(10, 0.5).with_method(Method::Rr)).is_err());
        assert!(birr_run(&p, &config(1, 0.5)).is_err());
    }

    #[test]
    fn csv_columns_fill_last_row() {
        let p = FiniteSumProblem::example1();
        let out = birr_run(&p, &config(20, 0.5).with_log_stride(5)).unwrap();
        let [(name, bhat), (_, dist)] = out.csv_columns();
        assert_eq!(name, "bhat_norm");
        assert!(bhat[..bhat.len() - 1].iter().all(|v| v.is_nan()));
        assert_eq!(*dist.last().unwrap(), out.output_dist);
    }
}
