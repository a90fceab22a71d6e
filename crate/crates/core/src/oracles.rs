//! Analytic quantities behind the convergence behavior of incremental methods.
//!
//! Notation: `g_i = ∇f_i(x*)`, `H_i = ∇²f_i(x*)` (`= P_i` for quadratics),
//! `H* = Σ H_i`. For an order `σ` the first-order coefficient of the cycle
//! gradient error is
//!
//! ```text
//! v(σ) = − Σ_i H_{σ(i)} Σ_{ℓ<i} g_{σ(ℓ)}
//! ```
//!
//! and its mean over uniform permutations is `μ* = ½ Σ_i H_i g_i` (called
//! `θ*` for non-quadratic components; the formula is the same once `P_i` is
//! replaced by `H_i`). Small instances are checked exhaustively with
//! [`permutation_mean_v`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::averaging::{self, suffix_start};
use crate::engine::{DenseLog, StepsizeSchedule};
use crate::linalg::{self, CompensatedSum, CompensatedVecSum, Matrix, Vector};
use crate::objective::{Component, FiniteSumProblem};
use crate::sampling::{enumerate_permutations, is_permutation, order_label, MAX_ENUMERATION};
use crate::{Error, Result};

/// Largest `m` for exhaustive permutation means (`7! = 5040` orders).
pub const BRUTE_FORCE_MAX: usize = 7;

/// Scale applied to `[Σ H]⁻¹ Σ H ∇f` when estimating the bias from one cycle.
///
/// Summed over a full cycle, `Σ_i H_{σ(i)} ∇f_{σ(i)}(x_{i-1})` tends to
/// `Σ_j H_j g_j = 2μ*`, so the estimate carries a factor ½ to target
/// `b = −ᾱ H*⁻¹ μ*`. BIRR and [`bias_estimate`] both read this constant.
pub const BIAS_ESTIMATE_SCALE: f64 = 0.5;

/// Gradients and Hessians of every component at the optimum.
#[derive(Debug, Clone)]
pub struct OptimumData {
    pub gradients: Vec<Vector>,
    pub hessians: Vec<Matrix>,
}

impl OptimumData {
    pub fn new(problem: &FiniteSumProblem) -> Self {
        Self {
            gradients: problem.gradients_at_optimum(),
            hessians: problem.hessians_at_optimum(),
        }
    }

    fn m(&self) -> usize {
        self.gradients.len()
    }

    /// `v(σ)` from the precomputed data.
    pub fn v_of_sigma(&self, sigma: &[usize]) -> Result<Vector> {
        if !is_permutation(sigma, self.m()) {
            return Err(Error::InvalidInput(format!(
                "{sigma:?} is not a permutation of 0..{}",
                self.m()
            )));
        }
        let n = self.gradients.first().map_or(0, Vector::len);
        let mut prefix = Vector::zeros(n);
        let mut v = Vector::zeros(n);
        for &i in sigma {
            v -= &self.hessians[i] * &prefix;
            prefix += &self.gradients[i];
        }
        Ok(v)
    }

    /// `½ Σ_i H_i g_i`.
    pub fn half_weighted_sum(&self) -> Vector {
        let n = self.gradients.first().map_or(0, Vector::len);
        let mut acc = CompensatedVecSum::zeros(n);
        for (h, g) in self.hessians.iter().zip(&self.gradients) {
            acc.add(&(h * g));
        }
        acc.value() * 0.5
    }
}

/// `v(σ)` for a zero-based permutation.
pub fn v_of_sigma(problem: &FiniteSumProblem, sigma: &[usize]) -> Result<Vector> {
    OptimumData::new(problem).v_of_sigma(sigma)
}

/// `μ* = ½ Σ_i P_i ∇f_i(x*)`.
pub fn mu_star(problem: &FiniteSumProblem) -> Vector {
    OptimumData::new(problem).half_weighted_sum()
}

/// `θ* = ½ Σ_i ∇²f_i(x*) ∇f_i(x*)`; identical to [`mu_star`] on quadratics.
pub fn theta_star(problem: &FiniteSumProblem) -> Vector {
    mu_star(problem)
}

/// Exact mean of `v(σ)` over all `m!` orders.
pub fn permutation_mean_v(problem: &FiniteSumProblem) -> Result<Vector> {
    let m = problem.m();
    if m > BRUTE_FORCE_MAX {
        return Err(Error::TooManyPermutations { m, max: BRUTE_FORCE_MAX });
    }
    let data = OptimumData::new(problem);
    let perms = enumerate_permutations(m)?;
    let mut acc = CompensatedVecSum::zeros(problem.dim());
    for sigma in &perms {
        acc.add(&data.v_of_sigma(sigma)?);
    }
    Ok(acc.value() / perms.len() as f64)
}

/// `M_σ = ‖v(σ)‖`.
pub fn m_sigma(problem: &FiniteSumProblem, sigma: &[usize]) -> Result<f64> {
    Ok(v_of_sigma(problem, sigma)?.norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MGamma {
    pub value: f64,
    /// False when `m` is too large to enumerate and `value` is `L·m·G*`.
    pub exact: bool,
}

/// `M_Γ = max_σ M_σ`, by enumeration for `m ≤ 8`, otherwise the bound `L·m·G*`.
pub fn m_gamma(problem: &FiniteSumProblem) -> Result<MGamma> {
    if problem.m() > MAX_ENUMERATION {
        return Ok(MGamma {
            value: problem.constants().m_gamma_bound,
            exact: false,
        });
    }
    let data = OptimumData::new(problem);
    let mut best = 0.0_f64;
    for sigma in enumerate_permutations(problem.m())? {
        best = best.max(data.v_of_sigma(&sigma)?.norm());
    }
    Ok(MGamma { value: best, exact: true })
}

/// Coefficient of `H*⁻¹μ*` in the limit of `k^s (x̄_{q,k} − x*)`, i.e. the
/// negated limit of `k^s ᾱ_{q,k}`:
///
/// ```text
/// a_q(s) = −R (1 − (1−q)^{1−s}) / (q (1 − s))
/// ```
pub fn a_q_s(r: f64, s: f64, q: f64) -> Result<f64> {
    averaging::check_q(q)?;
    if !(s > 0.0 && s < 1.0) || !(r > 0.0) {
        return Err(Error::InvalidInput(format!("need R > 0 and s in (0, 1), got R={r}, s={s}")));
    }
    Ok(-r * (1.0 - (1.0 - q).powf(1.0 - s)) / (q * (1.0 - s)))
}

fn solve_against_hessian(problem: &FiniteSumProblem, rhs: &Vector) -> Result<Vector> {
    linalg::spd_solve(problem.hessian_at_optimum(), rhs)
}

/// `b_{q,k} = −ᾱ_{q,k} H*⁻¹ μ*` (`r_{q,k}` with `θ*` for smooth problems).
pub fn bias(problem: &FiniteSumProblem, schedule: &StepsizeSchedule, q: f64, k: usize) -> Result<Vector> {
    let alpha_bar = averaging::suffix_stepsize_average(schedule, q, k)?;
    Ok(solve_against_hessian(problem, &mu_star(problem))? * (-alpha_bar))
}

/// `a_q(s) H*⁻¹ μ*`, the almost-sure limit of `k^s (x̄_{q,k} − x*)` for RR.
pub fn averaged_limit(problem: &FiniteSumProblem, schedule: &StepsizeSchedule, q: f64) -> Result<Vector> {
    let a = a_q_s(schedule.r(), schedule.s(), q)?;
    Ok(solve_against_hessian(problem, &mu_star(problem))? * a)
}

/// Running sums `Ĥ = Σ ∇²f_{σ(i)}(x_{i-1})` and `μ̂ = Σ ∇²f_{σ(i)}(x_{i-1}) ∇f_{σ(i)}(x_{i-1})`
/// over one cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasAccumulator {
    pub mu_hat: Vector,
    pub h_hat: Matrix,
    pub steps: usize,
}

impl BiasAccumulator {
    pub fn new(n: usize) -> Self {
        Self {
            mu_hat: Vector::zeros(n),
            h_hat: Matrix::zeros(n, n),
            steps: 0,
        }
    }

    /// Adds the terms for processing `component` at the inner iterate `x_prev`.
    pub fn push(&mut self, component: &Component, x_prev: &Vector) {
        let h = component.hessian(x_prev);
        let g = component.gradient(x_prev);
        self.mu_hat += &h * &g;
        self.h_hat += h;
        self.steps += 1;
    }

    /// `−ᾱ · ½ · Ĥ⁻¹ μ̂`.
    pub fn estimate(&self, alpha_bar: f64) -> Result<Vector> {
        let solved = linalg::spd_solve(&self.h_hat, &self.mu_hat)
            .map_err(|_| Error::Singular("accumulated cycle Hessian is not positive definite".into()))?;
        Ok(solved * (-alpha_bar * BIAS_ESTIMATE_SCALE))
    }
}

/// `b̂_{q,K}` from the inner iterates and order of one cycle.
pub fn bias_estimate(
    problem: &FiniteSumProblem,
    inner_iterates: &[Vector],
    order: &[usize],
    alpha_bar: f64,
) -> Result<Vector> {
    if inner_iterates.len() < order.len() {
        return Err(Error::InvalidInput("need one inner iterate per processed component".into()));
    }
    let mut acc = BiasAccumulator::new(problem.dim());
    for (pos, &i) in order.iter().enumerate() {
        acc.push(problem.component(i)?, &inner_iterates[pos]);
    }
    acc.estimate(alpha_bar)
}

/// `Y_{q,k} = Σ_{j=ℓ}^{k-1} E_j / Σ_{j=ℓ}^{k-1} α_j` with `ℓ = ⌊(1−q)k⌋`.
pub fn y_qk(dense: &DenseLog, schedule: &StepsizeSchedule, q: f64, k: usize) -> Result<Vector> {
    averaging::check_q(q)?;
    if k == 0 || k > dense.gradient_errors.len() {
        return Err(Error::InvalidInput(format!(
            "k = {k} outside the logged range 1..={}",
            dense.gradient_errors.len()
        )));
    }
    let l = suffix_start(q, k);
    let n = dense.gradient_errors[0].len();
    let mut num = CompensatedVecSum::zeros(n);
    let mut den = CompensatedSum::default();
    for j in l..k {
        num.add(&dense.gradient_errors[j]);
        den.add(schedule.alpha(j));
    }
    Ok(num.value() / den.value())
}

/// `I_{q,k} = Σ_{j=ℓ}^{k-1} (x_0^j − x_0^{j+1}) / α_j`, divided by the window length.
pub fn i_qk(dense: &DenseLog, schedule: &StepsizeSchedule, q: f64, k: usize) -> Result<Vector> {
    averaging::check_q(q)?;
    if k == 0 || k >= dense.outer_iterates.len() {
        return Err(Error::InvalidInput(format!(
            "k = {k} outside the logged range 1..{}",
            dense.outer_iterates.len()
        )));
    }
    let l = suffix_start(q, k);
    let n = dense.outer_iterates[0].len();
    let mut acc = CompensatedVecSum::zeros(n);
    for j in l..k {
        acc.add(&((&dense.outer_iterates[j] - &dense.outer_iterates[j + 1]) / schedule.alpha(j)));
    }
    Ok(acc.value() / (k - l) as f64)
}

/// `‖E_k − α_k v̄(σ_k)‖ / α_k²` for every logged cycle.
pub fn first_order_residual_ratios(
    problem: &FiniteSumProblem,
    dense: &DenseLog,
    schedule: &StepsizeSchedule,
) -> Result<Vec<f64>> {
    let data = OptimumData::new(problem);
    dense
        .gradient_errors
        .iter()
        .zip(&dense.orders)
        .enumerate()
        .map(|(k, (e, order))| {
            let alpha = schedule.alpha(k);
            let v = data.v_of_sigma(order)?;
            Ok((e - v * alpha).norm() / (alpha * alpha))
        })
        .collect()
}

/// `Σ_{j<K} α_j²`, which tends to `R² ζ(2s)`.
pub fn zeta_stepsize_sum(schedule: &StepsizeSchedule, cycles: usize) -> Result<f64> {
    if schedule.s() <= 0.5 {
        return Err(Error::InvalidInput(format!(
            "squared stepsizes are not summable for s = {} <= 1/2",
            schedule.s()
        )));
    }
    let mut sum = CompensatedSum::default();
    // smallest terms first
    for j in (0..cycles).rev() {
        let a = schedule.alpha(j);
        sum.add(a * a);
    }
    Ok(sum.value())
}

/// Exportable summary of the permutation-level constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub mu_star: Vec<f64>,
    #[serde(rename = "M_gamma")]
    pub m_gamma: f64,
    /// `M_σ` keyed by one-based order label such as `(1,2)`.
    pub per_sigma: BTreeMap<String, f64>,
}

/// Builds the [`OracleReport`]; limited to `m ≤ 5`.
pub fn oracle_report(problem: &FiniteSumProblem) -> Result<OracleReport> {
    const REPORT_MAX: usize = 5;
    if problem.m() > REPORT_MAX {
        return Err(Error::TooManyPermutations { m: problem.m(), max: REPORT_MAX });
    }
    let data = OptimumData::new(problem);
    let mut per_sigma = BTreeMap::new();
    let mut best = 0.0_f64;
    for sigma in enumerate_permutations(problem.m())? {
        let norm = data.v_of_sigma(&sigma)?.norm();
        best = best.max(norm);
        per_sigma.insert(order_label(&sigma), norm);
    }
    Ok(OracleReport {
        mu_star: data.half_weighted_sum().iter().copied().collect(),
        m_gamma: best,
        per_sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example1_v_values() {
        let p = FiniteSumProblem::example1();
        assert_eq!(v_of_sigma(&p, &[0, 1]).unwrap()[0], 2.0);
        assert_eq!(v_of_sigma(&p, &[1, 0]).unwrap()[0], -1.0);
        assert_eq!(m_sigma(&p, &[0, 1]).unwrap(), 2.0);
        assert_eq!(m_sigma(&p, &[1, 0]).unwrap(), 1.0);
        let mg = m_gamma(&p).unwrap();
        assert_eq!(mg, MGamma { value: 2.0, exact: true });
    }

    #[test]
    fn example1_mu_star() {
        let p = FiniteSumProblem::example1();
        assert_eq!(mu_star(&p)[0], 0.5);
        assert_eq!(permutation_mean_v(&p).unwrap()[0], 0.5);
    }

    #[test]
    fn single_component_is_trivial() {
        let c = Component::quadratic(Matrix::identity(2, 2) * 2.0, Vector::from_vec(vec![1.0, -1.0]), 0.0).unwrap();
        let p = FiniteSumProblem::new(crate::ProblemKind::Quadratic, vec![c], None).unwrap();
        assert_eq!(v_of_sigma(&p, &[0]).unwrap().norm(), 0.0);
        assert!(mu_star(&p).norm() < 1e-15);
        assert_eq!(m_gamma(&p).unwrap().value, 0.0);
    }

    #[test]
    fn a_q_s_full_window() {
        // q = 1: −R/(1−s)
        assert!((a_q_s(2.0, 0.75, 1.0).unwrap() + 8.0).abs() < 1e-14);
        let half = a_q_s(1.0, 0.75, 0.5).unwrap();
        let expected = -(1.0 - 0.5f64.powf(0.25)) / 0.5 / 0.25;
        assert!((half - expected).abs() < 1e-15);
        assert!(a_q_s(1.0, 1.0, 0.5).is_err());
        assert!(a_q_s(1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn example1_bias_at_first_cycle() {
        let p = FiniteSumProblem::example1();
        let schedule = StepsizeSchedule::new(1.0, 0.75).unwrap();
        let b = bias(&p, &schedule, 1.0, 1).unwrap();
        assert!((b[0] + 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn frozen_iterates_reproduce_bias() {
        let p = FiniteSumProblem::example1();
        let x = p.optimum().clone();
        for order in [[0, 1], [1, 0]] {
            let inner = vec![x.clone(), x.clone(), x.clone()];
            let est = bias_estimate(&p, &inner, &order, 0.3).unwrap();
            let exact = -0.3 * 0.5 / 3.0;
            assert!((est[0] - exact).abs() < 1e-15);
        }
    }

    #[test]
    fn zeta_sum_basics() {
        let one = StepsizeSchedule::new(1.0, 0.75).unwrap();
        let two = StepsizeSchedule::new(2.0, 0.75).unwrap();
        assert_eq!(zeta_stepsize_sum(&one, 1).unwrap(), 1.0);
        let a = zeta_stepsize_sum(&one, 1000).unwrap();
        let b = zeta_stepsize_sum(&two, 1000).unwrap();
        assert!((b - 4.0 * a).abs() <= 1e-14 * b);
        let half = StepsizeSchedule::new(1.0, 0.5).unwrap();
        assert!(zeta_stepsize_sum(&half, 10).is_err());
    }

    #[test]
    fn report_keys_are_one_based() {
        let r = oracle_report(&FiniteSumProblem::example1()).unwrap();
        assert_eq!(r.per_sigma["(1,2)"], 2.0);
        assert_eq!(r.per_sigma["(2,1)"], 1.0);
        assert_eq!(r.m_gamma, 2.0);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"M_gamma\""));
    }
}
