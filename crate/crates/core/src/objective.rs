//! Component functions, finite-sum problems and their analytic constants.
//!
//! Every component has the form
//!
//! ```text
//! f_i(x) = ½ xᵀ P_i x − q_iᵀ x + r_i + ε_i · ρ(a_iᵀ x),    ρ(t) = log(1 + eᵗ)
//! ```
//!
//! with `P_i` symmetric positive semidefinite. Quadratic components carry no
//! softplus ridge (`ε_i = 0`); smooth components have bounded third
//! derivatives, so their Hessians are globally Lipschitz.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, Matrix, Vector};
use crate::{Error, Result};

/// Largest value of `|ρ'''(t)|` for the softplus, attained where `σ(t) = (3 ± √3)/6`.
pub const SOFTPLUS_THIRD_DERIVATIVE_MAX: f64 = 0.096_225_044_864_937_63; // 1/(6√3)

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = -1e-10;
const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITERS: usize = 100;

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Quadratic,
    Smooth,
}

/// The `ε · ρ(aᵀx)` term of a smooth component.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftplusRidge {
    pub eps: f64,
    pub a: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub p: Matrix,
    pub q: Vector,
    pub r: f64,
    pub ridge: Option<SoftplusRidge>,
}

impl Component {
    pub fn quadratic(p: Matrix, q: Vector, r: f64) -> Result<Self> {
        let c = Self {
            p,
            q,
            r,
            ridge: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn smooth(p: Matrix, q: Vector, r: f64, eps: f64, a: Vector) -> Result<Self> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "softplus weight must be finite and non-negative, got {eps}"
            )));
        }
        let c = Self {
            p,
            q,
            r,
            ridge: Some(SoftplusRidge { eps, a }),
        };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        let n = self.q.len();
        if self.p.nrows() != n || self.p.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "P is {}x{} but q has length {n}",
                self.p.nrows(),
                self.p.ncols()
            )));
        }
        if let Some(ridge) = &self.ridge {
            if ridge.a.len() != n {
                return Err(Error::InvalidInput("ridge direction has wrong length".into()));
            }
        }
        if !linalg::is_symmetric(&self.p, SYMMETRY_TOL) {
            return Err(Error::InvalidInput("P is not symmetric".into()));
        }
        let lmin = linalg::min_eigenvalue(&self.p);
        if lmin < PSD_TOL {
            return Err(Error::InvalidInput(format!(
                "P is not positive semidefinite (smallest eigenvalue {lmin:e})"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// True when the component has a constant Hessian.
    pub fn is_quadratic(&self) -> bool {
        self.ridge.as_ref().is_none_or(|r| r.eps == 0.0)
    }

    pub fn value(&self, x: &Vector) -> f64 {
        let mut v = 0.5 * x.dot(&(&self.p * x)) - self.q.dot(x) + self.r;
        if let Some(SoftplusRidge { eps, a }) = &self.ridge {
            v += eps * softplus(a.dot(x));
        }
        v
    }

    /// Writes `∇f_i(x)` into `out` without allocating.
    pub fn gradient_into(&self, x: &Vector, out: &mut Vector) {
        self.p.mul_to(x, out);
        *out -= &self.q;
        if let Some(SoftplusRidge { eps, a }) = &self.ridge {
            if *eps != 0.0 {
                out.axpy(eps * sigmoid(a.dot(x)), a, 1.0);
            }
        }
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        let mut g = Vector::zeros(self.dim());
        self.gradient_into(x, &mut g);
        g
    }

    pub fn hessian(&self, x: &Vector) -> Matrix {
        match &self.ridge {
            Some(SoftplusRidge { eps, a }) if *eps != 0.0 => {
                let s = sigmoid(a.dot(x));
                let w = eps * s * (1.0 - s);
                &self.p + (a * a.transpose()) * w
            }
            _ => self.p.clone(),
        }
    }

    /// `L_i`: `‖P_i‖` plus `ε‖a‖²/4` for the ridge (`ρ'' ≤ 1/4`).
    pub fn gradient_lipschitz(&self) -> f64 {
        let mut l = linalg::sym_norm(&self.p);
        if let Some(SoftplusRidge { eps, a }) = &self.ridge {
            l += eps * a.norm_squared() / 4.0;
        }
        l
    }

    /// `U_i = ε‖a‖³ · max|ρ'''|`; zero for quadratics.
    pub fn hessian_lipschitz(&self) -> f64 {
        match &self.ridge {
            Some(SoftplusRidge { eps, a }) => eps * a.norm().powi(3) * SOFTPLUS_THIRD_DERIVATIVE_MAX,
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    /// Strong convexity constant, taken as `λ_min(H*)`.
    pub c: f64,
    /// `Σ L_i`.
    pub l: f64,
    /// `max_i ‖∇f_i(x*)‖`.
    pub g_star: f64,
    /// `Σ U_i`.
    pub u: f64,
    /// `L · m · G*`, the triangle-inequality bound on every order's rate constant.
    pub m_gamma_bound: f64,
}

/// Immutable finite sum `f = Σ f_i` with its optimum and constants resolved at
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSumProblem {
    kind: ProblemKind,
    components: Vec<Component>,
    dim: usize,
    seed: Option<u64>,
    optimum: Vector,
    hessian_at_optimum: Matrix,
    optimal_value: f64,
    constants: ProblemConstants,
}

impl FiniteSumProblem {
    pub fn new(kind: ProblemKind, components: Vec<Component>, seed: Option<u64>) -> Result<Self> {
        let optimum = solve_optimum(&components)?;
        let dim = optimum.len();
        let hessian_at_optimum = sum_hessian(&components, &optimum);
        let optimal_value = components.iter().map(|c| c.value(&optimum)).sum();
        let mut problem = Self {
            kind,
            components,
            dim,
            seed,
            optimum,
            hessian_at_optimum,
            optimal_value,
            constants: ProblemConstants {
                c: 0.0,
                l: 0.0,
                g_star: 0.0,
                u: 0.0,
                m_gamma_bound: 0.0,
            },
        };
        problem.constants = problem.compute_constants();
        Ok(problem)
    }

    /// Two quadratics on the real line: `f₁ = ½(x−1)²`, `f₂ = ½(x+1)² + x²/2`.
    pub fn example1() -> Self {
        let scalar = |v: f64| Matrix::from_element(1, 1, v);
        let vec1 = |v: f64| Vector::from_element(1, v);
        let f1 = Component::quadratic(scalar(1.0), vec1(1.0), 0.5).expect("valid");
        let f2 = Component::quadratic(scalar(2.0), vec1(-1.0), 0.5).expect("valid");
        Self::new(ProblemKind::Quadratic, vec![f1, f2], None).expect("example problem is strongly convex")
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn m(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn optimum(&self) -> &Vector {
        &self.optimum
    }

    pub fn hessian_at_optimum(&self) -> &Matrix {
        &self.hessian_at_optimum
    }

    pub fn optimal_value(&self) -> f64 {
        self.optimal_value
    }

    pub fn constants(&self) -> &ProblemConstants {
        &self.constants
    }

    /// True when every component has a constant Hessian.
    pub fn is_quadratic(&self) -> bool {
        self.components.iter().all(Component::is_quadratic)
    }

    pub fn component(&self, i: usize) -> Result<&Component> {
        self.components
            .get(i)
            .ok_or(Error::IndexOutOfRange { index: i, m: self.m() })
    }

    /// `∇f_i(x)` for a zero-based component index.
    pub fn component_gradient(&self, i: usize, x: &Vector) -> Result<Vector> {
        Ok(self.component(i)?.gradient(x))
    }

    pub fn value(&self, x: &Vector) -> f64 {
        self.components.iter().map(|c| c.value(x)).sum()
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        sum_gradient(&self.components, x)
    }

    pub fn hessian(&self, x: &Vector) -> Matrix {
        sum_hessian(&self.components, x)
    }

    /// `f(x) − f(x*)`, evaluated around `x*` to avoid cancellation against `f(x*)`.
    pub fn objective_gap(&self, x: &Vector) -> f64 {
        let d = x - &self.optimum;
        if self.is_quadratic() {
            return 0.5 * d.dot(&(&self.hessian_at_optimum * &d));
        }
        let mut gap = linalg::CompensatedSum::default();
        for c in &self.components {
            gap.add(0.5 * d.dot(&(&c.p * &d)));
            gap.add((&c.p * &self.optimum - &c.q).dot(&d));
            if let Some(SoftplusRidge { eps, a }) = &c.ridge {
                gap.add(eps * (softplus(a.dot(x)) - softplus(a.dot(&self.optimum))));
            }
        }
        gap.value()
    }

    /// The per-component gradients at the optimum.
    pub fn gradients_at_optimum(&self) -> Vec<Vector> {
        self.components.iter().map(|c| c.gradient(&self.optimum)).collect()
    }

    /// The per-component Hessians at the optimum (`P_i` for quadratics).
    pub fn hessians_at_optimum(&self) -> Vec<Matrix> {
        self.components.iter().map(|c| c.hessian(&self.optimum)).collect()
    }

    fn compute_constants(&self) -> ProblemConstants {
        let c = linalg::min_eigenvalue(&self.hessian_at_optimum);
        let l: f64 = self.components.iter().map(Component::gradient_lipschitz).sum();
        let g_star = self
            .gradients_at_optimum()
            .iter()
            .fold(0.0_f64, |acc, g| acc.max(g.norm()));
        let u = self.components.iter().map(Component::hessian_lipschitz).sum();
        ProblemConstants {
            c,
            l,
            g_star,
            u,
            m_gamma_bound: l * self.m() as f64 * g_star,
        }
    }

    pub fn to_document(&self) -> ProblemDocument {
        ProblemDocument {
            kind: self.kind,
            n: self.dim,
            m: self.m(),
            components: self
                .components
                .iter()
                .map(|c| ComponentDocument {
                    p: c.p.row_iter().map(|row| row.iter().copied().collect()).collect(),
                    q: c.q.iter().copied().collect(),
                    r: c.r,
                    eps: c.ridge.as_ref().map(|r| r.eps),
                    a: c.ridge.as_ref().map(|r| r.a.iter().copied().collect()),
                })
                .collect(),
            seed: self.seed,
        }
    }

    pub fn from_document(doc: &ProblemDocument) -> Result<Self> {
        if doc.components.len() != doc.m {
            return Err(Error::InvalidInput(format!(
                "document declares m = {} but lists {} components",
                doc.m,
                doc.components.len()
            )));
        }
        if doc.m == 0 {
            return Err(Error::InvalidInput("problem has no components".into()));
        }
        let components = doc
            .components
            .iter()
            .map(|c| c.to_component(doc.n, doc.kind))
            .collect::<Result<Vec<_>>>()?;
        Self::new(doc.kind, components, doc.seed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ProblemDocument = serde_json::from_str(s)?;
        Self::from_document(&doc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// On-disk problem layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDocument {
    #[serde(rename = "type")]
    pub kind: ProblemKind,
    pub n: usize,
    pub m: usize,
    pub components: Vec<ComponentDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDocument {
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    #[serde(default)]
    pub r: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
}

impl ComponentDocument {
    fn to_component(&self, n: usize, kind: ProblemKind) -> Result<Component> {
        if self.p.len() != n || self.p.iter().any(|row| row.len() != n) || self.q.len() != n {
            return Err(Error::InvalidInput(format!(
                "component shape does not match n = {n}"
            )));
        }
        let p = Matrix::from_fn(n, n, |i, j| self.p[i][j]);
        let q = Vector::from_column_slice(&self.q);
        match (kind, self.eps, &self.a) {
            (ProblemKind::Smooth, Some(eps), Some(a)) => {
                Component::smooth(p, q, self.r, eps, Vector::from_column_slice(a))
            }
            (ProblemKind::Smooth, _, _) => Err(Error::InvalidInput(
                "smooth components need both `eps` and `a`".into(),
            )),
            (ProblemKind::Quadratic, _, _) => Component::quadratic(p, q, self.r),
        }
    }
}

fn sum_gradient(components: &[Component], x: &Vector) -> Vector {
    let mut g = Vector::zeros(x.len());
    let mut buf = Vector::zeros(x.len());
    for c in components {
        c.gradient_into(x, &mut buf);
        g += &buf;
    }
    g
}

fn sum_hessian(components: &[Component], x: &Vector) -> Matrix {
    let n = x.len();
    components
        .iter()
        .fold(Matrix::zeros(n, n), |acc, c| acc + c.hessian(x))
}

/// Minimizer of `Σ f_i`.
///
/// Quadratic sums are solved directly from `(Σ P_i) x = Σ q_i`; otherwise a
/// damped Newton iteration with step halving runs from the origin until the
/// gradient norm falls below `1e-12 · max(1, ‖∇f(0)‖)`.
pub fn solve_optimum(components: &[Component]) -> Result<Vector> {
    let first = components
        .first()
        .ok_or_else(|| Error::InvalidInput("problem has no components".into()))?;
    let n = first.dim();
    if components.iter().any(|c| c.dim() != n) {
        return Err(Error::InvalidInput("components have mixed dimensions".into()));
    }
    if components.iter().all(Component::is_quadratic) {
        let h = components
            .iter()
            .fold(Matrix::zeros(n, n), |acc, c| acc + &c.p);
        let b = components
            .iter()
            .fold(Vector::zeros(n), |acc, c| acc + &c.q);
        ensure_strongly_convex(&h)?;
        return linalg::spd_solve(&h, &b);
    }
    newton(components, n)
}

fn ensure_strongly_convex(h: &Matrix) -> Result<()> {
    let lmin = linalg::min_eigenvalue(h);
    if lmin <= 1e-12 * linalg::sym_norm(h).max(1.0) {
        return Err(Error::Singular(format!(
            "sum Hessian is not positive definite (smallest eigenvalue {lmin:e})"
        )));
    }
    Ok(())
}

fn newton(components: &[Component], n: usize) -> Result<Vector> {
    let value = |x: &Vector| components.iter().map(|c| c.value(x)).sum::<f64>();
    let mut x = Vector::zeros(n);
    let mut g = sum_gradient(components, &x);
    let tol = NEWTON_TOL * g.norm().max(1.0);
    for _ in 0..NEWTON_MAX_ITERS {
        if g.norm() <= tol {
            return Ok(x);
        }
        let h = sum_hessian(components, &x);
        ensure_strongly_convex(&h)?;
        let dir = linalg::spd_solve(&h, &(-&g))?;
        let f0 = value(&x);
        let slope = g.dot(&dir);
        let mut t = 1.0;
        let next = loop {
            let cand = &x + &dir * t;
            let g_cand = sum_gradient(components, &cand);
            // Near the optimum f stops resolving decrease; a smaller gradient is accepted instead.
            if value(&cand) <= f0 + 1e-4 * t * slope || g_cand.norm() < g.norm() {
                break Some((cand, g_cand));
            }
            t *= 0.5;
            if t < 1e-12 {
                break None;
            }
        };
        match next {
            Some((cand, g_cand)) => {
                x = cand;
                g = g_cand;
            }
            None => break,
        }
    }
    if g.norm() <= tol {
        return Ok(x);
    }
    Err(Error::NewtonFailed {
        iterations: NEWTON_MAX_ITERS,
        grad_norm: g.norm(),
    })
}

fn standard_normal_matrix(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    Matrix::from_fn(n, n, |_, _| rng.sample(StandardNormal))
}

fn standard_normal_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn random_curvature(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Matrix {
    let a = standard_normal_matrix(rng, n);
    let p = a.transpose() * &a + Matrix::identity(n, n) * shift;
    (&p + p.transpose()) * 0.5
}

fn check_generator_args(n: usize, m: usize, c_target: f64) -> Result<()> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidInput("n and m must be positive".into()));
    }
    if !(c_target > 0.0 && c_target.is_finite()) {
        return Err(Error::InvalidInput(format!("c_target must be positive, got {c_target}")));
    }
    Ok(())
}

/// Random quadratic sum with `P_i = A_iᵀA_i + (c_target/m) I`, standard normal
/// `A_i` and `q_i`, so `Σ P_i ⪰ c_target · I`.
pub fn make_quadratic_problem(n: usize, m: usize, c_target: f64, seed: u64) -> Result<FiniteSumProblem> {
    check_generator_args(n, m, c_target)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift = c_target / m as f64;
    let components = (0..m)
        .map(|_| {
            let p = random_curvature(&mut rng, n, shift);
            let q = standard_normal_vector(&mut rng, n);
            Component::quadratic(p, q, 0.0)
        })
        .collect::<Result<Vec<_>>>()?;
    FiniteSumProblem::new(ProblemKind::Quadratic, components, Some(seed))
}

/// Quadratic-plus-softplus sum: the quadratic parts are drawn exactly as in
/// [`make_quadratic_problem`], then each component gains `ε_i ρ(a_iᵀx)` with
/// `ε_i ~ U(0.5, 1.5)` and standard normal `a_i`.
pub fn make_smooth_problem(n: usize, m: usize, c_target: f64, seed: u64) -> Result<FiniteSumProblem> {
    make_smooth_problem_scaled(n, m, c_target, seed, 1.0)
}

/// [`make_smooth_problem`] with every `ε_i` multiplied by `eps_scale`.
pub fn make_smooth_problem_scaled(
    n: usize,
    m: usize,
    c_target: f64,
    seed: u64,
    eps_scale: f64,
) -> Result<FiniteSumProblem> {
    check_generator_args(n, m, c_target)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift = c_target / m as f64;
    let quadratic_parts: Vec<(Matrix, Vector)> = (0..m)
        .map(|_| {
            let p = random_curvature(&mut rng, n, shift);
            let q = standard_normal_vector(&mut rng, n);
            (p, q)
        })
        .collect();
    let components = quadratic_parts
        .into_iter()
        .map(|(p, q)| {
            let eps = eps_scale * rng.random_range(0.5..1.5);
            let a = standard_normal_vector(&mut rng, n);
            Component::smooth(p, q, 0.0, eps, a)
        })
        .collect::<Result<Vec<_>>>()?;
    FiniteSumProblem::new(ProblemKind::Smooth, components, Some(seed))
}

/// Named problems used across tests, examples and the CLI.
pub fn fixture(name: &str) -> Result<FiniteSumProblem> {
    match name {
        "example1" => Ok(FiniteSumProblem::example1()),
        "quad-seed7" => make_quadratic_problem(5, 5, 1.0, 7),
        "smooth-seed1" => make_smooth_problem(2, 4, 1.0, 1),
        other => Err(Error::InvalidInput(format!("unknown fixture `{other}`"))),
    }
}

pub const FIXTURE_NAMES: [&str; 3] = ["example1", "quad-seed7", "smooth-seed1"];
