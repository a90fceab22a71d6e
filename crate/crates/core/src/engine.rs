//! Inner and outer iteration loops.
//!
//! A cycle `k` starts from the outer iterate `x_0^k`, processes the `m`
//! components in the cycle's order with the fixed stepsize `α_k`,
//!
//! ```text
//! x_i^k = x_{i-1}^k − α_k ∇f_{σ_k(i)}(x_{i-1}^k),    i = 1..m
//! ```
//!
//! and hands `x_m^k` on as `x_0^{k+1}`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::averaging::{self, StreamingAverage, StreamingScalarAverage};
use crate::config::{Method, RunConfig};
use crate::linalg::Vector;
use crate::objective::FiniteSumProblem;
use crate::sampling::{OrderMode, OrderSpec};
use crate::{Error, Result};

/// Runs abort once `dist_k` exceeds this multiple of `max(1, dist_0)`.
pub const DIVERGENCE_FACTOR: f64 = 1e12;

/// `α_k = R / (k+1)^s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepsizeSchedule {
    #[serde(rename = "R")]
    r: f64,
    s: f64,
}

impl StepsizeSchedule {
    pub fn new(r: f64, s: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidInput(format!("R must be positive, got {r}")));
        }
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::InvalidInput(format!("s must lie in (0, 1), got {s}")));
        }
        Ok(Self { r, s })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn alpha(&self, k: usize) -> f64 {
        self.r / ((k + 1) as f64).powf(self.s)
    }
}

/// Output of [`run_cycle`].
#[derive(Debug, Clone, PartialEq)]
pub struct CycleResult {
    pub x_out: Vector,
    /// `x_0^k, x_1^k, …, x_m^k`.
    pub inner_iterates: Vec<Vector>,
}

/// One pass over `order` from `x_in` with stepsize `alpha`.
///
/// `order` may repeat indices (with-replacement sampling). A non-finite
/// iterate is reported as [`Error::NonFinite`] with cycle 0; [`run`] reports
/// the actual cycle.
pub fn run_cycle(problem: &FiniteSumProblem, x_in: &Vector, order: &[usize], alpha: f64) -> Result<CycleResult> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidInput(format!("stepsize must be non-negative, got {alpha}")));
    }
    if x_in.len() != problem.dim() {
        return Err(Error::InvalidInput("starting point has wrong dimension".into()));
    }
    if let Some(&bad) = order.iter().find(|&&i| i >= problem.m()) {
        return Err(Error::IndexOutOfRange { index: bad, m: problem.m() });
    }
    let mut x = x_in.clone();
    let mut grad = Vector::zeros(problem.dim());
    let mut inner = Vec::with_capacity(order.len() + 1);
    inner.push(x.clone());
    for &i in order {
        problem.components()[i].gradient_into(&x, &mut grad);
        x.axpy(-alpha, &grad, 1.0);
        inner.push(x.clone());
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { cycle: 0 });
    }
    Ok(CycleResult {
        x_out: x,
        inner_iterates: inner,
    })
}

/// `E_k = Σ_i ∇f_{σ(i)}(x_{i-1}^k) − ∇f_{σ(i)}(x_0^k)`.
pub fn cycle_gradient_error(
    problem: &FiniteSumProblem,
    x0: &Vector,
    inner_iterates: &[Vector],
    order: &[usize],
) -> Result<Vector> {
    if inner_iterates.len() < order.len() {
        return Err(Error::InvalidInput(
            "need at least one inner iterate per processed component".into(),
        ));
    }
    let n = problem.dim();
    let mut e = Vector::zeros(n);
    let mut g_inner = Vector::zeros(n);
    let mut g_start = Vector::zeros(n);
    for (pos, &i) in order.iter().enumerate() {
        let c = problem.component(i)?;
        c.gradient_into(&inner_iterates[pos], &mut g_inner);
        c.gradient_into(x0, &mut g_start);
        e += &g_inner;
        e -= &g_start;
    }
    Ok(e)
}

/// One logged cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub k: usize,
    /// `x_0^k`.
    pub iterate: Vector,
    pub dist: f64,
    pub f_gap: f64,
    /// Averages over `x_0^0 … x_0^{k-1}`; absent at `k = 0`.
    pub averages: Option<LoggedAverages>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoggedAverages {
    /// `x̄_{1,k}`.
    pub simple: Vector,
    /// `ᾱ_{1,k}`.
    pub alpha_simple: f64,
    /// `x̄_{q,k}` for the run's `q`.
    pub suffix: Vector,
    /// `ᾱ_{q,k}`.
    pub alpha_suffix: f64,
    pub suffix_dist: f64,
    pub suffix_f_gap: f64,
}

/// Per-cycle records, kept only when `dense_log` is set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseLog {
    /// `x_0^0 … x_0^K`.
    pub outer_iterates: Vec<Vector>,
    /// `E_0 … E_{K-1}`.
    pub gradient_errors: Vec<Vector>,
    pub orders: Vec<Vec<usize>>,
    /// `max_{0≤i<m} ‖x_i^k − x*‖` per cycle.
    pub inner_max_dist: Vec<f64>,
}

/// Inner iterates of the final cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct LastCycle {
    pub k: usize,
    pub alpha: f64,
    pub order: Vec<usize>,
    pub inner_iterates: Vec<Vector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub method: Method,
    pub q: f64,
    pub schedule: StepsizeSchedule,
    pub entries: Vec<LogEntry>,
    pub final_iterate: Vector,
    pub dense: Option<DenseLog>,
    pub last_cycle: Option<LastCycle>,
}

impl Trajectory {
    pub fn last(&self) -> &LogEntry {
        self.entries.last().expect("trajectory always logs cycle 0")
    }

    pub fn cycles(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.k).collect()
    }

    pub fn entry_at(&self, k: usize) -> Option<&LogEntry> {
        self.entries
            .binary_search_by_key(&k, |e| e.k)
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn dense(&self) -> Result<&DenseLog> {
        self.dense.as_ref().ok_or(Error::MissingDenseLog)
    }

    /// Column by CSV name.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let pick = |f: &dyn Fn(&LogEntry) -> f64| self.entries.iter().map(f).collect();
        Ok(match name {
            "k" => pick(&|e| e.k as f64),
            "dist" => pick(&|e| e.dist),
            "f_gap" => pick(&|e| e.f_gap),
            "xbar_dist" => pick(&|e| e.averages.as_ref().map_or(f64::NAN, |a| a.suffix_dist)),
            "xbar_f_gap" => pick(&|e| e.averages.as_ref().map_or(f64::NAN, |a| a.suffix_f_gap)),
            "alpha_bar" => pick(&|e| e.averages.as_ref().map_or(f64::NAN, |a| a.alpha_suffix)),
            other => return Err(Error::InvalidInput(format!("unknown trajectory column `{other}`"))),
        })
    }

    /// CSV with header `k,dist,f_gap,xbar_dist,alpha_bar`, plus any `extra`
    /// columns (one value per logged row).
    pub fn write_csv<W: Write>(&self, out: W, extra: &[(&str, Vec<f64>)]) -> Result<()> {
        for (name, values) in extra {
            if values.len() != self.entries.len() {
                return Err(Error::InvalidInput(format!(
                    "extra column `{name}` has {} values for {} rows",
                    values.len(),
                    self.entries.len()
                )));
            }
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["k", "dist", "f_gap", "xbar_dist", "alpha_bar"];
        header.extend(extra.iter().map(|(name, _)| *name));
        w.write_record(&header)?;
        for (row, e) in self.entries.iter().enumerate() {
            let (xbar_dist, alpha_bar) = e
                .averages
                .as_ref()
                .map_or((f64::NAN, f64::NAN), |a| (a.suffix_dist, a.alpha_suffix));
            let mut record = vec![e.k.to_string(), fmt17(e.dist), fmt17(e.f_gap), fmt17(xbar_dist), fmt17(alpha_bar)];
            record.extend(extra.iter().map(|(_, values)| fmt17(values[row])));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, extra: &[(&str, Vec<f64>)]) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file), extra)
    }
}

/// Decimal with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Reads one named column from a trajectory CSV, together with `k`.
pub fn read_csv_column(path: impl AsRef<Path>, column: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidInput(format!("CSV has no column `{name}`")))
    };
    let (k_idx, v_idx) = (find("k")?, find(column)?);
    let mut ks = Vec::new();
    let mut vs = Vec::new();
    for record in reader.records() {
        let record = record?;
        let parse = |idx: usize| -> Result<f64> {
            record[idx]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("bad number `{}`: {e}", &record[idx])))
        };
        ks.push(parse(k_idx)?);
        vs.push(parse(v_idx)?);
    }
    Ok((ks, vs))
}

pub fn order_spec_for(problem: &FiniteSumProblem, config: &RunConfig) -> Result<OrderSpec> {
    let m = problem.m();
    let mode = match config.method {
        Method::Ig => OrderMode::Fixed(config.sigma.clone().unwrap_or_else(|| (0..m).collect())),
        Method::Rr | Method::Birr => OrderMode::Reshuffle,
        Method::Sgd => OrderMode::WithReplacement,
    };
    OrderSpec::new(mode, m, config.seed)
}

/// Cycles that [`run`] logs: every `stride`-th cycle plus the last.
pub fn logged_cycles(cycles: usize, stride: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = (0..=cycles).step_by(stride.max(1)).collect();
    if ks.last() != Some(&cycles) {
        ks.push(cycles);
    }
    ks
}

/// Executes `config.cycles` cycles of the configured method.
///
/// BIRR runs produce the same trajectory as RR; the bias correction itself is
/// applied by [`crate::birr::birr_run`].
pub fn run(problem: &FiniteSumProblem, config: &RunConfig) -> Result<Trajectory> {
    config.validate()?;
    let n = problem.dim();
    let x_star = problem.optimum();
    let mut x = config.x0.clone().unwrap_or_else(|| Vector::zeros(n));
    if x.len() != n {
        return Err(Error::InvalidInput(format!(
            "x0 has length {} but the problem has dimension {n}",
            x.len()
        )));
    }
    let orders = order_spec_for(problem, config)?;
    let k_total = config.cycles;
    let q = config.q;

    let log_ks = logged_cycles(k_total, config.log_stride);
    let prefix_needed: Vec<usize> = {
        let mut v: Vec<usize> = log_ks
            .iter()
            .filter(|&&k| k > 0)
            .map(|&k| averaging::suffix_start(q, k))
            .collect();
        v.dedup();
        v
    };
    let mut snapshots: BTreeMap<usize, (Vector, f64)> = BTreeMap::new();
    let mut next_log = 0;
    let mut next_prefix = 0;

    let dist0 = (&x - x_star).norm();
    let limit = DIVERGENCE_FACTOR * dist0.max(1.0);

    let mut avg_x = StreamingAverage::new(n);
    let mut avg_alpha = StreamingScalarAverage::default();
    let mut entries = Vec::with_capacity(log_ks.len());
    let mut dense = config.dense_log.then(|| DenseLog {
        outer_iterates: Vec::with_capacity(k_total + 1),
        gradient_errors: Vec::with_capacity(k_total),
        orders: Vec::with_capacity(k_total),
        inner_max_dist: Vec::with_capacity(k_total),
    });
    let mut last_cycle = None;

    let mut order = Vec::with_capacity(problem.m());
    let mut grad = Vector::zeros(n);
    let mut inner: Vec<Vector> = vec![Vector::zeros(n); problem.m() + 1];

    for k in 0..=k_total {
        // Averages now cover x_0^0 … x_0^{k-1}.
        while next_prefix < prefix_needed.len() && prefix_needed[next_prefix] == k {
            snapshots.insert(k, (avg_x.mean(), avg_alpha.mean()));
            next_prefix += 1;
        }
        if next_log < log_ks.len() && log_ks[next_log] == k {
            entries.push(log_entry(problem, q, k, &x, &avg_x, &avg_alpha, &snapshots)?);
            next_log += 1;
        }
        if let Some(d) = dense.as_mut() {
            d.outer_iterates.push(x.clone());
        }
        if k == k_total {
            break;
        }

        let alpha = config.schedule.alpha(k);
        orders.fill_cycle_order(k as u64, &mut order);
        // x_0^k joins the averages, giving x̄_{1,k+1} and ᾱ_{1,k+1}.
        avg_x.update(&x);
        avg_alpha.update(alpha);
        let keep_inner = dense.is_some() || k + 1 == k_total;
        if keep_inner {
            inner[0].copy_from(&x);
        }
        for (pos, &i) in order.iter().enumerate() {
            problem.components()[i].gradient_into(&x, &mut grad);
            x.axpy(-alpha, &grad, 1.0);
            if keep_inner {
                inner[pos + 1].copy_from(&x);
            }
        }

        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { cycle: k + 1 });
        }
        let dist = (&x - x_star).norm();
        if dist > limit {
            return Err(Error::Diverged { cycle: k + 1, dist, limit });
        }
        if let Some(d) = dense.as_mut() {
            let e = cycle_gradient_error(problem, &inner[0], &inner[..problem.m()], &order)?;
            d.gradient_errors.push(e);
            d.orders.push(order.clone());
            let spread = inner[..problem.m()]
                .iter()
                .map(|xi| (xi - x_star).norm())
                .fold(0.0_f64, f64::max);
            d.inner_max_dist.push(spread);
        }
        if k + 1 == k_total {
            last_cycle = Some(LastCycle {
                k,
                alpha,
                order: order.clone(),
                inner_iterates: inner.clone(),
            });
        }
    }

    Ok(Trajectory {
        method: config.method,
        q,
        schedule: config.schedule,
        entries,
        final_iterate: x,
        dense,
        last_cycle,
    })
}

fn log_entry(
    problem: &FiniteSumProblem,
    q: f64,
    k: usize,
    x: &Vector,
    avg_x: &StreamingAverage,
    avg_alpha: &StreamingScalarAverage,
    snapshots: &BTreeMap<usize, (Vector, f64)>,
) -> Result<LogEntry> {
    let x_star = problem.optimum();
    let averages = if k == 0 {
        None
    } else {
        let l = averaging::suffix_start(q, k);
        let (prefix_x, prefix_alpha) = snapshots
            .get(&l)
            .ok_or_else(|| Error::InvalidInput(format!("missing prefix snapshot at cycle {l}")))?;
        let simple = avg_x.mean();
        let alpha_simple = avg_alpha.mean();
        let suffix = averaging::suffix_from_snapshots(&simple, prefix_x, k, l)?;
        let alpha_suffix = averaging::suffix_scalar_from_snapshots(alpha_simple, *prefix_alpha, k, l)?;
        Some(LoggedAverages {
            suffix_dist: (&suffix - x_star).norm(),
            suffix_f_gap: problem.objective_gap(&suffix),
            simple,
            alpha_simple,
            suffix,
            alpha_suffix,
        })
    };
    Ok(LogEntry {
        k,
        iterate: x.clone(),
        dist: (x - x_star).norm(),
        f_gap: problem.objective_gap(x),
        averages,
    })
}
