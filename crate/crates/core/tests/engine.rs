use reshuffle::engine::{cycle_gradient_error, logged_cycles, read_csv_column};
use reshuffle::harness::{fit_rate, log_spaced};
use reshuffle::linalg::{Matrix, Vector};
use reshuffle::objective::{self, Component};
use reshuffle::{oracles, run, run_cycle, Error, FiniteSumProblem, Method, ProblemKind, RunConfig, StepsizeSchedule};

fn v(x: f64) -> Vector {
    Vector::from_element(1, x)
}

fn schedule(r: f64, s: f64) -> StepsizeSchedule {
    StepsizeSchedule::new(r, s).unwrap()
}

fn scalar_problem() -> FiniteSumProblem {
    let c = Component::quadratic(Matrix::from_element(1, 1, 1.0), v(0.0), 0.0).unwrap();
    FiniteSumProblem::new(ProblemKind::Quadratic, vec![c], None).unwrap()
}

#[test]
fn stepsizes() {
    let s = schedule(2.0, 0.5);
    assert_eq!(s.alpha(0), 2.0);
    assert_eq!(s.alpha(3), 1.0);
    assert!(StepsizeSchedule::new(0.0, 0.5).is_err());
    assert!(StepsizeSchedule::new(1.0, 1.0).is_err());
    assert!(StepsizeSchedule::new(1.0, 0.0).is_err());
}

#[test]
fn example1_hand_simulation() {
    let p = FiniteSumProblem::example1();
    let out = run_cycle(&p, &v(0.0), &[0, 1], 1.0).unwrap();
    let xs: Vec<f64> = out.inner_iterates.iter().map(|x| x[0]).collect();
    assert_eq!(xs, vec![0.0, 1.0, -2.0]);
    assert_eq!(out.x_out[0], -2.0);
}

#[test]
fn scalar_gradient_step_and_zero_step() {
    let p = scalar_problem();
    let out = run_cycle(&p, &v(3.0), &[0], 0.25).unwrap();
    assert_eq!(out.x_out[0], 0.75 * 3.0);
    let p = FiniteSumProblem::example1();
    let still = run_cycle(&p, &v(0.7), &[1, 0], 0.0).unwrap();
    assert_eq!(still.x_out, v(0.7));
    assert!(run_cycle(&p, &v(0.0), &[0, 1], -1.0).is_err());
}

#[test]
fn cycle_error_on_example1() {
    let p = FiniteSumProblem::example1();
    for alpha in [1.0, 0.1, 1e-3] {
        let out = run_cycle(&p, &v(0.0), &[0, 1], alpha).unwrap();
        let e = cycle_gradient_error(&p, &v(0.0), &out.inner_iterates, &[0, 1]).unwrap();
        assert!((e[0] - 2.0 * alpha).abs() <= 1e-15);
    }
}

#[test]
fn single_component_has_no_cycle_error() {
    let p = scalar_problem();
    let out = run_cycle(&p, &v(5.0), &[0], 0.3).unwrap();
    assert_eq!(cycle_gradient_error(&p, &v(5.0), &out.inner_iterates, &[0]).unwrap()[0], 0.0);
}

#[test]
fn step_decomposition_identity_on_logged_cycles() {
    for name in objective::FIXTURE_NAMES {
        let p = objective::fixture(name).unwrap();
        let r = reshuffle::harness::fixture_stepsize_scale(name, &p);
        let sch = schedule(r, 0.75);
        let cfg = RunConfig::new(Method::Rr, sch, 1.0, 2000, 9).with_dense_log(true);
        let t = run(&p, &cfg).unwrap();
        let d = t.dense().unwrap();
        for k in 0..2000 {
            let alpha = sch.alpha(k);
            let lhs = (&d.outer_iterates[k] - &d.outer_iterates[k + 1]) / alpha;
            let grad = p.gradient(&d.outer_iterates[k]);
            let gap = (lhs - &grad - &d.gradient_errors[k]).norm();
            assert!(gap <= 1e-9 * (1.0 + grad.norm()), "{name} k={k}: {gap}");
        }
    }
}

#[test]
fn zero_cycles_logs_only_the_start() {
    let p = FiniteSumProblem::example1();
    let t = run(&p, &RunConfig::new(Method::Rr, schedule(1.0, 0.75), 1.0, 0, 0).with_x0(v(2.0))).unwrap();
    assert_eq!(t.cycles(), vec![0]);
    assert_eq!(t.final_iterate, v(2.0));
    assert!(t.last_cycle.is_none());
}

#[test]
fn logging_stride_includes_the_last_cycle() {
    assert_eq!(logged_cycles(10, 4), vec![0, 4, 8, 10]);
    let p = FiniteSumProblem::example1();
    let t = run(&p, &RunConfig::new(Method::Sgd, schedule(1.0, 0.75), 1.0, 10, 0).with_log_stride(4)).unwrap();
    assert_eq!(t.cycles(), vec![0, 4, 8, 10]);
}

#[test]
fn runs_are_bit_reproducible() {
    let p = objective::fixture("quad-seed7").unwrap();
    let sch = schedule(0.05, 0.75);
    for method in [Method::Ig, Method::Rr, Method::Sgd] {
        let cfg = RunConfig::new(method, sch, 0.5, 3000, 5).with_log_stride(100);
        assert_eq!(run(&p, &cfg).unwrap(), run(&p, &cfg).unwrap());
    }
    let a = run(&p, &RunConfig::new(Method::Rr, sch, 0.5, 3000, 5)).unwrap();
    let b = run(&p, &RunConfig::new(Method::Rr, sch, 0.5, 3000, 6)).unwrap();
    assert_ne!(a.final_iterate, b.final_iterate);
}

#[test]
fn logged_averages_match_outer_iterates() {
    let p = FiniteSumProblem::example1();
    let sch = schedule(1.0, 0.75);
    let cfg = RunConfig::new(Method::Rr, sch, 0.3, 500, 4).with_dense_log(true).with_log_stride(7);
    let t = run(&p, &cfg).unwrap();
    let xs = &t.dense().unwrap().outer_iterates;
    for e in t.entries.iter().filter(|e| e.k > 0) {
        let a = e.averages.as_ref().unwrap();
        let l = reshuffle::averaging::suffix_start(0.3, e.k);
        let direct: f64 = xs[l..e.k].iter().map(|x| x[0]).sum::<f64>() / (e.k - l) as f64;
        assert!((a.suffix[0] - direct).abs() <= 1e-10 * direct.abs().max(1e-3));
        let simple: f64 = xs[..e.k].iter().map(|x| x[0]).sum::<f64>() / e.k as f64;
        assert!((a.simple[0] - simple).abs() <= 1e-12 * simple.abs().max(1e-3));
        assert_eq!(e.dist, xs[e.k][0].abs());
    }
}

#[test]
fn order_envelopes_on_example1() {
    let p = FiniteSumProblem::example1();
    let sch = schedule(1.0, 0.75);
    let k = 100_000;
    let c = p.constants().c;
    for sigma in [vec![0, 1], vec![1, 0]] {
        let m_sigma = oracles::m_sigma(&p, &sigma).unwrap();
        let t = run(&p, &RunConfig::new(Method::Ig, sch, 1.0, k, 0).with_sigma(sigma).with_log_stride(k)).unwrap();
        assert!(t.last().dist * (k as f64).powf(0.75) <= 1.5 * m_sigma / c);
    }
    let m_gamma = oracles::m_gamma(&p).unwrap().value;
    for seed in [1, 2] {
        let t = run(&p, &RunConfig::new(Method::Rr, sch, 1.0, k, seed).with_log_stride(k)).unwrap();
        assert!(t.last().dist <= m_gamma / c * (k as f64).powf(-0.75) * 1.5);
    }
}

#[test]
fn inner_iterates_stay_in_the_stepsize_envelope() {
    let k_max = 100_000;
    for (name, method) in [("example1", Method::Rr), ("example1", Method::Ig), ("smooth-seed1", Method::Rr)] {
        let p = objective::fixture(name).unwrap();
        let sch = schedule(reshuffle::harness::fixture_stepsize_scale(name, &p), 0.75);
        let cfg = RunConfig::new(method, sch, 1.0, k_max, 3).with_dense_log(true).with_log_stride(k_max);
        let t = run(&p, &cfg).unwrap();
        let spread = &t.dense().unwrap().inner_max_dist;
        let starts = log_spaced(100, k_max - 100, 20);
        let maxima: Vec<f64> = starts
            .iter()
            .map(|&s| (s..s + 100).map(|k| spread[k] * (k as f64).powf(0.75)).fold(0.0, f64::max))
            .collect();
        let ks: Vec<f64> = starts.iter().map(|&s| s as f64).collect();
        let fit = fit_rate(&ks, &maxima, (100.0, k_max as f64)).unwrap();
        assert!(fit.slope <= 0.02, "{name} {method}: slope {}", fit.slope);
    }
}

#[test]
fn divergence_is_reported_with_cycle() {
    let p = FiniteSumProblem::example1();
    let cfg = RunConfig::new(Method::Ig, schedule(50.0, 0.01), 1.0, 1000, 0).with_x0(v(1.0));
    match run(&p, &cfg) {
        Err(Error::Diverged { cycle, .. }) | Err(Error::NonFinite { cycle }) => assert!(cycle >= 1),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn config_validation() {
    let p = FiniteSumProblem::example1();
    let sch = schedule(1.0, 0.4);
    assert!(run(&p, &RunConfig::new(Method::Rr, sch, 1.0, 10, 0)).is_err());
    assert!(run(&p, &RunConfig::new(Method::Ig, sch, 1.0, 10, 0)).is_ok());
    assert!(run(&p, &RunConfig::new(Method::Ig, sch, 0.0, 10, 0)).is_err());
    assert!(run(&p, &RunConfig::new(Method::Ig, sch, 1.0, 10, 0).with_log_stride(0)).is_err());
    assert!(run(&p, &RunConfig::new(Method::Ig, sch, 1.0, 10, 0).with_x0(Vector::zeros(2))).is_err());
}

#[test]
fn csv_export_round_trips() {
    let p = FiniteSumProblem::example1();
    let t = run(&p, &RunConfig::new(Method::Rr, schedule(1.0, 0.75), 0.5, 1000, 2).with_log_stride(100)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    t.save_csv(&path, &[]).unwrap();
    let header = std::fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "k,dist,f_gap,xbar_dist,alpha_bar");
    let (ks, dist) = read_csv_column(&path, "dist").unwrap();
    assert_eq!(ks.len(), 11);
    assert_eq!(dist, t.column("dist").unwrap());
    assert!(t.save_csv(&path, &[("extra", vec![1.0])]).is_err());
}
