use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use reshuffle::birr::birr_run;
use reshuffle::config::{ConfigDocument, Method, RunConfig};
use reshuffle::engine::{self, StepsizeSchedule};
use reshuffle::harness::{self, CompareSettings, SuiteConfig};
use reshuffle::objective::{self, FiniteSumProblem};
use reshuffle::Result;

#[derive(Parser)]
#[command(name = "reshuffle", version, about = "Incremental gradient experiments on finite-sum problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method from a JSON config and write the trajectory CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Multi-seed comparison of methods with rate fits.
    Compare {
        /// Problem JSON file or fixture name.
        #[arg(long)]
        problem: String,
        #[arg(long, value_delimiter = ',', default_value = "rr,sgd")]
        methods: Vec<Method>,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// Stepsize scale; defaults to 1 for example1 and 1/max L_i otherwise.
        #[arg(long = "R")]
        r: Option<f64>,
        #[arg(long, default_value_t = 0.75)]
        s: f64,
        #[arg(long, default_value_t = 0.5)]
        q: f64,
        #[arg(long = "K", default_value_t = 100_000)]
        k: usize,
        #[arg(long)]
        kmin: Option<f64>,
        #[arg(long)]
        kmax: Option<f64>,
        /// Directory for per-seed trajectories and figure CSVs.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Report JSON path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every acceptance check and write the JSON verdicts.
    Suite {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        fixtures: Option<Vec<String>>,
        /// Additional stepsize exponents for the averaged-limit check.
        #[arg(long, value_delimiter = ',')]
        extra_s: Vec<f64>,
    },
    /// Log-log slope of one trajectory CSV column.
    Fit {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value = "f_gap")]
        column: String,
        #[arg(long, default_value_t = 1e3)]
        kmin: f64,
        #[arg(long)]
        kmax: Option<f64>,
    },
}

fn load_problem(spec: &str) -> Result<(FiniteSumProblem, f64)> {
    if objective::FIXTURE_NAMES.contains(&spec) {
        let problem = objective::fixture(spec)?;
        let r = harness::fixture_stepsize_scale(spec, &problem);
        Ok((problem, r))
    } else {
        let problem = FiniteSumProblem::load(spec)?;
        let r = harness::default_stepsize_scale(&problem);
        Ok((problem, r))
    }
}

fn write_text(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Run { config, out } => {
            let doc = ConfigDocument::load(&config)?;
            let problem = doc.problem.resolve()?;
            let run_config = doc.to_run_config()?;
            let mut buffer = Vec::new();
            if run_config.method == Method::Birr {
                let outcome = birr_run(&problem, &run_config)?;
                outcome.trajectory.write_csv(&mut buffer, &outcome.csv_columns())?;
            } else {
                engine::run(&problem, &run_config)?.write_csv(&mut buffer, &[])?;
            }
            let text = String::from_utf8(buffer).expect("CSV is UTF-8");
            write_text(out.as_ref(), &text)?;
            Ok(true)
        }
        Command::Compare { problem, methods, seeds, r, s, q, k, kmin, kmax, out_dir, out } => {
            let (problem, default_r) = load_problem(&problem)?;
            let schedule = StepsizeSchedule::new(r.unwrap_or(default_r), s)?;
            let base = RunConfig::new(Method::Rr, schedule, q, k, 0);
            let window = match (kmin, kmax) {
                (None, None) => None,
                (lo, hi) => Some((lo.unwrap_or(harness::thresholds::FIT_WINDOW_START), hi.unwrap_or(k as f64))),
            };
            let settings = CompareSettings { window, out_dir, ..CompareSettings::default() };
            let seeds: Vec<u64> = (0..seeds).collect();
            let report = harness::compare_methods(&problem, &base, &methods, &seeds, &settings)?;
            write_text(out.as_ref(), &(report.to_json()? + "\n"))?;
            Ok(report.all_passed())
        }
        Command::Suite { out, fixtures, extra_s } => {
            let mut config = SuiteConfig::default();
            if let Some(fixtures) = fixtures {
                config.fixtures = fixtures;
            }
            config.extra_limit_s = extra_s;
            let report = harness::theorem_suite(&config)?;
            for check in &report.checks {
                println!("{}", check.summary_line());
            }
            report.save(&out)?;
            Ok(report.all_passed())
        }
        Command::Fit { csv, column, kmin, kmax } => {
            let (ks, values) = engine::read_csv_column(&csv, &column)?;
            let hi = kmax.unwrap_or_else(|| ks.iter().copied().fold(0.0, f64::max));
            let fit = harness::fit_rate(&ks, &values, (kmin, hi))?;
            println!("{}", serde_json::to_string_pretty(&fit)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
