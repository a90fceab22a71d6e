//! Run configuration and its JSON document form.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::averaging::check_q;
use crate::engine::StepsizeSchedule;
use crate::linalg::Vector;
use crate::objective::{self, FiniteSumProblem, ProblemDocument};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ig,
    Sgd,
    Rr,
    Birr,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ig, Method::Sgd, Method::Rr, Method::Birr];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ig => "ig",
            Method::Sgd => "sgd",
            Method::Rr => "rr",
            Method::Birr => "birr",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ig" => Ok(Method::Ig),
            "sgd" => Ok(Method::Sgd),
            "rr" => Ok(Method::Rr),
            "birr" => Ok(Method::Birr),
            other => Err(Error::InvalidInput(format!("unknown method `{other}`"))),
        }
    }
}

/// Everything a single run needs besides the problem.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub schedule: StepsizeSchedule,
    pub q: f64,
    pub cycles: usize,
    pub seed: u64,
    /// Starting point; `None` means the origin.
    pub x0: Option<Vector>,
    /// Zero-based fixed order for IG; `None` means the identity.
    pub sigma: Option<Vec<usize>>,
    pub log_stride: usize,
    /// Record `E_k`, every outer iterate and the inner-iterate spread per cycle.
    pub dense_log: bool,
}

impl RunConfig {
    pub fn new(method: Method, schedule: StepsizeSchedule, q: f64, cycles: usize, seed: u64) -> Self {
        Self {
            method,
            schedule,
            q,
            cycles,
            seed,
            x0: None,
            sigma: None,
            log_stride: 1,
            dense_log: false,
        }
    }

    pub fn with_log_stride(mut self, stride: usize) -> Self {
        self.log_stride = stride;
        self
    }

    pub fn with_dense_log(mut self, dense: bool) -> Self {
        self.dense_log = dense;
        self
    }

    pub fn with_sigma(mut self, sigma: Vec<usize>) -> Self {
        self.sigma = Some(sigma);
        self
    }

    pub fn with_x0(mut self, x0: Vector) -> Self {
        self.x0 = Some(x0);
        self
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_cycles(mut self, cycles: usize) -> Self {
        self.cycles = cycles;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_q(self.q)?;
        if self.log_stride == 0 {
            return Err(Error::InvalidInput("log_stride must be positive".into()));
        }
        let s = self.schedule.s();
        if matches!(self.method, Method::Rr | Method::Birr) && !(s > 0.5 && s < 1.0) {
            return Err(Error::InvalidInput(format!(
                "{} runs need a stepsize exponent in (1/2, 1), got {s}",
                self.method
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSource {
    Fixture(String),
    Inline(ProblemDocument),
}

impl ProblemSource {
    pub fn resolve(&self) -> Result<FiniteSumProblem> {
        match self {
            ProblemSource::Fixture(name) => objective::fixture(name),
            ProblemSource::Inline(doc) => FiniteSumProblem::from_document(doc),
        }
    }
}

fn default_q() -> f64 {
    1.0
}

fn default_stride() -> usize {
    1
}

/// JSON layout of a run request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigDocument {
    pub method: Method,
    #[serde(rename = "R")]
    pub r: f64,
    pub s: f64,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_stride")]
    pub log_stride: usize,
    pub problem: ProblemSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// One-based fixed order for IG.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<usize>>,
    #[serde(default)]
    pub dense_log: bool,
}

impl ConfigDocument {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn to_run_config(&self) -> Result<RunConfig> {
        let sigma = match &self.sigma {
            Some(order) => {
                if order.contains(&0) {
                    return Err(Error::InvalidInput("sigma is one-based".into()));
                }
                Some(order.iter().map(|i| i - 1).collect())
            }
            None => None,
        };
        let config = RunConfig {
            method: self.method,
            schedule: StepsizeSchedule::new(self.r, self.s)?,
            q: self.q,
            cycles: self.k,
            seed: self.seed,
            x0: self.x0.as_ref().map(|v| Vector::from_column_slice(v)),
            sigma,
            log_stride: self.log_stride,
            dense_log: self.dense_log,
        };
        config.validate()?;
        Ok(config)
    }
}
