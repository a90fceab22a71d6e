//! Incremental gradient methods for finite-sum strongly convex minimization.
//!
//! The crate covers four processing regimes over a sum `f = Σ f_i`:
//!
//! - **IG**: a fixed component order every cycle,
//! - **SGD**: `m` indices drawn with replacement per cycle,
//! - **RR**: a fresh uniform permutation per cycle (random reshuffling),
//! - **BIRR**: RR with q-suffix averaging followed by subtraction of an
//!   estimated bias term computed in the last cycle.
//!
//! Alongside the methods, [`oracles`] evaluates the asymptotic constants that
//! govern these methods (rate constants per order, the mean first-order error
//! coefficient, bias terms, stepsize sums), with exhaustive permutation
//! enumeration for small `m` so that closed forms can be checked exactly.
//! [`harness`] turns those constants into pass/fail experiment checks.
//!
//! ```
//! use reshuffle::{objective::FiniteSumProblem, oracles};
//!
//! let problem = FiniteSumProblem::example1();
//! let mu = oracles::mu_star(&problem);
//! assert!((mu[0] - 0.5).abs() < 1e-15);
//! ```

pub mod averaging;
pub mod birr;
pub mod config;
pub mod engine;
mod error;
pub mod harness;
pub mod linalg;
pub mod objective;
pub mod oracles;
pub mod sampling;

pub use error::{Error, Result};

pub use averaging::{StreamingAverage, SuffixAverage};
pub use birr::{birr_run, BirrOutcome};
pub use config::{Method, RunConfig};
pub use engine::{run, run_cycle, StepsizeSchedule, Trajectory};
pub use objective::{Component, FiniteSumProblem, ProblemConstants, ProblemKind};
pub use sampling::{OrderMode, OrderSpec};
