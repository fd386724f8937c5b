//! Simulation-based Bayesian inference for stochastic kinetic models.
//!
//! Two samplers are compared under a shared budget of model realisations:
//! pseudo-marginal Metropolis–Hastings driven by a bootstrap particle filter
//! ([`pmcmc`]), and sequential ABC with adaptive tolerances ([`abc`]). An
//! exact forward-algorithm oracle ([`oracle`]) checks both on small networks.

// `!(x > 0.0)` is how NaN is rejected alongside nonpositive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abc;
pub mod diagnostics;
pub mod error;
pub mod exec;
pub mod filter;
pub mod harness;
pub mod ledger;
pub mod model;
pub mod oracle;
pub mod pmcmc;
pub mod prior;
pub mod problem;
pub mod rng;
pub(crate) mod textnum;

pub use error::{Error, Result};
pub use exec::Exec;
pub use ledger::{BudgetLedger, LedgerSnapshot, Phase};
pub use problem::InferenceProblem;
