//! Exact likelihoods for small networks: truncated state spaces, CTMC
//! generators, uniformization and the forward algorithm.
//!
//! Only networks whose reachable space fits the state cap are supported;
//! the oracle exists to check the samplers on small bespoke problems.

pub mod likelihood;
pub mod space;
pub mod uniformization;

pub use likelihood::{exact_likelihood, grid_posterior, linspace, GridPosterior, OracleOptions};
pub use space::{build_generator, GeneratorMatrix, TruncatedStateSpace, DEFAULT_STATE_CAP};
pub use uniformization::{propagate, transition_probabilities, DEFAULT_TOLERANCE};
