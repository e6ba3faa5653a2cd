//! Bayesian mixtures of linear regressions with a repulsive g-prior.
//!
//! The crate provides the collapsed Gibbs sampler with its Monte Carlo
//! normalizing constants, three comparison samplers, clustering and
//! prediction metrics, and a seeded benchmark harness behind the `repmix`
//! command-line tool.

pub mod baselines;
pub mod cli;
pub mod dist;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod normalizer;
pub mod repulsion;
pub mod sampler;
pub mod seed;
pub mod simbench;

pub use error::{Error, Result};
pub use model::{Dataset, Draws, MixtureState, ModelSpec, PriorConfig};
pub use sampler::{run_chain, ChainConfig, Init};
