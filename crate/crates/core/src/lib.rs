//! Fitting and model selection for ordinary and degree-corrected Poisson
//! stochastic block models on sparse graphs.
//!
//! * [`graph`]: edge-list ingestion and block bookkeeping
//! * [`models`]: parameters, samplers, likelihoods, closed-form estimates
//! * [`bp`]: belief propagation, EM, Bethe log-evidence
//! * [`asymptotics`]: null mean and variance of the log-likelihood ratio
//! * [`selection`]: the test itself and the parametric bootstrap

pub mod asymptotics;
pub mod bp;
pub mod error;
pub mod graph;
pub mod models;
pub mod registry;
pub mod selection;

pub use error::{Error, Result};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent child seed number `stream` of `master`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.next_u64()
}
