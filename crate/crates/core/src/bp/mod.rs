//! Belief propagation and EM for both block models.

mod em;
mod engine;
mod fit;

pub use em::{bethe_free_energy, em_update, pair_beliefs, PairBeliefs};
pub use engine::{bp_sweep, log_pair_factor, pair_factor, run_bp, BpConfig, BpState, Problem, Schedule};
pub use fit::{fit, FitConfig, FitDocument, FitResult, NodeLabel};
