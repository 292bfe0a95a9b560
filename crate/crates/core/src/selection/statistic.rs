//! The log-likelihood-ratio statistic in its two forms.

use std::fmt;
use std::sync::OnceLock;

use crate::bp::FitResult;
use crate::graph::{BlockAssignment, Graph};
use crate::registry::Registry;

/// `Lambda = sum_u d_u log(d_u / d_{g_u})` with `d_r` the empirical mean
/// degree of block `r`; isolated nodes contribute zero.
pub fn lambda_ground_state(graph: &Graph, assignment: &BlockAssignment) -> f64 {
    let mut total = 0.0;
    for (u, &g) in assignment.labels.iter().enumerate() {
        let d = graph.degree(u) as f64;
        if d > 0.0 {
            total += d * (d / assignment.block_mean_degrees[g]).ln();
        }
    }
    total
}

/// Bethe log-evidence of the degree-corrected fit minus that of the ordinary fit.
pub fn lambda_free_energy(h0: &FitResult, h1: &FitResult) -> f64 {
    h1.log_evidence - h0.log_evidence
}

/// A way of turning the two fits into the test statistic.
pub trait LambdaStatistic: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// `h0` is the ordinary fit, `h1` the degree-corrected fit.
    fn evaluate(&self, graph: &Graph, h0: &FitResult, h1: &FitResult) -> f64;
}

/// The closed form at the null model's fitted ground state.
#[derive(Debug, Clone, Copy, Default)]
pub struct GroundState;

impl LambdaStatistic for GroundState {
    fn name(&self) -> &'static str {
        "ground"
    }

    fn evaluate(&self, graph: &Graph, h0: &FitResult, _h1: &FitResult) -> f64 {
        lambda_ground_state(graph, &h0.ground_state)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FreeEnergy;

impl LambdaStatistic for FreeEnergy {
    fn name(&self) -> &'static str {
        "free-energy"
    }

    fn evaluate(&self, _graph: &Graph, h0: &FitResult, h1: &FitResult) -> f64 {
        lambda_free_energy(h0, h1)
    }
}

/// Statistics by name: `ground` and `free-energy`.
pub fn statistics() -> &'static Registry<dyn LambdaStatistic> {
    static REGISTRY: OnceLock<Registry<dyn LambdaStatistic>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut reg: Registry<dyn LambdaStatistic> = Registry::new("statistic");
        reg.register("ground", |_| Ok(Box::new(GroundState)));
        reg.register("free-energy", |_| Ok(Box::new(FreeEnergy)));
        reg
    })
}
