//! The two block-model variants behind one trait.
//!
//! Both models share the message-passing engine. A model only decides the
//! per-node propensity `t_u` that multiplies pair means `t_u t_v omega_rs`:
//! one for the ordinary model and the node degree for the degree-corrected
//! model, which profiles `theta` out at its closed-form estimate.

use std::fmt;
use std::sync::OnceLock;

use super::likelihood::{loglik_complete_dc, loglik_complete_sbm, mle_dc, mle_sbm};
use super::params::{DcParams, ModelParams, SbmParams};
use crate::graph::{BlockAssignment, Graph};
use crate::registry::Registry;

pub trait BlockModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    fn degree_corrected(&self) -> bool;

    /// Multipliers `t_u` of the pair means used during inference.
    fn propensities(&self, graph: &Graph) -> Vec<f64>;

    /// Complete-data log-likelihood maximized over parameters for a fixed
    /// hard assignment.
    fn profile_loglik(&self, graph: &Graph, assignment: &BlockAssignment) -> f64;

    /// Converts engine affinities (in propensity units) to reportable
    /// parameters, using `assignment` to fix the `theta` normalization.
    fn export(&self, graph: &Graph, engine: &SbmParams, assignment: &BlockAssignment) -> ModelParams;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sbm;

impl BlockModel for Sbm {
    fn name(&self) -> &'static str {
        "sbm"
    }

    fn degree_corrected(&self) -> bool {
        false
    }

    fn propensities(&self, graph: &Graph) -> Vec<f64> {
        vec![1.0; graph.n()]
    }

    fn profile_loglik(&self, graph: &Graph, assignment: &BlockAssignment) -> f64 {
        loglik_complete_sbm(graph, assignment, &mle_sbm(graph, assignment).params)
    }

    fn export(&self, _graph: &Graph, engine: &SbmParams, _assignment: &BlockAssignment) -> ModelParams {
        ModelParams::Sbm(engine.clone())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DegreeCorrected;

impl BlockModel for DegreeCorrected {
    fn name(&self) -> &'static str {
        "dc"
    }

    fn degree_corrected(&self) -> bool {
        true
    }

    fn propensities(&self, graph: &Graph) -> Vec<f64> {
        graph.degrees().iter().map(|&d| d as f64).collect()
    }

    fn profile_loglik(&self, graph: &Graph, assignment: &BlockAssignment) -> f64 {
        loglik_complete_dc(graph, assignment, &mle_dc(graph, assignment).params)
    }

    /// `theta_u = d_u / d_r` and `omega_rs = omega~_rs d_r d_s`, which keeps
    /// every pair mean `d_u d_v omega~_rs` unchanged.
    fn export(&self, graph: &Graph, engine: &SbmParams, assignment: &BlockAssignment) -> ModelParams {
        let k = engine.k();
        let means = &assignment.block_mean_degrees;
        let theta = assignment
            .labels
            .iter()
            .enumerate()
            .map(|(u, &g)| if means[g] > 0.0 { graph.degree(u) as f64 / means[g] } else { 1.0 })
            .collect();
        let mut omega = vec![0.0; k * k];
        for r in 0..k {
            for s in 0..k {
                omega[r * k + s] = engine.omega(r, s) * means[r] * means[s];
            }
        }
        ModelParams::Dc(DcParams {
            gamma: engine.gamma.clone(),
            omega,
            theta,
        })
    }
}

/// Block models by name: `sbm` and `dc`.
pub fn block_models() -> &'static Registry<dyn BlockModel> {
    static REGISTRY: OnceLock<Registry<dyn BlockModel>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut reg: Registry<dyn BlockModel> = Registry::new("block model");
        reg.register("sbm", |_| Ok(Box::new(Sbm)));
        reg.register("dc", |_| Ok(Box::new(DegreeCorrected)));
        reg
    })
}
