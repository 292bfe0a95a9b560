//! Complete-data log-likelihoods and closed-form maximum-likelihood estimates.
//!
//! Constants that do not depend on the parameters (the `1/a_uv!` factors) are
//! dropped, and the Poisson mass term uses `n_r n_s` pairs per block pair. The
//! convention `0 log 0 = 0` holds throughout; data that is impossible under the
//! parameters yields `f64::NEG_INFINITY`.

use serde::Serialize;

use super::params::{DcParams, SbmParams};
use crate::graph::{BlockAssignment, Graph};

/// A closed-form estimate plus the blocks for which it is degenerate
/// (empty blocks, or blocks whose nodes all have degree zero).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate<P> {
    pub params: P,
    pub degenerate_blocks: Vec<usize>,
}

/// `x log y` with `0 log y = 0`; `-inf` when `x > 0` and `y = 0`.
fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if y <= 0.0 {
        f64::NEG_INFINITY
    } else {
        x * y.ln()
    }
}

fn block_terms(assignment: &BlockAssignment, gamma: &[f64], omega: &[f64], mass: &[f64]) -> f64 {
    let k = assignment.k;
    let mut ll = 0.0;
    for r in 0..k {
        ll += xlogy(assignment.block_sizes[r] as f64, gamma[r]);
    }
    let mut pair = 0.0;
    for r in 0..k {
        for s in 0..k {
            let w = omega[r * k + s];
            pair += xlogy(assignment.edge_count(r, s) as f64, w) - mass[r] * mass[s] * w;
        }
    }
    ll + 0.5 * pair
}

/// `sum_r n_r log gamma_r + 1/2 sum_rs (m_rs log omega_rs - n_r n_s omega_rs)`.
pub fn loglik_complete_sbm(_graph: &Graph, assignment: &BlockAssignment, params: &SbmParams) -> f64 {
    let sizes: Vec<f64> = assignment.block_sizes.iter().map(|&n| n as f64).collect();
    block_terms(assignment, &params.gamma, &params.omega, &sizes)
}

/// Degree-corrected complete-data log-likelihood; adds `sum_u d_u log theta_u`.
///
/// The Poisson mass of block `r` is `sum_{u in r} theta_u`, which equals `n_r`
/// when `theta` satisfies the per-block normalization.
pub fn loglik_complete_dc(graph: &Graph, assignment: &BlockAssignment, params: &DcParams) -> f64 {
    let mut mass = vec![0.0; assignment.k];
    let mut theta_term = 0.0;
    for (u, &g) in assignment.labels.iter().enumerate() {
        mass[g] += params.theta[u];
        theta_term += xlogy(graph.degree(u) as f64, params.theta[u]);
    }
    block_terms(assignment, &params.gamma, &params.omega, &mass) + theta_term
}

/// `gamma_r = n_r / n`, `omega_rs = m_rs / (n_r n_s)`.
pub fn mle_sbm(graph: &Graph, assignment: &BlockAssignment) -> Estimate<SbmParams> {
    let k = assignment.k;
    let n = graph.n().max(1) as f64;
    let sizes: Vec<f64> = assignment.block_sizes.iter().map(|&s| s as f64).collect();
    let gamma = sizes.iter().map(|&s| s / n).collect();
    let mut omega = vec![0.0; k * k];
    for r in 0..k {
        for s in 0..k {
            if sizes[r] > 0.0 && sizes[s] > 0.0 {
                omega[r * k + s] = assignment.edge_count(r, s) as f64 / (sizes[r] * sizes[s]);
            }
        }
    }
    let degenerate_blocks = (0..k).filter(|&r| assignment.block_sizes[r] == 0).collect();
    Estimate {
        params: SbmParams { gamma, omega },
        degenerate_blocks,
    }
}

/// `theta_u = d_u / d_{g_u}`, `gamma_r = n_r / n`, and the block affinities in
/// the normalization where `theta` sums to `n_r` per block.
///
/// With that normalization the affinity estimate is `m_rs / (n_r n_s)`, which
/// equals `(m_rs / (kappa_r kappa_s)) * d_r d_s` for block degree totals
/// `kappa_r`; pair means `theta_u theta_v omega_rs = d_u d_v m_rs / (kappa_r kappa_s)`.
/// Blocks whose nodes all have degree zero get `theta = 1` and are flagged.
pub fn mle_dc(graph: &Graph, assignment: &BlockAssignment) -> Estimate<DcParams> {
    let sbm = mle_sbm(graph, assignment);
    let theta = assignment
        .labels
        .iter()
        .enumerate()
        .map(|(u, &g)| {
            let mean = assignment.block_mean_degrees[g];
            if mean > 0.0 {
                graph.degree(u) as f64 / mean
            } else {
                1.0
            }
        })
        .collect();
    let degenerate_blocks = (0..assignment.k)
        .filter(|&r| assignment.block_sizes[r] == 0 || assignment.block_degree_sums[r] == 0)
        .collect();
    Estimate {
        params: DcParams {
            gamma: sbm.params.gamma,
            omega: sbm.params.omega,
            theta,
        },
        degenerate_blocks,
    }
}
