//! Pair beliefs, the closed-form M-step, and the Bethe log-evidence.

use serde::Serialize;

use super::engine::{log_h, logsumexp, node_log_weights, BpState, Prepared, Problem, Scratch, LOG_FLOOR};
use crate::models::SbmParams;

/// Joint beliefs `b^{uv}_rs` for each entry of `Graph::edges`, row-major `k x k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairBeliefs {
    pub k: usize,
    pub beliefs: Vec<f64>,
}

impl PairBeliefs {
    pub fn edge(&self, e: usize) -> &[f64] {
        let kk = self.k * self.k;
        &self.beliefs[e * kk..(e + 1) * kk]
    }

    /// `m_rs` with soft counts: `sum_e a_e (b^e_rs + b^e_sr)`.
    pub fn soft_edge_counts(&self, problem: &Problem) -> Vec<f64> {
        let k = self.k;
        let mut m = vec![0.0; k * k];
        for (e, edge) in problem.graph.edges().iter().enumerate() {
            let a = f64::from(edge.multiplicity);
            let b = self.edge(e);
            for r in 0..k {
                for s in 0..k {
                    m[r * k + s] += a * (b[r * k + s] + b[s * k + r]);
                }
            }
        }
        m
    }
}

/// `b^{uv}_rs ∝ mu^{u->v}_r mu^{v->u}_s h(t_u t_v omega_rs, a_uv)`.
pub fn pair_beliefs(state: &BpState, problem: &Problem, params: &SbmParams) -> PairBeliefs {
    let p = Prepared::new(params);
    let k = p.k;
    let graph = problem.graph;
    let mut beliefs = Vec::with_capacity(graph.edges().len() * k * k);
    let mut logs = vec![0.0; k * k];
    for (edge, slot) in graph.edges().iter().zip(graph.edge_slots()) {
        let log_z = edge_log_weights(state, problem, &p, edge.u, edge.v, edge.multiplicity, slot, &mut logs);
        if log_z.is_finite() {
            beliefs.extend(logs.iter().map(|l| (l - log_z).exp()));
        } else {
            beliefs.extend(std::iter::repeat_n(1.0 / (k * k) as f64, k * k));
        }
    }
    PairBeliefs { k, beliefs }
}

#[allow(clippy::too_many_arguments)]
fn edge_log_weights(
    state: &BpState,
    problem: &Problem,
    p: &Prepared,
    u: usize,
    v: usize,
    a: u32,
    slot: usize,
    out: &mut [f64],
) -> f64 {
    let k = p.k;
    let from_u = state.message(slot);
    let from_v = state.message(problem.graph.reverse(slot));
    let tt = problem.t[u] * problem.t[v];
    let ln_tt = tt.ln();
    let a = f64::from(a);
    for r in 0..k {
        for s in 0..k {
            let lambda = tt * p.omega[r * k + s];
            out[r * k + s] =
                from_u[r].ln() + from_v[s].ln() + log_h(a, ln_tt + p.log_omega[r * k + s], lambda).max(LOG_FLOOR);
        }
    }
    logsumexp(out)
}

/// Closed-form M-step in propensity units:
/// `gamma_r = sum_u mu^u_r / n`, `omega_rs = m_rs / (T_r T_s)` with soft
/// counts `m_rs` and soft propensity totals `T_r = sum_u t_u mu^u_r`.
pub fn em_update(problem: &Problem, marginals: &[f64], beliefs: &PairBeliefs) -> SbmParams {
    let k = beliefs.k;
    let n = problem.graph.n();
    let mut sizes = vec![0.0; k];
    let mut totals = vec![0.0; k];
    for (u, m) in marginals.chunks(k).enumerate() {
        for r in 0..k {
            sizes[r] += m[r];
            totals[r] += problem.t[u] * m[r];
        }
    }
    let gamma = if n == 0 {
        vec![1.0 / k as f64; k]
    } else {
        sizes.iter().map(|s| s / n as f64).collect()
    };
    let counts = beliefs.soft_edge_counts(problem);
    let mut omega = vec![0.0; k * k];
    for r in 0..k {
        for s in 0..k {
            let denom = totals[r] * totals[s];
            if denom > 0.0 {
                omega[r * k + s] = counts[r * k + s] / denom;
            }
        }
    }
    SbmParams { gamma, omega }
}

/// Bethe approximation of `log P(A = a)` at the current messages, dropping
/// the `log a_uv!` constants:
///
/// `sum_u log Z^u - sum_(uv) log Z^{uv} + 1/2 D' omega D
///  - 1/2 sum_u t_u^2 mu^u' omega mu^u - sum_(uv) t_u t_v mu^u' omega mu^v`,
///
/// with `(uv)` running over edges once. The last three terms undo the double
/// counting of non-edge interactions in the node normalizers.
pub fn bethe_free_energy(state: &BpState, problem: &Problem, params: &SbmParams) -> f64 {
    let p = Prepared::new(params);
    let k = p.k;
    let graph = problem.graph;
    let mut totals = vec![0.0; k];
    for (u, m) in state.marginals.chunks(k).enumerate() {
        for r in 0..k {
            totals[r] += problem.t[u] * m[r];
        }
    }

    let mut scratch = Scratch::default();
    let mut node_sum = 0.0;
    let mut self_sum = 0.0;
    for u in 0..graph.n() {
        node_log_weights(problem, &p, &state.messages, &state.marginals, &totals, u, &mut scratch);
        node_sum += logsumexp(&scratch.field);
        let mu = state.marginal(u);
        self_sum += problem.t[u] * problem.t[u] * p.quad(mu, mu);
    }

    let mut edge_sum = 0.0;
    let mut edge_linear = 0.0;
    let mut logs = vec![0.0; k * k];
    for (edge, slot) in graph.edges().iter().zip(graph.edge_slots()) {
        edge_sum += edge_log_weights(state, problem, &p, edge.u, edge.v, edge.multiplicity, slot, &mut logs);
        edge_linear += problem.t[edge.u] * problem.t[edge.v] * p.quad(state.marginal(edge.u), state.marginal(edge.v));
    }

    node_sum - edge_sum + 0.5 * p.quad(&totals, &totals) - 0.5 * self_sum - edge_linear
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bp::engine::{run_bp, BpConfig};
    use crate::graph::{block_statistics, Graph};
    use crate::models::{loglik_complete_sbm, mle_sbm};

    fn sample_graph() -> Graph {
        Graph::from_edges(
            7,
            [(0, 1, 1), (1, 2, 2), (2, 0, 1), (3, 4, 1), (4, 5, 1), (5, 6, 1), (2, 3, 1), (6, 3, 1)],
        )
    }

    #[test]
    fn single_block_bethe_is_exact() {
        let g = sample_graph();
        let problem = Problem::new(&g, vec![1.0; 7]);
        let a = block_statistics(&g, &[0; 7], 1).unwrap();
        let params = mle_sbm(&g, &a).params;
        let mut state = BpState::new(&g, 1, 0.0, 0);
        run_bp(&mut state, &problem, &params, &BpConfig::default());
        let exact = loglik_complete_sbm(&g, &a, &params);
        let bethe = bethe_free_energy(&state, &problem, &params);
        assert!((bethe - exact).abs() < 1e-10, "{bethe} vs {exact}");
    }

    #[test]
    fn hard_marginals_reproduce_the_mle() {
        let g = sample_graph();
        let labels = [0, 0, 0, 1, 1, 1, 1];
        let mut marg = vec![0.0; 14];
        for (u, &l) in labels.iter().enumerate() {
            marg[u * 2 + l] = 1.0;
        }
        let problem = Problem::new(&g, vec![1.0; 7]);
        let state = BpState::from_marginals(&g, &marg, 2, 0);
        let params = SbmParams::new(vec![0.5, 0.5], vec![0.3, 0.1, 0.1, 0.3]).unwrap();
        let beliefs = pair_beliefs(&state, &problem, &params);
        let updated = em_update(&problem, &state.marginals, &beliefs);
        let mle = mle_sbm(&g, &block_statistics(&g, &labels, 2).unwrap()).params;
        assert_eq!(updated, mle);
    }

    #[test]
    fn beliefs_are_normalized() {
        let g = sample_graph();
        let problem = Problem::new(&g, vec![1.0; 7]);
        let params = SbmParams::new(vec![0.4, 0.6], vec![0.5, 0.1, 0.1, 0.4]).unwrap();
        let mut state = BpState::new(&g, 2, 0.1, 1);
        run_bp(&mut state, &problem, &params, &BpConfig::default());
        let b = pair_beliefs(&state, &problem, &params);
        for e in 0..g.edges().len() {
            assert!((b.edge(e).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let updated = em_update(&problem, &state.marginals, &b);
        assert!((updated.gamma.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
