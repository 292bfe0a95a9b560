//! Message state and sweeps.
//!
//! Every pair mean is `t_u t_v omega_rs`, where `t` is the model's propensity
//! vector. Messages along edges are stored per directed adjacency slot; every
//! node also keeps its full marginal, which doubles as the message it sends
//! to all of its non-neighbors. Non-edges enter through the linearized field
//!
//! `F_u(r) = -t_u sum_s omega_rs (D_s - t_u mu^u_s)`,  `D_s = sum_w t_w mu^w_s`,
//!
//! and each neighbor's linear term is swapped for its exact edge factor. All
//! updates are done in log space.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::models::SbmParams;

/// Log-weights are clamped here so that impossible states stay representable
/// and cavity subtraction never meets `-inf - -inf`.
pub(crate) const LOG_FLOOR: f64 = -700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// Nodes in a fixed seeded order; each update sees the latest messages.
    #[default]
    Sequential,
    /// All nodes from a frozen copy of the previous sweep, in parallel.
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BpConfig {
    pub tolerance: f64,
    pub max_sweeps: usize,
    pub damping: f64,
    pub schedule: Schedule,
    /// Relative jitter applied to uniform initial messages.
    pub jitter: f64,
}

impl Default for BpConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_sweeps: 200,
            damping: 0.1,
            schedule: Schedule::Sequential,
            jitter: 0.1,
        }
    }
}

impl BpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || self.max_sweeps == 0 || !(0.0..1.0).contains(&self.damping) {
            return Err(Error::InvalidConfig(
                "bp needs tolerance > 0, max_sweeps >= 1 and damping in [0, 1)".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return Err(Error::InvalidConfig("bp jitter must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Graph plus the model's node propensities.
#[derive(Debug, Clone)]
pub struct Problem<'g> {
    pub graph: &'g Graph,
    pub t: Vec<f64>,
    ln_t: Vec<f64>,
}

impl<'g> Problem<'g> {
    pub fn new(graph: &'g Graph, t: Vec<f64>) -> Self {
        assert_eq!(t.len(), graph.n());
        let ln_t = t.iter().map(|x| x.ln()).collect();
        Self { graph, t, ln_t }
    }

    /// `sum_u t_u`
    pub fn total(&self) -> f64 {
        self.t.iter().sum()
    }
}

/// Parameters with logs precomputed.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub k: usize,
    pub log_gamma: Vec<f64>,
    pub omega: Vec<f64>,
    pub log_omega: Vec<f64>,
}

impl Prepared {
    pub fn new(params: &SbmParams) -> Self {
        Self {
            k: params.k(),
            log_gamma: params.gamma.iter().map(|g| g.ln().max(LOG_FLOOR)).collect(),
            omega: params.omega.clone(),
            log_omega: params.omega.iter().map(|w| w.ln()).collect(),
        }
    }

    /// `(omega x)_r`
    #[inline]
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let k = self.k;
        for r in 0..k {
            let row = &self.omega[r * k..(r + 1) * k];
            out[r] = row.iter().zip(x).map(|(w, v)| w * v).sum();
        }
    }

    /// `x' omega y`
    pub fn quad(&self, x: &[f64], y: &[f64]) -> f64 {
        let k = self.k;
        let mut total = 0.0;
        for r in 0..k {
            for s in 0..k {
                total += x[r] * self.omega[r * k + s] * y[s];
            }
        }
        total
    }
}

/// `a log(lambda) - lambda`, the Poisson log-mass without the `a!` term.
#[inline]
pub(crate) fn log_h(a: f64, ln_lambda: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        if a == 0.0 {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        a * ln_lambda - lambda
    }
}

/// Probability that a Poisson pair with mean `theta_u theta_v omega_rs` has
/// multiplicity `a`.
pub fn pair_factor(theta_u: f64, theta_v: f64, omega_rs: f64, a: u32) -> f64 {
    log_pair_factor(theta_u, theta_v, omega_rs, a).exp()
}

pub fn log_pair_factor(theta_u: f64, theta_v: f64, omega_rs: f64, a_count: u32) -> f64 {
    let lambda = theta_u * theta_v * omega_rs;
    let a = f64::from(a_count);
    log_h(a, lambda.ln(), lambda) - statrs::function::factorial::ln_factorial(u64::from(a_count))
}

#[inline]
pub(crate) fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Writes `softmax(x)` into `out` and returns `logsumexp(x)`.
#[inline]
fn softmax(x: &[f64], out: &mut [f64]) -> f64 {
    let lse = logsumexp(x);
    if lse.is_finite() {
        for (o, v) in out.iter_mut().zip(x) {
            *o = (v - lse).exp();
        }
    } else {
        out.fill(1.0 / x.len() as f64);
    }
    lse
}

/// Messages, marginals and normalizers of one BP run.
#[derive(Debug, Clone)]
pub struct BpState {
    pub k: usize,
    /// `mu^{u->v}` for each adjacency slot of `u`, `k` entries per slot.
    pub messages: Vec<f64>,
    /// `mu^u`, `k` entries per node.
    pub marginals: Vec<f64>,
    /// `log Z^u` from the last update of each node.
    pub log_z_node: Vec<f64>,
    /// `log Z^{u->v}` per slot from the last update.
    pub log_z_message: Vec<f64>,
    /// `D_r = sum_u t_u mu^u_r`
    pub block_totals: Vec<f64>,
    pub sweeps: usize,
    pub max_change: f64,
    pub converged: bool,
    order: Vec<usize>,
}

impl BpState {
    /// Uniform messages with relative jitter `U(-jitter, jitter)`; the update
    /// order is shuffled with the same seed.
    pub fn new(graph: &Graph, k: usize, jitter: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |len: usize| -> Vec<f64> {
            let mut v = vec![0.0; len * k];
            for chunk in v.chunks_mut(k) {
                for x in chunk.iter_mut() {
                    *x = 1.0 + if jitter > 0.0 { rng.random_range(-jitter..jitter) } else { 0.0 };
                }
                let total: f64 = chunk.iter().sum();
                chunk.iter_mut().for_each(|x| *x /= total);
            }
            v
        };
        let messages = draw(graph.num_slots());
        let marginals = draw(graph.n());
        let mut order: Vec<usize> = (0..graph.n()).collect();
        order.shuffle(&mut rng);
        Self {
            k,
            messages,
            marginals,
            log_z_node: vec![0.0; graph.n()],
            log_z_message: vec![0.0; graph.num_slots()],
            block_totals: vec![0.0; k],
            sweeps: 0,
            max_change: f64::INFINITY,
            converged: false,
            order,
        }
    }

    /// Every message and marginal set to a node's given distribution.
    pub fn from_marginals(graph: &Graph, marginals: &[f64], k: usize, seed: u64) -> Self {
        let mut state = Self::new(graph, k, 0.0, seed);
        state.marginals.copy_from_slice(marginals);
        for u in 0..graph.n() {
            for slot in graph.slots(u) {
                state.messages[slot * k..(slot + 1) * k].copy_from_slice(&marginals[u * k..(u + 1) * k]);
            }
        }
        state
    }

    pub fn marginal(&self, u: usize) -> &[f64] {
        &self.marginals[u * self.k..(u + 1) * self.k]
    }

    pub fn message(&self, slot: usize) -> &[f64] {
        &self.messages[slot * self.k..(slot + 1) * self.k]
    }

    /// Per-node argmax of the marginals, ties toward the lower block index.
    pub fn ground_state(&self) -> Vec<usize> {
        self.marginals
            .chunks(self.k)
            .map(|m| {
                let mut best = 0;
                for r in 1..m.len() {
                    if m[r] > m[best] {
                        best = r;
                    }
                }
                best
            })
            .collect()
    }

    /// Non-edge field shared by every node of propensity `t`, apart from the
    /// node's own self-exclusion: `-t (omega D)_r`.
    pub fn class_field(&self, params: &SbmParams, t: f64) -> Vec<f64> {
        let p = Prepared::new(params);
        let mut out = vec![0.0; self.k];
        p.apply(&self.block_totals, &mut out);
        out.iter_mut().for_each(|x| *x *= -t);
        out
    }

    pub(crate) fn refresh_totals(&mut self, problem: &Problem) {
        let k = self.k;
        self.block_totals.fill(0.0);
        for (u, m) in self.marginals.chunks(k).enumerate() {
            for r in 0..k {
                self.block_totals[r] += problem.t[u] * m[r];
            }
        }
    }
}

/// Scratch buffers for one node update.
#[derive(Debug, Default)]
pub(crate) struct Scratch {
    /// `log E_{w->u}(r)` per neighbor slot.
    pub log_e: Vec<f64>,
    pub field: Vec<f64>,
    tmp: Vec<f64>,
    omega_d: Vec<f64>,
}

/// Computes the full log-weights `L_u` of node `u` into `scratch.field`, and
/// the exact edge terms into `scratch.log_e`.
pub(crate) fn node_log_weights(
    problem: &Problem,
    p: &Prepared,
    messages: &[f64],
    marginals: &[f64],
    totals: &[f64],
    u: usize,
    scratch: &mut Scratch,
) {
    let k = p.k;
    let graph = problem.graph;
    let t_u = problem.t[u];
    let slots = graph.slots(u);
    scratch.log_e.resize(slots.len() * k, 0.0);
    scratch.field.resize(k, 0.0);
    scratch.tmp.resize(k, 0.0);
    scratch.omega_d.resize(k, 0.0);

    p.apply(totals, &mut scratch.omega_d);
    p.apply(&marginals[u * k..(u + 1) * k], &mut scratch.tmp);
    for r in 0..k {
        scratch.field[r] = p.log_gamma[r] - 0.5 * t_u * t_u * p.omega[r * k + r] - t_u * scratch.omega_d[r]
            + t_u * t_u * scratch.tmp[r];
    }

    let mut terms = [0.0f64; 16];
    let mut heap_terms = Vec::new();
    for (i, slot) in slots.enumerate() {
        let w = graph.target(slot);
        let a = f64::from(graph.multiplicity(slot));
        let tt = t_u * problem.t[w];
        let ln_tt = problem.ln_t[u] + problem.ln_t[w];
        let incoming = &messages[graph.reverse(slot) * k..(graph.reverse(slot) + 1) * k];
        p.apply(&marginals[w * k..(w + 1) * k], &mut scratch.tmp);
        let buf: &mut [f64] = if k <= 16 {
            &mut terms[..k]
        } else {
            heap_terms.resize(k, 0.0);
            &mut heap_terms[..]
        };
        for r in 0..k {
            for s in 0..k {
                let lambda = tt * p.omega[r * k + s];
                buf[s] = incoming[s].ln() + log_h(a, ln_tt + p.log_omega[r * k + s], lambda);
            }
            let log_e = logsumexp(buf).max(LOG_FLOOR);
            scratch.log_e[i * k + r] = log_e;
            scratch.field[r] += log_e + tt * scratch.tmp[r];
        }
    }
}

fn mix(old: &mut [f64], new: &[f64], damping: f64) -> f64 {
    let mut change: f64 = 0.0;
    for (o, n) in old.iter_mut().zip(new) {
        let v = (1.0 - damping) * n + damping * *o;
        change = change.max((v - *o).abs());
        *o = v;
    }
    change
}

/// One pass over all nodes; returns the largest entry change.
pub fn bp_sweep(state: &mut BpState, problem: &Problem, params: &SbmParams, config: &BpConfig) -> f64 {
    let p = Prepared::new(params);
    assert_eq!(p.k, state.k);
    state.refresh_totals(problem);
    let change = match config.schedule {
        Schedule::Sequential => sequential_sweep(state, problem, &p, config.damping),
        Schedule::Parallel => parallel_sweep(state, problem, &p, config.damping),
    };
    state.sweeps += 1;
    state.max_change = change;
    change
}

fn sequential_sweep(state: &mut BpState, problem: &Problem, p: &Prepared, damping: f64) -> f64 {
    let k = p.k;
    let graph = problem.graph;
    let mut scratch = Scratch::default();
    let mut fresh = vec![0.0; k];
    let mut cavity = vec![0.0; k];
    let mut max_change: f64 = 0.0;
    let order = std::mem::take(&mut state.order);
    for &u in &order {
        node_log_weights(
            problem,
            p,
            &state.messages,
            &state.marginals,
            &state.block_totals,
            u,
            &mut scratch,
        );
        for (i, slot) in graph.slots(u).enumerate() {
            for r in 0..k {
                cavity[r] = scratch.field[r] - scratch.log_e[i * k + r];
            }
            state.log_z_message[slot] = softmax(&cavity, &mut fresh);
            max_change = max_change.max(mix(&mut state.messages[slot * k..(slot + 1) * k], &fresh, damping));
        }
        state.log_z_node[u] = softmax(&scratch.field, &mut fresh);
        let old = &mut state.marginals[u * k..(u + 1) * k];
        let t_u = problem.t[u];
        for r in 0..k {
            state.block_totals[r] -= t_u * old[r];
        }
        max_change = max_change.max(mix(old, &fresh, damping));
        for r in 0..k {
            state.block_totals[r] += t_u * old[r];
        }
    }
    state.order = order;
    max_change
}

fn parallel_sweep(state: &mut BpState, problem: &Problem, p: &Prepared, damping: f64) -> f64 {
    let k = p.k;
    let graph = problem.graph;
    let old_messages = state.messages.clone();
    let old_marginals = state.marginals.clone();
    let totals = state.block_totals.clone();

    // Split the output buffers into per-node chunks so nodes can be written in parallel.
    let mut jobs = Vec::with_capacity(graph.n());
    let mut msg_rest: &mut [f64] = &mut state.messages;
    let mut zmsg_rest: &mut [f64] = &mut state.log_z_message;
    let mut marg_rest: &mut [f64] = &mut state.marginals;
    let mut znode_rest: &mut [f64] = &mut state.log_z_node;
    for u in 0..graph.n() {
        let deg = graph.slots(u).len();
        let (msg, a) = std::mem::take(&mut msg_rest).split_at_mut(deg * k);
        let (zmsg, b) = std::mem::take(&mut zmsg_rest).split_at_mut(deg);
        let (marg, c) = std::mem::take(&mut marg_rest).split_at_mut(k);
        let (znode, d) = std::mem::take(&mut znode_rest).split_at_mut(1);
        msg_rest = a;
        zmsg_rest = b;
        marg_rest = c;
        znode_rest = d;
        jobs.push((u, msg, zmsg, marg, znode));
    }

    let max_change = jobs
        .into_par_iter()
        .map_init(
            || (Scratch::default(), vec![0.0; k], vec![0.0; k]),
            |(scratch, fresh, cavity), (u, msg, zmsg, marg, znode)| {
                node_log_weights(problem, p, &old_messages, &old_marginals, &totals, u, scratch);
                let mut change: f64 = 0.0;
                for i in 0..zmsg.len() {
                    for r in 0..k {
                        cavity[r] = scratch.field[r] - scratch.log_e[i * k + r];
                    }
                    zmsg[i] = softmax(cavity, fresh);
                    change = change.max(mix(&mut msg[i * k..(i + 1) * k], fresh, damping));
                }
                znode[0] = softmax(&scratch.field, fresh);
                change.max(mix(marg, fresh, damping))
            },
        )
        .reduce(|| 0.0, f64::max);
    state.refresh_totals(problem);
    max_change
}

/// Sweeps until the largest change drops below the tolerance or the budget
/// runs out, continuing from the current messages.
pub fn run_bp(state: &mut BpState, problem: &Problem, params: &SbmParams, config: &BpConfig) -> bool {
    state.converged = false;
    for _ in 0..config.max_sweeps {
        if bp_sweep(state, problem, params, config) < config.tolerance {
            state.converged = true;
            break;
        }
    }
    state.refresh_totals(problem);
    state.converged
}
