//! Helpers shared by the oracle and acceptance targets.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use dcsbm::bp::{run_bp, BpConfig, BpState, Problem};
use dcsbm::graph::Graph;
use dcsbm::models::SbmParams;

pub fn random_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                let w = if rng.random_bool(0.1) { 2 } else { 1 };
                edges.push((u, v, w));
            }
        }
    }
    Graph::from_edges(n, edges)
}

pub fn random_params(k: usize, scale: f64, rng: &mut ChaCha8Rng) -> SbmParams {
    let mut gamma: Vec<f64> = (0..k).map(|_| rng.random_range(0.3..1.0)).collect();
    let total: f64 = gamma.iter().sum();
    gamma.iter_mut().for_each(|g| *g /= total);
    let mut omega = vec![0.0; k * k];
    for r in 0..k {
        for s in r..k {
            let w = scale * if r == s { rng.random_range(1.0..2.0) } else { rng.random_range(0.2..0.8) };
            omega[r * k + s] = w;
            omega[s * k + r] = w;
        }
    }
    SbmParams::new(gamma, omega).unwrap()
}

/// `log P(A, g)` with pair means `t_u t_v omega`, self-pairs weighted by one
/// half and `log A!` dropped, written out pair by pair.
pub fn log_joint(graph: &Graph, t: &[f64], params: &SbmParams, labels: &[usize]) -> f64 {
    let n = graph.n();
    let mut total = 0.0;
    for u in 0..n {
        let r = labels[u];
        total += params.gamma[r].ln() - 0.5 * t[u] * t[u] * params.omega(r, r);
        for v in u + 1..n {
            let lambda = t[u] * t[v] * params.omega(r, labels[v]);
            let a = graph.multiplicity_between(u, v) as f64;
            total += -lambda + if a > 0.0 { a * lambda.ln() } else { 0.0 };
        }
    }
    total
}

pub fn labels_of(code: usize, n: usize, k: usize) -> Vec<usize> {
    let mut c = code;
    (0..n)
        .map(|_| {
            let l = c % k;
            c /= k;
            l
        })
        .collect()
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub struct Exact {
    pub log_evidence: f64,
    /// Posterior joint of the endpoints of every entry of `graph.edges()`.
    pub pairs: Vec<Vec<f64>>,
}

pub fn enumerate(graph: &Graph, t: &[f64], params: &SbmParams) -> Exact {
    let (n, k) = (graph.n(), params.k());
    let count = k.pow(n as u32);
    let weights: Vec<f64> = (0..count).map(|c| log_joint(graph, t, params, &labels_of(c, n, k))).collect();
    let log_evidence = logsumexp(&weights);
    let mut pairs = vec![vec![0.0; k * k]; graph.edges().len()];
    for (c, w) in weights.iter().enumerate() {
        let p = (w - log_evidence).exp();
        let labels = labels_of(c, n, k);
        for (e, edge) in graph.edges().iter().enumerate() {
            pairs[e][labels[edge.u] * k + labels[edge.v]] += p;
        }
    }
    Exact { log_evidence, pairs }
}

pub fn converged_state<'g>(graph: &'g Graph, t: Vec<f64>, params: &SbmParams, seed: u64) -> (Problem<'g>, BpState) {
    let problem = Problem::new(graph, t);
    let mut state = BpState::new(graph, params.k(), 0.1, seed);
    let config = BpConfig {
        max_sweeps: 2000,
        tolerance: 1e-10,
        ..BpConfig::default()
    };
    run_bp(&mut state, &problem, params, &config);
    (problem, state)
}

pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

pub fn mean_se(xs: &[f64]) -> Estimate {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Estimate {
        value: mean,
        se: (var / n).sqrt(),
    }
}

pub fn dlogd(d: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else {
        d * d.ln()
    }
}

pub fn draws(mu: f64, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poisson = Poisson::new(mu).unwrap();
    (0..count).map(|_| poisson.sample(&mut rng)).collect()
}

/// Monte Carlo estimates of `f`, `phi` and `c` with standard errors.
pub fn monte_carlo(mu: f64, count: usize, seed: u64) -> (Estimate, Estimate, Estimate) {
    let d = draws(mu, count, seed);
    let x: Vec<f64> = d.iter().map(|&d| dlogd(d)).collect();
    let f = mean_se(&x.iter().map(|x| x - mu * mu.ln()).collect::<Vec<_>>());
    let xm = x.iter().sum::<f64>() / count as f64;
    let dm = d.iter().sum::<f64>() / count as f64;
    let phi = mean_se(&x.iter().map(|x| (x - xm).powi(2)).collect::<Vec<_>>());
    let c = mean_se(&x.iter().zip(&d).map(|(x, d)| (x - xm) * (d - dm)).collect::<Vec<_>>());
    (f, phi, c)
}
