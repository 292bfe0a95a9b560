//! EM driver with random restarts.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::em::{bethe_free_energy, em_update, pair_beliefs};
use super::engine::{run_bp, BpConfig, BpState, Problem};
use crate::error::{Error, Result};
use crate::graph::{block_statistics, BlockAssignment, Graph};
use crate::models::{BlockModel, ModelParams, SbmParams};

/// Soft block sizes below this trigger block resurrection.
const EMPTY_BLOCK: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub restarts: usize,
    pub em_iterations: usize,
    /// Relative per-entry parameter change that ends EM.
    pub em_tolerance: f64,
    /// Run a single BP sweep per EM step instead of iterating to convergence.
    pub interleave: bool,
    pub bp: BpConfig,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            em_iterations: 50,
            em_tolerance: 1e-6,
            interleave: false,
            bp: BpConfig::default(),
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.em_iterations == 0 || !(self.em_tolerance > 0.0) {
            return Err(Error::InvalidConfig(
                "fit needs restarts >= 1, em_iterations >= 1 and em_tolerance > 0".into(),
            ));
        }
        self.bp.validate()
    }
}

/// Outcome of fitting one model.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: &'static str,
    pub k: usize,
    /// Reportable parameters (`theta` normalized against the ground state).
    pub params: ModelParams,
    /// Affinities in units of the model's propensities, as used by the engine.
    pub affinities: SbmParams,
    /// `mu^u`, `k` entries per node.
    pub marginals: Vec<f64>,
    pub log_evidence: f64,
    pub ground_state: BlockAssignment,
    pub restarts: usize,
    pub best_restart: usize,
    /// EM reached its tolerance and the final BP run converged.
    pub converged: bool,
    pub em_iterations: usize,
    pub bp_sweeps: usize,
    /// EM steps where the log-evidence dropped by more than `1e-6` relative.
    pub monotonicity_violations: usize,
    pub resurrections: usize,
    pub seed: u64,
}

impl FitResult {
    pub fn marginal(&self, u: usize) -> &[f64] {
        &self.marginals[u * self.k..(u + 1) * self.k]
    }

    pub fn document(&self, graph: &Graph, include_marginals: bool) -> FitDocument {
        FitDocument {
            model: self.model.to_string(),
            k: self.k,
            params: self.params.clone(),
            log_evidence: self.log_evidence,
            converged: self.converged,
            restarts: self.restarts,
            best_restart: self.best_restart,
            em_iterations: self.em_iterations,
            bp_sweeps: self.bp_sweeps,
            monotonicity_violations: self.monotonicity_violations,
            resurrections: self.resurrections,
            block_sizes: self.ground_state.block_sizes.clone(),
            block_mean_degrees: self.ground_state.block_mean_degrees.clone(),
            labels: (0..graph.n())
                .map(|u| NodeLabel {
                    node: graph.name(u).to_string(),
                    block: self.ground_state.labels[u] + 1,
                    marginal: include_marginals.then(|| self.marginal(u).to_vec()),
                })
                .collect(),
        }
    }
}

/// Serializable form of a fit, with one-based blocks and original node names.
#[derive(Debug, Clone, Serialize)]
pub struct FitDocument {
    pub model: String,
    pub k: usize,
    pub params: ModelParams,
    pub log_evidence: f64,
    pub converged: bool,
    pub restarts: usize,
    pub best_restart: usize,
    pub em_iterations: usize,
    pub bp_sweeps: usize,
    pub monotonicity_violations: usize,
    pub resurrections: usize,
    pub block_sizes: Vec<usize>,
    pub block_mean_degrees: Vec<f64>,
    pub labels: Vec<NodeLabel>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeLabel {
    pub node: String,
    pub block: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub marginal: Option<Vec<f64>>,
}

struct RestartOutcome {
    params: SbmParams,
    state: BpState,
    log_evidence: f64,
    converged: bool,
    em_iterations: usize,
    bp_sweeps: usize,
    violations: usize,
    resurrections: usize,
}

/// Fits `model` with `k` blocks by BP/EM from several starting points and
/// keeps the one with the highest Bethe log-evidence. `warm`, in engine
/// units, replaces the first random start.
pub fn fit(
    graph: &Graph,
    k: usize,
    model: &dyn BlockModel,
    config: &FitConfig,
    warm: Option<&SbmParams>,
) -> Result<FitResult> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    config.validate()?;
    if let Some(w) = warm {
        w.validate()?;
        if w.k() != k {
            return Err(Error::InvalidConfig(format!("warm start has {} blocks, expected {k}", w.k())));
        }
    }
    let problem = Problem::new(graph, model.propensities(graph));

    let outcomes: Vec<RestartOutcome> = (0..config.restarts)
        .into_par_iter()
        .map(|restart| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(restart as u64);
            let init = match (restart, warm) {
                (0, Some(w)) => w.clone(),
                _ => random_params(&problem, k, restart, &mut rng),
            };
            run_em(&problem, init, config, &mut rng)
        })
        .collect();

    let best_restart = outcomes
        .iter()
        .enumerate()
        .fold(0, |best, (i, o)| if o.log_evidence > outcomes[best].log_evidence { i } else { best });
    let bp_sweeps = outcomes.iter().map(|o| o.bp_sweeps).sum();
    let best = outcomes.into_iter().nth(best_restart).expect("at least one restart");

    let ground_state = block_statistics(graph, &best.state.ground_state(), k)?;
    let params = model.export(graph, &best.params, &ground_state);
    if !best.converged {
        log::debug!("{} fit with k={k}: best restart did not converge", model.name());
    }
    Ok(FitResult {
        model: model.name(),
        k,
        params,
        affinities: best.params,
        marginals: best.state.marginals,
        log_evidence: best.log_evidence,
        ground_state,
        restarts: config.restarts,
        best_restart,
        converged: best.converged,
        em_iterations: best.em_iterations,
        bp_sweeps,
        monotonicity_violations: best.violations,
        resurrections: best.resurrections,
        seed: config.seed,
    })
}

/// Uniform `gamma` and `omega` around the density `omega_0 = 2m / (sum_u t_u)^2`.
/// Even restarts are assortative, `omega_rr = omega_0 (1 + (k-1) e)` and
/// `omega_rs = omega_0 (1 - e)` with `e ~ U(0.2, 0.8)`; odd restarts draw every
/// entry as `omega_0 * LogNormal(0, 0.5)`.
fn random_params(problem: &Problem, k: usize, restart: usize, rng: &mut dyn RngCore) -> SbmParams {
    let total = problem.total();
    let base = if total > 0.0 {
        2.0 * problem.graph.m() as f64 / (total * total)
    } else {
        0.0
    };
    let noise = LogNormal::new(0.0, 0.5).expect("valid lognormal");
    let e = rng.random_range(0.2..0.8);
    let mut omega = vec![0.0; k * k];
    for r in 0..k {
        for s in r..k {
            let w = match (restart % 2, r == s) {
                (0, true) => base * (1.0 + (k - 1) as f64 * e),
                (0, false) => base * (1.0 - e),
                _ => base * noise.sample(rng),
            };
            omega[r * k + s] = w;
            omega[s * k + r] = w;
        }
    }
    SbmParams {
        gamma: vec![1.0 / k as f64; k],
        omega,
    }
}

fn run_em(problem: &Problem, init: SbmParams, config: &FitConfig, rng: &mut ChaCha8Rng) -> RestartOutcome {
    let k = init.k();
    let n = problem.graph.n();
    let bp = if config.interleave {
        BpConfig {
            max_sweeps: 1,
            ..config.bp
        }
    } else {
        config.bp
    };
    let mut state = BpState::new(problem.graph, k, config.bp.jitter, rng.next_u64());
    let mut params = init;
    let mut previous = f64::NEG_INFINITY;
    let mut violations = 0;
    let mut resurrections = 0;
    let mut bp_sweeps = 0;
    let mut em_converged = false;
    let mut em_iterations = 0;

    for iteration in 1..=config.em_iterations {
        let before = state.sweeps;
        run_bp(&mut state, problem, &params, &bp);
        bp_sweeps += state.sweeps - before;
        let evidence = bethe_free_energy(&state, problem, &params);
        if evidence < previous - 1e-6 * previous.abs().max(1.0) {
            violations += 1;
            log::debug!("EM step {iteration}: log-evidence fell from {previous} to {evidence}");
        }
        previous = evidence;

        let beliefs = pair_beliefs(&state, problem, &params);
        let mut next = em_update(problem, &state.marginals, &beliefs);
        for r in 0..k {
            if next.gamma[r] * (n as f64) < EMPTY_BLOCK && n > 0 {
                resurrect(&mut next, r, &state, rng);
                resurrections += 1;
            }
        }
        let change = relative_change(&params, &next);
        params = next;
        em_iterations = iteration;
        if change < config.em_tolerance {
            em_converged = true;
            break;
        }
    }

    let before = state.sweeps;
    let bp_converged = run_bp(&mut state, problem, &params, &config.bp);
    bp_sweeps += state.sweeps - before;
    let log_evidence = bethe_free_energy(&state, problem, &params);
    RestartOutcome {
        params,
        state,
        log_evidence: if log_evidence.is_nan() { f64::NEG_INFINITY } else { log_evidence },
        converged: em_converged && bp_converged,
        em_iterations,
        bp_sweeps,
        violations,
        resurrections,
    }
}

/// Revives an empty block as a perturbed copy of the block of a random node.
fn resurrect(params: &mut SbmParams, r: usize, state: &BpState, rng: &mut ChaCha8Rng) {
    let k = params.k();
    let n = state.marginals.len() / k;
    let donor = state.ground_state()[rng.random_range(0..n)];
    let donor = if donor == r { (r + 1) % k } else { donor };
    for s in 0..k {
        let source = if s == r { params.omega(donor, donor) } else { params.omega(donor, s) };
        let w = source * (1.0 + rng.random_range(-0.1..0.1));
        params.omega[r * k + s] = w;
        params.omega[s * k + r] = w;
    }
    params.gamma[r] = 1.0 / n as f64;
    let total: f64 = params.gamma.iter().sum();
    params.gamma.iter_mut().for_each(|g| *g /= total);
}

fn relative_change(old: &SbmParams, new: &SbmParams) -> f64 {
    let scale = old.omega.iter().chain(&new.omega).fold(0.0f64, |a, &b| a.max(b));
    let omega = old
        .omega
        .iter()
        .zip(&new.omega)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-8 * scale).max(f64::MIN_POSITIVE));
    let gamma = old
        .gamma
        .iter()
        .zip(&new.gamma)
        .map(|(a, b)| (a - b).abs() / a.max(*b).max(1e-8));
    omega.chain(gamma).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{DegreeCorrected, Sbm};

    #[test]
    fn single_block_fit_is_closed_form() {
        let g = Graph::from_edges(5, [(0, 1, 1), (1, 2, 1), (2, 3, 3), (3, 4, 1)]);
        let fit = fit(&g, 1, &Sbm, &FitConfig::default(), None).unwrap();
        let ModelParams::Sbm(p) = &fit.params else { panic!() };
        assert_eq!(p.gamma, vec![1.0]);
        assert!((p.omega[0] - 2.0 * 6.0 / 25.0).abs() < 1e-15);
        assert!(fit.converged);
        assert!(fit.em_iterations <= 2);
    }

    #[test]
    fn rejects_bad_config() {
        let g = Graph::from_edges(3, [(0, 1, 1)]);
        assert!(fit(&g, 0, &Sbm, &FitConfig::default(), None).is_err());
        let config = FitConfig {
            restarts: 0,
            ..FitConfig::default()
        };
        assert!(fit(&g, 2, &Sbm, &config, None).is_err());
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let g = Graph::from_edges(
            8,
            [(0, 1, 1), (1, 2, 1), (2, 3, 1), (3, 0, 1), (4, 5, 1), (5, 6, 1), (6, 7, 1), (7, 4, 2), (0, 4, 1)],
        );
        let a = fit(&g, 2, &DegreeCorrected, &FitConfig::default(), None).unwrap();
        let b = fit(&g, 2, &DegreeCorrected, &FitConfig::default(), None).unwrap();
        assert_eq!(a.marginals, b.marginals);
        assert_eq!(a.log_evidence, b.log_evidence);
    }
}
