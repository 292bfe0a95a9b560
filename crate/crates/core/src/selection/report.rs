//! The full hypothesis test: fit both models, compute the statistic, compare
//! it with its null distribution, and optionally bootstrap.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::agreement::label_agreement;
use super::statistic::{lambda_free_energy, lambda_ground_state, statistics, LambdaStatistic};
use crate::asymptotics::{chi2_pvalue, gaussian_pvalue, null_moments, NullMoments, PoissonMomentConfig, VarianceMode};
use crate::bp::{fit, FitConfig, FitResult};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::models::{sample_sbm, DegreeCorrected, ModelParams, Sbm, SbmParams};

/// Share of failed bootstrap replicates above which the report is flagged.
const MAX_DROPPED: f64 = 0.05;

/// Where the per-block mean degrees of the null moments come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegreeSource {
    /// Observed mean degree of each block of the null fit's ground state.
    #[default]
    Empirical,
    /// `mu_r = sum_s n_s omega_rs` from the fitted null parameters.
    Fitted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestConfig {
    pub k: usize,
    pub statistic: String,
    /// Bootstrap replicates; zero disables the bootstrap.
    pub bootstrap: usize,
    /// Restarts per replicate fit; the first is warm-started from the
    /// observed fit.
    pub bootstrap_restarts: usize,
    pub variance: VarianceMode,
    pub degrees: DegreeSource,
    pub fit: FitConfig,
    pub moments: PoissonMomentConfig,
    pub seed: u64,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            k: 2,
            statistic: "ground".into(),
            bootstrap: 0,
            bootstrap_restarts: 2,
            variance: VarianceMode::Limiting,
            degrees: DegreeSource::Empirical,
            fit: FitConfig::default(),
            moments: PoissonMomentConfig::default(),
            seed: 0,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if self.bootstrap_restarts == 0 {
            return Err(Error::InvalidConfig("bootstrap_restarts must be at least 1".into()));
        }
        statistics().get(&self.statistic)?;
        self.fit.validate()?;
        self.moments.validate()
    }

    fn fit_config(&self, seed: u64) -> FitConfig {
        FitConfig { seed, ..self.fit }
    }
}

/// Summary of one fitted model inside a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub model: String,
    pub log_evidence: f64,
    pub converged: bool,
    pub em_iterations: usize,
    pub monotonicity_violations: usize,
    pub block_sizes: Vec<usize>,
    pub block_mean_degrees: Vec<f64>,
    pub params: ModelParams,
}

impl From<&FitResult> for FitSummary {
    fn from(f: &FitResult) -> Self {
        Self {
            model: f.model.to_string(),
            log_evidence: f.log_evidence,
            converged: f.converged,
            em_iterations: f.em_iterations,
            monotonicity_violations: f.monotonicity_violations,
            block_sizes: f.ground_state.block_sizes.clone(),
            block_mean_degrees: f.ground_state.block_mean_degrees.clone(),
            params: f.params.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    pub replicates: usize,
    pub dropped: usize,
    /// `(1 + #{Lambda_b >= Lambda_obs}) / (B + 1)` over surviving replicates.
    pub p_value: f64,
    pub mean: f64,
    pub variance: f64,
    pub flagged: bool,
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub statistic: String,
    pub lambda: f64,
    pub lambda_ground_state: f64,
    pub lambda_free_energy: f64,
    pub null_moments: NullMoments,
    pub z_score: f64,
    pub p_gaussian: f64,
    pub p_chi2: f64,
    pub bootstrap: Option<BootstrapResult>,
    /// Share of nodes whose ground-state labels agree between the two fits,
    /// up to block permutation.
    pub label_agreement: f64,
    pub h0: FitSummary,
    pub h1: FitSummary,
    pub flags: Vec<String>,
    pub n: usize,
    pub m: u64,
    pub k: usize,
    pub seed: u64,
}

/// Both fits for one graph.
pub struct FitPair {
    pub h0: FitResult,
    pub h1: FitResult,
}

/// Fits the ordinary (`h0`) and degree-corrected (`h1`) models.
pub fn fit_pair(graph: &Graph, config: &TestConfig, warm: Option<(&SbmParams, &SbmParams)>) -> Result<FitPair> {
    let (h0, h1) = rayon::join(
        || fit(graph, config.k, &Sbm, &config.fit_config(derive_seed(config.seed, 0)), warm.map(|w| w.0)),
        || {
            fit(
                graph,
                config.k,
                &DegreeCorrected,
                &config.fit_config(derive_seed(config.seed, 1)),
                warm.map(|w| w.1),
            )
        },
    );
    Ok(FitPair { h0: h0?, h1: h1? })
}

/// Null moments from the null fit's block structure.
pub fn moments_for(h0: &FitResult, config: &TestConfig) -> Result<NullMoments> {
    let a = &h0.ground_state;
    let mus = match config.degrees {
        DegreeSource::Empirical => a.block_mean_degrees.clone(),
        DegreeSource::Fitted => {
            let omega = h0.params.omega();
            (0..a.k)
                .map(|r| (0..a.k).map(|s| a.block_sizes[s] as f64 * omega[r * a.k + s]).sum())
                .collect()
        }
    };
    null_moments(&a.block_sizes, &mus, config.variance, &config.moments)
}

pub fn run_test(graph: &Graph, config: &TestConfig) -> Result<TestReport> {
    config.validate()?;
    let statistic = statistics().get(&config.statistic)?;
    let fits = fit_pair(graph, config, None)?;
    let (h0, h1) = (&fits.h0, &fits.h1);

    let lambda = statistic.evaluate(graph, h0, h1);
    let moments = moments_for(h0, config)?;
    let p_gaussian = gaussian_pvalue(lambda, &moments);
    let p_chi2 = if graph.n() > config.k {
        chi2_pvalue(lambda, graph.n(), config.k)?
    } else {
        f64::NAN
    };

    let mut flags = Vec::new();
    for f in [h0, h1] {
        if !f.converged {
            flags.push(format!("{} fit did not converge", f.model));
        }
        if f.monotonicity_violations > 0 {
            flags.push(format!(
                "{} fit: log-evidence decreased in {} EM step(s)",
                f.model, f.monotonicity_violations
            ));
        }
    }
    if moments.small_block_warning {
        flags.push("finite-n variance used with blocks under 100 nodes".into());
    }

    let bootstrap = if config.bootstrap > 0 {
        let b = parametric_bootstrap(graph, &fits, statistic.as_ref(), lambda, config)?;
        if b.flagged {
            flags.push(format!("{} of {} bootstrap replicates failed", b.dropped, b.replicates));
        }
        Some(b)
    } else {
        None
    };

    Ok(TestReport {
        statistic: statistic.name().to_string(),
        lambda,
        lambda_ground_state: lambda_ground_state(graph, &h0.ground_state),
        lambda_free_energy: lambda_free_energy(h0, h1),
        z_score: moments.z_score(lambda),
        null_moments: moments,
        p_gaussian,
        p_chi2,
        bootstrap,
        label_agreement: label_agreement(&h0.ground_state.labels, &h1.ground_state.labels, config.k),
        h0: h0.into(),
        h1: h1.into(),
        flags,
        n: graph.n(),
        m: graph.m(),
        k: config.k,
        seed: config.seed,
    })
}

/// Samples `B` graphs from the fitted null model, refits both models on each
/// (warm-started from the parent fits), and evaluates the statistic.
pub fn parametric_bootstrap(
    graph: &Graph,
    fits: &FitPair,
    statistic: &dyn LambdaStatistic,
    observed: f64,
    config: &TestConfig,
) -> Result<BootstrapResult> {
    let replicates = config.bootstrap;
    if replicates == 0 {
        return Err(Error::InvalidConfig("bootstrap needs at least one replicate".into()));
    }
    let ModelParams::Sbm(null) = &fits.h0.params else {
        return Err(Error::InvalidParams("the null fit must be an ordinary block model".into()));
    };
    let base = derive_seed(config.seed, 2);
    let warm = (&fits.h0.affinities, &fits.h1.affinities);
    let outcomes: Vec<Option<f64>> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let seed = derive_seed(base, b as u64);
            let (sample, _) = sample_sbm(graph.n(), null, derive_seed(seed, 0)).ok()?;
            let replicate = TestConfig {
                seed: derive_seed(seed, 1),
                fit: FitConfig {
                    restarts: config.bootstrap_restarts,
                    ..config.fit
                },
                ..config.clone()
            };
            match fit_pair(&sample, &replicate, Some(warm)) {
                Ok(pair) => Some(statistic.evaluate(&sample, &pair.h0, &pair.h1)),
                Err(e) => {
                    log::warn!("bootstrap replicate {b} failed: {e}");
                    None
                }
            }
        })
        .collect();

    let samples: Vec<f64> = outcomes.iter().flatten().copied().filter(|x| x.is_finite()).collect();
    let dropped = replicates - samples.len();
    let kept = samples.len() as f64;
    let exceed = samples.iter().filter(|&&x| x >= observed).count();
    let mean = samples.iter().sum::<f64>() / kept.max(1.0);
    let variance = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (kept - 1.0).max(1.0);
    Ok(BootstrapResult {
        replicates,
        dropped,
        p_value: (1.0 + exceed as f64) / (kept + 1.0),
        mean,
        variance,
        flagged: dropped as f64 > MAX_DROPPED * replicates as f64,
        samples,
    })
}
