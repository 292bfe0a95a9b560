//! Null mean and variance of the degree-correction log-likelihood ratio,
//! p-values, and the graph size at which the chi-squared test breaks down.
//!
//! Blocks are treated as independent. A block with `n_r` nodes of expected
//! degree `mu_r` contributes `n_r f(mu_r) - f(n_r mu_r)` to the mean and
//! `n_r v(mu_r)` to the limiting variance.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use super::poisson::{expansions, poisson_moments, r_mu_psi_large_n, PoissonMomentConfig};
use crate::error::{Error, Result};

/// Blocks smaller than this make the finite-size variance unreliable.
pub const SMALL_BLOCK: f64 = 100.0;

/// Above this many degrees of freedom the chi-squared tail uses the
/// Wilson–Hilferty cube-root normal approximation (relative error ~1e-4).
pub const WILSON_HILFERTY_DF: f64 = 1e5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceMode {
    /// `sum_r n_r v(mu_r)`
    #[default]
    Limiting,
    /// Per-block finite-size expression with large-argument expansions for
    /// the block total.
    FiniteN,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockMoments {
    pub n: f64,
    pub mu: f64,
    pub f: f64,
    pub v: f64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullMoments {
    pub mean: f64,
    pub variance: f64,
    pub mode: VarianceMode,
    pub blocks: Vec<BlockMoments>,
    /// Finite-size variance requested with a block below [`SMALL_BLOCK`] nodes.
    pub small_block_warning: bool,
}

impl NullMoments {
    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn z_score(&self, lambda: f64) -> f64 {
        (lambda - self.mean) / self.sd()
    }
}

/// `E[Lambda] = sum_r n_r f(mu_r) - f(n_r mu_r)`.
pub fn lambda_mean(block_sizes: &[f64], mus: &[f64], config: &PoissonMomentConfig) -> f64 {
    block_sizes
        .iter()
        .zip(mus)
        .map(|(&n, &mu)| block_mean(n, mu, config))
        .sum()
}

fn block_mean(n: f64, mu: f64, config: &PoissonMomentConfig) -> f64 {
    if n <= 0.0 {
        return 0.0;
    }
    n * poisson_moments(mu, config).f - poisson_moments(n * mu, config).f
}

/// `Var[Lambda]` for `n` nodes split in fractions `gamma` with block mean
/// degrees `mus`.
pub fn lambda_variance(
    n: f64,
    gamma: &[f64],
    mus: &[f64],
    mode: VarianceMode,
    config: &PoissonMomentConfig,
) -> f64 {
    gamma
        .iter()
        .zip(mus)
        .map(|(&g, &mu)| block_variance(n * g, mu, mode, config))
        .sum()
}

fn block_variance(n: f64, mu: f64, mode: VarianceMode, config: &PoissonMomentConfig) -> f64 {
    if n <= 0.0 || mu == 0.0 {
        return 0.0;
    }
    let m = poisson_moments(mu, config);
    match mode {
        VarianceMode::Limiting => n * m.v(),
        VarianceMode::FiniteN => {
            let total = expansions(n * mu);
            let ln_n = n.ln();
            n * m.phi + total.phi + n * mu * ln_n * ln_n - 2.0 * n * r_mu_psi_large_n(mu, n, config)
                + 2.0 * (n * m.c - total.c) * ln_n
        }
    }
}

/// Moments for blocks of the given sizes and mean degrees.
pub fn null_moments(
    block_sizes: &[usize],
    mus: &[f64],
    mode: VarianceMode,
    config: &PoissonMomentConfig,
) -> Result<NullMoments> {
    if block_sizes.len() != mus.len() {
        return Err(Error::InvalidParams("one mean degree per block is required".into()));
    }
    if mus.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
        return Err(Error::InvalidParams("mean degrees must be finite and nonnegative".into()));
    }
    let mut blocks = Vec::with_capacity(mus.len());
    let mut small = false;
    for (&n, &mu) in block_sizes.iter().zip(mus) {
        let n = n as f64;
        let pm = poisson_moments(mu, config);
        if mode == VarianceMode::FiniteN && n > 0.0 && n < SMALL_BLOCK {
            small = true;
        }
        blocks.push(BlockMoments {
            n,
            mu,
            f: pm.f,
            v: pm.v(),
            mean: block_mean(n, mu, config),
            variance: block_variance(n, mu, mode, config),
        });
    }
    Ok(NullMoments {
        mean: blocks.iter().map(|b| b.mean).sum(),
        variance: blocks.iter().map(|b| b.variance).sum(),
        mode,
        blocks,
        small_block_warning: small,
    })
}

/// Upper tail of `Normal(mean, variance)` at `lambda`.
pub fn gaussian_pvalue(lambda: f64, moments: &NullMoments) -> f64 {
    if !(moments.variance > 0.0) {
        return if lambda > moments.mean { 0.0 } else { 1.0 };
    }
    let normal = Normal::new(moments.mean, moments.sd()).expect("positive variance");
    normal.sf(lambda)
}

/// Upper tail of chi-squared with `n - k` degrees of freedom at `2 lambda`.
pub fn chi2_pvalue(lambda: f64, n: usize, k: usize) -> Result<f64> {
    if n <= k {
        return Err(Error::InvalidParams(format!("chi-squared test needs n > k, got n={n}, k={k}")));
    }
    Ok(chi2_sf(2.0 * lambda, (n - k) as f64))
}

fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if df > WILSON_HILFERTY_DF {
        let a = 2.0 / (9.0 * df);
        let z = ((x / df).cbrt() - (1.0 - a)) / a.sqrt();
        return Normal::standard().sf(z);
    }
    ChiSquared::new(df).expect("positive df").sf(x)
}

fn chi2_quantile(p: f64, df: f64) -> f64 {
    if df > WILSON_HILFERTY_DF {
        let a = 2.0 / (9.0 * df);
        let z = Normal::standard().inverse_cdf(p);
        return df * (1.0 - a + z * a.sqrt()).powi(3);
    }
    ChiSquared::new(df).expect("positive df").inverse_cdf(p)
}

/// Graph sizes at or above this are reported as "no failure".
pub const FAILURE_CAP: u64 = 1 << 40;

/// Smallest `n` (with `k` equal blocks of mean degree `mu`) at which a
/// chi-squared test of nominal size `nominal_alpha` has true size at least
/// `actual_alpha` under the Gaussian null: the critical value `crit/2` falls
/// below the `1 - actual_alpha` quantile of `Normal(E, Var)`. `None` when no
/// such `n` exists below [`FAILURE_CAP`].
pub fn chi2_failure_n(
    mu: f64,
    nominal_alpha: f64,
    actual_alpha: f64,
    k: usize,
    config: &PoissonMomentConfig,
) -> Result<Option<u64>> {
    if !(0.0 < nominal_alpha && nominal_alpha < actual_alpha && actual_alpha < 1.0) {
        return Err(Error::InvalidParams("need 0 < nominal_alpha < actual_alpha < 1".into()));
    }
    if k == 0 || !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParams("need k >= 1 and a finite mu > 0".into()));
    }
    let z = Normal::standard().inverse_cdf(1.0 - actual_alpha);
    let pm = poisson_moments(mu, config);
    let failed = |n: u64| -> bool {
        let nf = n as f64;
        let per_block = nf / k as f64;
        let mean = k as f64 * (per_block * pm.f - poisson_moments(per_block * mu, config).f);
        let sd = (nf * pm.v()).sqrt();
        let crit = chi2_quantile(1.0 - nominal_alpha, (n - k as u64) as f64);
        crit / 2.0 < mean + sd * z
    };

    let mut lo = k as u64 + 1;
    if failed(lo) {
        return Ok(Some(lo));
    }
    let mut hi = lo.max(16);
    while !failed(hi) {
        if hi >= FAILURE_CAP {
            return Ok(None);
        }
        lo = hi;
        hi = (hi * 2).min(FAILURE_CAP);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if failed(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}
