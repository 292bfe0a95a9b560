//! Moments of `D log D` for `D ~ Poisson(mu)`.
//!
//! Sums run outward from the mode with the pmf built by recurrence and are
//! cut once a geometric bound on the remaining mass, weighted by the squared
//! summand, drops below the tolerance. Centered summands keep the results
//! free of cancellation. When the window would exceed the term cap, the
//! large-`mu` expansions are used.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoissonMomentConfig {
    /// Bound on the omitted tail of each truncated sum: the left-out
    /// probability mass weighted by the squared size of the summands there.
    pub tail_mass_tolerance: f64,
    /// Largest number of terms summed before switching to expansions.
    pub max_terms: usize,
}

impl Default for PoissonMomentConfig {
    fn default() -> Self {
        Self {
            tail_mass_tolerance: 1e-14,
            max_terms: 10_000_000,
        }
    }
}

impl PoissonMomentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tail_mass_tolerance > 0.0 && self.tail_mass_tolerance <= 1e-6) {
            return Err(Error::InvalidConfig("tail_mass_tolerance must lie in (0, 1e-6]".into()));
        }
        if self.max_terms < 1000 {
            return Err(Error::InvalidConfig("max_terms must be at least 1000".into()));
        }
        Ok(())
    }
}

/// `f`, `phi` and `c` at one `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoissonMoments {
    pub mu: f64,
    /// `E[D log D] - mu log mu`
    pub f: f64,
    /// `Var[D log D]`
    pub phi: f64,
    /// `Cov[D, D log D]`
    pub c: f64,
    /// Whether the large-`mu` expansions were used instead of summation.
    pub expanded: bool,
}

impl PoissonMoments {
    /// `phi + mu (1 + log mu)^2 - 2 c (1 + log mu)`
    pub fn v(&self) -> f64 {
        if self.mu == 0.0 {
            return 0.0;
        }
        let a = 1.0 + self.mu.ln();
        self.phi + self.mu * a * a - 2.0 * self.c * a
    }
}

/// Pmf of `Poisson(mu)` on `lo..lo + len`, unnormalized by at most a factor
/// `1 + O(eps mu log mu)`; `None` if more than `max_terms` are needed.
fn pmf_window(mu: f64, config: &PoissonMomentConfig) -> Option<(u64, Vec<f64>)> {
    let tol = config.tail_mass_tolerance;
    // The window spans roughly +-10 standard deviations at the default tolerance.
    if 24.0 * mu.sqrt() + 60.0 > config.max_terms as f64 {
        return None;
    }
    let ln_mu = mu.ln();
    // Rough square of the centered summand of Var[D log D] at d.
    let weight = |d: u64| {
        let d = d as f64;
        1.0 + ((d - mu) * (1.0 + (d + 1.0).ln().max(ln_mu.abs()))).powi(2)
    };
    let mode = mu.floor() as u64;
    let p_mode = (mode as f64 * mu.ln() - mu - ln_factorial(mode)).exp();

    let mut up = Vec::new();
    let mut p = p_mode;
    let mut d = mode;
    loop {
        p *= mu / (d + 1) as f64;
        d += 1;
        up.push(p);
        let q = mu / (d + 1) as f64;
        if q < 1.0 && p * q / (1.0 - q) * weight(d) < tol {
            break;
        }
        if up.len() > config.max_terms {
            return None;
        }
    }

    let mut down = Vec::new();
    let mut p = p_mode;
    let mut d = mode;
    while d > 0 {
        p *= d as f64 / mu;
        d -= 1;
        down.push(p);
        let q = d as f64 / mu;
        if q < 1.0 && p * q / (1.0 - q) * weight(d) < tol {
            break;
        }
        if down.len() + up.len() > config.max_terms {
            return None;
        }
    }

    let lo = mode - down.len() as u64;
    let mut pmf: Vec<f64> = down.into_iter().rev().collect();
    pmf.push(p_mode);
    pmf.extend(up);
    Some((lo, pmf))
}

/// `d log(d / mu)` with `0 log 0 = 0`.
#[inline]
fn dlog(d: f64, mu: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else {
        d * (d / mu).ln()
    }
}

pub fn poisson_moments(mu: f64, config: &PoissonMomentConfig) -> PoissonMoments {
    assert!(mu >= 0.0 && mu.is_finite(), "mu must be finite and nonnegative, got {mu}");
    if mu == 0.0 {
        return PoissonMoments {
            mu,
            f: 0.0,
            phi: 0.0,
            c: 0.0,
            expanded: false,
        };
    }
    let Some((lo, pmf)) = pmf_window(mu, config) else {
        return expansions(mu);
    };
    let mass: f64 = pmf.iter().sum();
    let ln_mu = mu.ln();

    // E[D log(D/mu) - D + mu] has nonnegative summands and equals f.
    let mut f = 0.0;
    for (i, p) in pmf.iter().enumerate() {
        let d = (lo + i as u64) as f64;
        f += p * (dlog(d, mu) - d + mu);
    }
    f /= mass;

    // D log D - E[D log D] = (D log(D/mu) - f) + (D - mu) log mu
    let mut phi = 0.0;
    let mut c = 0.0;
    for (i, p) in pmf.iter().enumerate() {
        let d = (lo + i as u64) as f64;
        let x = (dlog(d, mu) - f) + (d - mu) * ln_mu;
        phi += p * x * x;
        c += p * (d - mu) * x;
    }
    PoissonMoments {
        mu,
        f,
        phi: phi / mass,
        c: c / mass,
        expanded: false,
    }
}

/// Leading large-`mu` behavior of `f`, `phi` and `c`.
pub fn expansions(mu: f64) -> PoissonMoments {
    let l = mu.ln();
    PoissonMoments {
        mu,
        f: f_asymptotic(mu),
        phi: mu * l * l + 2.0 * mu * l + mu + 0.5,
        c: mu * l + mu,
        expanded: true,
    }
}

/// `1/2 + 1/(12 mu) + 1/(12 mu^2)`
pub fn f_asymptotic(mu: f64) -> f64 {
    0.5 + 1.0 / (12.0 * mu) + 1.0 / (12.0 * mu * mu)
}

pub fn f_mu(mu: f64, config: &PoissonMomentConfig) -> f64 {
    poisson_moments(mu, config).f
}

pub fn phi_mu(mu: f64, config: &PoissonMomentConfig) -> f64 {
    poisson_moments(mu, config).phi
}

pub fn c_mu(mu: f64, config: &PoissonMomentConfig) -> f64 {
    poisson_moments(mu, config).c
}

pub fn v_mu(mu: f64, config: &PoissonMomentConfig) -> f64 {
    poisson_moments(mu, config).v()
}

/// `r(mu, n mu) ≈ c(mu) (1 + log(n mu))`, the covariance of one node's
/// `D log D` with the block total's `S log S`, valid for large `n`.
pub fn r_mu_psi_large_n(mu: f64, n: f64, config: &PoissonMomentConfig) -> f64 {
    if mu == 0.0 {
        return 0.0;
    }
    c_mu(mu, config) * (1.0 + (n * mu).ln())
}
