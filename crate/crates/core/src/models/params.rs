use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;

/// Block prior `gamma` and symmetric affinity matrix `omega` (row-major).
///
/// `omega[r*k + s]` is the Poisson mean for one pair of nodes in blocks `r`
/// and `s`. Inside the message-passing engine the same container holds the
/// affinities in units of the model's node propensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub gamma: Vec<f64>,
    pub omega: Vec<f64>,
}

impl SbmParams {
    pub fn new(gamma: Vec<f64>, omega: Vec<f64>) -> Result<Self> {
        let p = Self { gamma, omega };
        p.validate()?;
        Ok(p)
    }

    /// Builds from a nested `k x k` matrix.
    pub fn from_matrix(gamma: Vec<f64>, omega: &[Vec<f64>]) -> Result<Self> {
        let k = gamma.len();
        if omega.len() != k || omega.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidParams(format!("omega must be {k}x{k}")));
        }
        Self::new(gamma, omega.concat())
    }

    /// Scales `shape` so that the population-average expected degree is
    /// `mean_degree`, where block `r` has expected degree
    /// `mu_r = n * sum_s gamma_s * omega_rs`.
    pub fn from_mean_degree(n: usize, gamma: Vec<f64>, shape: &[Vec<f64>], mean_degree: f64) -> Result<Self> {
        let unit = Self::from_matrix(gamma, shape)?;
        if n == 0 || !(mean_degree >= 0.0) {
            return Err(Error::InvalidParams(
                "mean degree needs n > 0 and a nonnegative target".into(),
            ));
        }
        let k = unit.k();
        let mut base = 0.0;
        for r in 0..k {
            for s in 0..k {
                base += unit.gamma[r] * unit.gamma[s] * unit.omega(r, s);
            }
        }
        if base <= 0.0 {
            if mean_degree == 0.0 {
                return Ok(unit);
            }
            return Err(Error::InvalidParams("affinity shape is identically zero".into()));
        }
        let scale = mean_degree / (n as f64 * base);
        let omega = unit.omega.iter().map(|w| w * scale).collect();
        Self::new(unit.gamma, omega)
    }

    /// Equal blocks, diagonal affinity 1 and off-diagonal `ratio`, scaled to
    /// the given mean degree.
    pub fn planted(n: usize, k: usize, mean_degree: f64, ratio: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParams("k must be at least 1".into()));
        }
        let shape: Vec<Vec<f64>> = (0..k)
            .map(|r| (0..k).map(|s| if r == s { 1.0 } else { ratio }).collect())
            .collect();
        Self::from_mean_degree(n, vec![1.0 / k as f64; k], &shape, mean_degree)
    }

    pub fn k(&self) -> usize {
        self.gamma.len()
    }

    pub fn omega(&self, r: usize, s: usize) -> f64 {
        self.omega[r * self.k() + s]
    }

    /// Nested rows, convenient for serialization.
    pub fn omega_rows(&self) -> Vec<Vec<f64>> {
        self.omega.chunks(self.k()).map(<[f64]>::to_vec).collect()
    }

    /// `mu_r = n * sum_s gamma_s * omega_rs`.
    pub fn expected_degrees(&self, n: usize) -> ExpectedDegrees {
        let k = self.k();
        let mu = (0..k)
            .map(|r| n as f64 * (0..k).map(|s| self.gamma[s] * self.omega(r, s)).sum::<f64>())
            .collect();
        ExpectedDegrees { mu }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 {
            return Err(Error::InvalidParams("at least one block is required".into()));
        }
        if self.omega.len() != k * k {
            return Err(Error::InvalidParams(format!(
                "omega has {} entries, expected {}",
                self.omega.len(),
                k * k
            )));
        }
        if self.gamma.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::InvalidParams("gamma entries must be finite and nonnegative".into()));
        }
        let total: f64 = self.gamma.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidParams(format!("gamma sums to {total}, not 1")));
        }
        for r in 0..k {
            for s in 0..k {
                let w = self.omega(r, s);
                if !(w.is_finite() && w >= 0.0) {
                    return Err(Error::InvalidParams(format!("omega[{r}][{s}] = {w} is not a nonnegative number")));
                }
                if (w - self.omega(s, r)).abs() > 1e-12 * w.abs().max(1.0) {
                    return Err(Error::InvalidParams("omega must be symmetric".into()));
                }
            }
        }
        Ok(())
    }
}

/// Degree-corrected parameters. `theta` is read together with the block
/// assignment that defines it; within each block the `theta` values sum to
/// the block size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcParams {
    pub gamma: Vec<f64>,
    pub omega: Vec<f64>,
    pub theta: Vec<f64>,
}

impl DcParams {
    pub fn k(&self) -> usize {
        self.gamma.len()
    }

    pub fn omega(&self, r: usize, s: usize) -> f64 {
        self.omega[r * self.k() + s]
    }

    pub fn block_params(&self) -> SbmParams {
        SbmParams {
            gamma: self.gamma.clone(),
            omega: self.omega.clone(),
        }
    }

    /// Checks `sum_{u in r} theta_u = n_r` for each block of `labels`.
    pub fn check_normalization(&self, labels: &[usize], tolerance: f64) -> Result<()> {
        let k = self.k();
        let mut sums = vec![0.0; k];
        let mut sizes = vec![0usize; k];
        for (u, &g) in labels.iter().enumerate() {
            sums[g] += self.theta[u];
            sizes[g] += 1;
        }
        for r in 0..k {
            if (sums[r] - sizes[r] as f64).abs() > tolerance * (sizes[r] as f64).max(1.0) {
                return Err(Error::InvalidParams(format!(
                    "theta in block {} sums to {}, block has {} nodes",
                    r + 1,
                    sums[r],
                    sizes[r]
                )));
            }
        }
        Ok(())
    }
}

/// Expected degree per block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectedDegrees {
    pub mu: Vec<f64>,
}

/// Parameters of either fitted model.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelParams {
    Sbm(SbmParams),
    Dc(DcParams),
}

impl ModelParams {
    pub fn gamma(&self) -> &[f64] {
        match self {
            ModelParams::Sbm(p) => &p.gamma,
            ModelParams::Dc(p) => &p.gamma,
        }
    }

    pub fn omega(&self) -> &[f64] {
        match self {
            ModelParams::Sbm(p) => &p.omega,
            ModelParams::Dc(p) => &p.omega,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_invalid() {
        assert!(SbmParams::new(vec![0.5, 0.6], vec![0.0; 4]).is_err());
        assert!(SbmParams::new(vec![0.5, 0.5], vec![1.0, 2.0, 1.0, 1.0]).is_err());
        assert!(SbmParams::new(vec![1.0], vec![-1.0]).is_err());
        assert!(SbmParams::new(vec![1.0], vec![f64::NAN]).is_err());
        assert!(SbmParams::new(vec![], vec![]).is_err());
        assert!(SbmParams::new(vec![1.0], vec![0.3]).is_ok());
    }

    #[test]
    fn planted_hits_target_degrees() {
        let p = SbmParams::planted(1000, 2, 11.0, 1.0 / 11.0).unwrap();
        let mu = p.expected_degrees(1000).mu;
        assert!((mu[0] - 11.0).abs() < 1e-9 && (mu[1] - 11.0).abs() < 1e-9);
        assert!((p.omega(0, 1) / p.omega(0, 0) - 1.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn zero_shape_with_zero_degree() {
        let p = SbmParams::from_mean_degree(10, vec![1.0], &[vec![0.0]], 0.0).unwrap();
        assert_eq!(p.omega, vec![0.0]);
        assert!(SbmParams::from_mean_degree(10, vec![1.0], &[vec![0.0]], 1.0).is_err());
    }
}
