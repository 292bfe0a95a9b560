//! Human-readable parameter documents for graph generation.
//!
//! ```toml
//! n = 2000
//! seed = 7
//! gamma = [0.5, 0.5]
//! mean_degree = 3.0
//! mixing_ratio = 0.15      # or: shape = [[1.0, 0.2], [0.2, 1.0]]
//!                          # or: omega = [[...], [...]] per-pair means
//! [theta]                  # optional; omitted means the ordinary model
//! rule = "power-law"
//! exponent = 2.5
//! ```

use serde::{Deserialize, Serialize};

use super::params::SbmParams;
use super::theta::{theta_rule_from_table, ThetaRule};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    pub gamma: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_degree: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixing_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<toml::Table>,
}

impl GenerateSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::InvalidParams(e.message().to_string()))?;
        spec.params()?;
        spec.theta_rule()?;
        Ok(spec)
    }

    /// Resolves the per-pair affinity matrix.
    pub fn params(&self) -> Result<SbmParams> {
        if self.n == 0 {
            return Err(Error::InvalidParams("n must be positive".into()));
        }
        let k = self.gamma.len();
        match (&self.omega, self.mean_degree) {
            (Some(omega), None) => {
                if self.mixing_ratio.is_some() || self.shape.is_some() {
                    return Err(Error::InvalidParams(
                        "`omega` cannot be combined with `mixing_ratio` or `shape`".into(),
                    ));
                }
                SbmParams::from_matrix(self.gamma.clone(), omega)
            }
            (None, Some(mean_degree)) => {
                let shape = match (&self.shape, self.mixing_ratio) {
                    (Some(shape), None) => shape.clone(),
                    (None, Some(ratio)) => (0..k)
                        .map(|r| (0..k).map(|s| if r == s { 1.0 } else { ratio }).collect())
                        .collect(),
                    (None, None) => vec![vec![1.0; k]; k],
                    (Some(_), Some(_)) => {
                        return Err(Error::InvalidParams("give either `shape` or `mixing_ratio`, not both".into()))
                    }
                };
                SbmParams::from_mean_degree(self.n, self.gamma.clone(), &shape, mean_degree)
            }
            (Some(_), Some(_)) => Err(Error::InvalidParams("give either `omega` or `mean_degree`, not both".into())),
            (None, None) => Err(Error::InvalidParams("one of `omega` or `mean_degree` is required".into())),
        }
    }

    pub fn theta_rule(&self) -> Result<Option<Box<dyn ThetaRule>>> {
        self.theta.as_ref().map(theta_rule_from_table).transpose()
    }

    /// An equivalent document with `omega` written out explicitly and theta
    /// defaults filled in.
    pub fn resolved(&self) -> Result<Self> {
        let params = self.params()?;
        let theta = self.theta_rule()?.map(|rule| {
            let mut t = rule.settings();
            t.insert("rule".into(), rule.name().into());
            t
        });
        Ok(Self {
            omega: Some(params.omega_rows()),
            mean_degree: None,
            mixing_ratio: None,
            shape: None,
            theta,
            ..self.clone()
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("generate spec is always serializable")
    }
}
