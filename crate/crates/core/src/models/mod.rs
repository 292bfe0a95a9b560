//! Parameter containers, samplers, likelihoods, and closed-form estimates for
//! the ordinary and degree-corrected Poisson block models.

mod document;
mod kind;
mod likelihood;
mod params;
mod sample;
mod theta;

pub use document::GenerateSpec;
pub use kind::{block_models, BlockModel, DegreeCorrected, Sbm};
pub use likelihood::{loglik_complete_dc, loglik_complete_sbm, mle_dc, mle_sbm, Estimate};
pub use params::{DcParams, ExpectedDegrees, ModelParams, SbmParams};
pub use sample::{normalize_theta, sample_dcsbm, sample_sbm, DcSample};
pub use theta::{theta_rule_from_table, theta_rules, Constant, PowerLaw, ThetaRule, TwoPoint};
