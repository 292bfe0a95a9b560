//! Null distribution of the degree-correction log-likelihood ratio in large
//! sparse graphs.

mod moments;
mod poisson;

pub use moments::{
    chi2_failure_n, chi2_pvalue, gaussian_pvalue, lambda_mean, lambda_variance, null_moments, BlockMoments,
    NullMoments, VarianceMode, FAILURE_CAP, SMALL_BLOCK, WILSON_HILFERTY_DF,
};
pub use poisson::{
    c_mu, expansions, f_asymptotic, f_mu, phi_mu, poisson_moments, r_mu_psi_large_n, v_mu, PoissonMomentConfig,
    PoissonMoments,
};
