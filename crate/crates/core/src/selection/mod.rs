//! Choosing between the ordinary and the degree-corrected block model.

mod agreement;
mod report;
mod statistic;

pub use agreement::label_agreement;
pub use report::{
    fit_pair, moments_for, parametric_bootstrap, run_test, BootstrapResult, DegreeSource, FitPair, FitSummary,
    TestConfig, TestReport,
};
pub use statistic::{lambda_free_energy, lambda_ground_state, statistics, FreeEnergy, GroundState, LambdaStatistic};
