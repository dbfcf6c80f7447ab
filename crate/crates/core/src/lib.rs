//! Prevalence estimation from a random survey combined with official case
//! counts, including correction for misclassification in both sources.
//!
//! The survey records, for every sampled person, the survey test result and
//! whether the person is already registered as a case. Estimators exploit
//! the known official proportion `pi0` to sharpen the survey-only estimate.

pub mod error;
pub mod estimators;
pub mod intervals;
pub mod model;
pub mod montecarlo;
pub mod optimize;
pub mod rng;
pub mod special;

pub use error::{CapeError, Result};
pub use estimators::{
    conditional_mle, estimate, fisher_information, gmm_weights, marginal_mle, mme, optimal_gmm, survey_mle,
    EstimatorKind, GmmWeights, PrevalenceEstimate,
};
pub use intervals::{
    asymptotic_interval, clopper_pearson, cp_mme_interval, cp_survey_interval, ConfidenceInterval, IntervalMethod,
};
pub use model::{
    prevalence_lower_bound, tau_probabilities, validate_design, Cell, ErrorRates, OfficialContext, SurveyCounts,
    TauVector, ValidationReport,
};
pub use montecarlo::{run_scenario, run_scenario_with, Execution, Scenario, ScenarioResult, Setting};
