//! Treatment effect estimation in the principal stratum of early biomarker
//! responders for randomized time-to-event trials.
//!
//! The target population is the subgroup of patients whose post-baseline
//! biomarker would fall below a threshold under treatment. Because that
//! subgroup is only observable on the treatment arm, the placebo
//! counterfactual survival curve has to be reconstructed. This crate
//! implements three such reconstructions (PPR, WPP, MEA), two naive
//! baselines, an event-driven trial simulator with a Monte Carlo truth
//! oracle, and stratified bootstrap inference.
//!
//! - [`data`]: patient records, dataset validation, CSV ingestion,
//!   responder masks and stratum proportions.
//! - [`survival`]: weighted Nelson-Aalen curves, curve algebra, survival
//!   differences and restricted-mean integration.
//! - [`cox`]: Cox proportional hazards with a Breslow baseline, fitted on
//!   the placebo arm for the PPR method.
//! - [`logistic`]: IRLS logistic regression producing WPP weights.
//! - [`estimators`]: the analysis methods and estimand assembly.
//! - [`simulator`]: event-driven trial generation and true subgroup curves.
//! - [`bootstrap`]: stratified nonparametric bootstrap intervals.

pub mod bootstrap;
pub mod cox;
pub mod data;
pub mod estimators;
pub mod logistic;
pub mod simulator;
pub mod survival;

pub use bootstrap::{bootstrap_estimate, bootstrap_intervals, BootstrapConfig, IntervalEstimate};
pub use cox::{average_predicted_curve, fit_cox, predict_survival, CoxModel};
pub use data::{
    load_dataset, responder_mask, stratum_proportions, write_dataset, Arm, PatientRecord,
    StratumProportions, TrialDataset,
};
pub use estimators::{
    estimate, summarize_hazard_ratio, CovariateSet, Estimand, EstimateReport, MethodKind,
    MethodSpec,
};
pub use logistic::{fit_logistic, LogisticModel};
pub use simulator::{
    default_scenario, default_truth_grid, simulate_trial, true_subgroup_curves, Scenario,
    ScenarioConfig, TruthReport,
};
pub use survival::{
    cumulative_hazard_ratio, nelson_aalen, rmst_difference, survival_difference, SurvivalCurve,
    WeightProvenance, WeightVector,
};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed row at line {line}: {message}")]
    MalformedRow { line: u64, message: String },
    #[error("duplicate id {id:?}")]
    DuplicateId { id: String },
    #[error("negative follow-up time for patient {id:?}")]
    NegativeTime { id: String },
    #[error("non-finite {field} for patient {id:?}")]
    NonFiniteField { id: String, field: &'static str },
    #[error("{arm} arm is empty")]
    EmptyArm { arm: Arm },
    #[error("empty subgroup: {0}")]
    EmptySubgroup(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("covariate dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no observed events")]
    NoEvents,
    #[error("all weights are zero")]
    AllWeightsZero,
    #[error("invalid weight at index {index}: {value}")]
    InvalidWeight { index: usize, value: f64 },
    #[error("covariate column {column} is rank deficient")]
    RankDeficient { column: usize },
    #[error(
        "solver did not converge: max |gradient| = {gradient_norm:.3e} after {iterations} iterations"
    )]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
    },
    #[error("labels contain a single class")]
    SingleClass,
    #[error("complete separation detected: coefficient norm {norm:.3e}")]
    Separation { norm: f64 },
    #[error("degenerate curve: {0}")]
    DegenerateCurve(String),
    #[error("invalid survival curve: {0}")]
    InvalidCurve(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("only {achievable} events achievable, {requested} requested")]
    InsufficientEvents { achievable: usize, requested: usize },
    #[error("truth oracle acceptance rate {rate:.2e} is below 1e-3; check the threshold")]
    LowAcceptance { rate: f64 },
    #[error("{failed} of {total} bootstrap resamples failed (limit {limit})")]
    ExcessiveResampleFailures {
        failed: usize,
        total: usize,
        limit: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
