//! Statistically adaptive L-BFGS training for linear models on time-indexed
//! batch streams, with a forgetting-factor least-squares recursion, online
//! baselines and the evaluation tools used to compare them.

pub mod driver;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod lbfgs;
pub mod least_squares;
pub mod model;
pub mod online;
pub mod reduce;

pub use driver::{
    choose_sample_sizes, mismatch, run_stream, should_retrain, sigma, subsample, BatchRecord, DispersionReport,
    DriverConfig, DriverState, MismatchHistory, MismatchMode, PastEval, Reservoir, SampleSizes, SamplerConfig,
};
pub use error::{Error, Result};
pub use eval::{auc, error_rate, oracle_theta_star, regret, RegretReport, ScoredSet};
pub use lbfgs::{
    minimize, two_loop_direction, wolfe_line_search, CurvatureMemory, CurvaturePair, FnObjective, LbfgsConfig,
    Objective, OptimizeResult, OptimizeStatus,
};
pub use least_squares::{fit_error, DenseBatch, ForgetWeight, ForgettingState};
pub use model::{
    batch_cost, batch_gradient, loss, predict, Batch, CostConfig, Example, ExampleObjective, Label, LossKind,
    ParameterVector, RegKind, SparseVector, Stream,
};
pub use online::{run_online, AdagradState, Learner, OgdState, OnlineLearner, OnlineRun, StepSchedule};
