//! Error metrics, hyperparameter spaces, random search and the restart
//! protocol for final test scores.

mod config;
mod metrics;
mod search;
mod space;

pub use config::{FittedModel, GradConfig, ModelConfig};
pub use metrics::{accuracy_psi, nrmse, scored_nrmse, TRANSIENT};
pub use search::{
    final_eval, rank, restart_seed, run_search, run_trial, sample_trial, FinalReport,
    RestartResult, SearchOptions, SearchReport, TrialResult, TrialStatus,
};
pub use space::{Dist, EsnSpace, GradSpace, HyperSpace, NarxSpace, OptimizerChoice, ARCHITECTURES};
