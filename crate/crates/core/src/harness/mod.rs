//! Experiment orchestration: lemma suites, the one-dimensional theorem
//! experiment, the classical functional experiment and report emission.
//!
//! Every random draw comes from a ChaCha stream keyed by the master seed and
//! a fixed `(group, index)` pair, so reports do not depend on the worker
//! count.

mod config;
mod fclt;
mod lemmas;
mod report;
mod thm1;

pub use config::{ExperimentConfig, FcltConfig, LemmaConfig, Thm1Config};
pub use fclt::{run_classical_fclt_experiment, truncated_moment};
pub use lemmas::{
    dp_crosscheck_suite, field_remainder_suite, gaussian_kernel_suite, kernel_suite, maximal_inequality_suite,
    random_discrete_family, random_family, random_interval_union, run_verify_lemmas, truncated_moment_suite,
};
pub use report::{emit_report, ExperimentReport, ReportFormat, ReportRow, RowKind};
pub use thm1::{run_thm1_experiment, thm1_cases, thm1_report, Thm1Case};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Scenario(#[from] crate::scenario::ScenarioError),
    #[error(transparent)]
    Field(#[from] crate::smoothfields::FieldError),
    #[error(transparent)]
    Path(#[from] crate::paths::PathError),
    #[error(transparent)]
    Dp(#[from] crate::dp::DpError),
    #[error(transparent)]
    Prokhorov(#[from] crate::prokhorov::ProkhorovError),
    #[error(transparent)]
    Bounds(#[from] crate::bounds::BoundsError),
}

/// Stream groups; each experiment owns a disjoint range.
pub(crate) mod groups {
    pub const GAUSSIAN_SETS: u32 = 10;
    pub const FIELD_SETS: u32 = 11;
    pub const FAMILIES: u32 = 12;
    pub const DP_CROSS: u32 = 13;
    pub const DP_MC: u32 = 14;
    pub const MAXIMAL: u32 = 20;
    pub const FCLT_SN: u32 = 100;
    pub const FCLT_BN: u32 = 200;
    pub const FCLT_BOOT: u32 = 300;
    pub const FCLT_BASELINE: u32 = 400;
}
