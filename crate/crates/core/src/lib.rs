//! Diagnostics for staggered-rollout cross-sectional research designs.
//!
//! The crate estimates treatment effects under absorbed fixed effects, measures
//! the "design effect" of a rollout schedule by re-estimating under scrambled
//! schedules, and decomposes identification along survey (fieldwork) time.
//!
//! It is `no_std` and only needs an allocator. File formats, parallel placebo
//! runs and the command-line front end live in the `rolldiag` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod data;
pub mod date;
mod error;
mod fingerprint;
pub(crate) mod linalg;
pub mod randomization;
pub mod regression;
pub mod survey_time;
pub mod synthetic;
pub mod treatment;

pub use data::{trim_weights, CpiSeries, Observation, ObservationTable, WeightMode, WeightPolicy};
pub use date::{Date, SurveyWindow, YearMonth};
pub use error::{Error, Result};
pub use fingerprint::Fingerprint;
pub use randomization::{run_placebo, two_tailed_p, PlaceboDistribution};
pub use regression::{estimate_spec, EstimationContext, FitResult, RegressionSpec};
pub use treatment::{
    assign_treatment, estimate_birth_year, resolve_rollout_year, scramble_schedule, Concordance,
    FiscalYear, RolloutSchedule, Treatment, TreatmentRules,
};
