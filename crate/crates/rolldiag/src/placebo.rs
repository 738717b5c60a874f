//! Replication-parallel placebo runs.

use rayon::prelude::*;
use rolldiag_core::randomization::placebo_estimate;
use rolldiag_core::regression::{EstimationContext, RegressionSpec};
use rolldiag_core::{Error, ObservationTable, PlaceboDistribution, Result};

/// Runs replications `1..=replications` on `threads` workers (all cores when
/// `None`). Each replication draws from its own stream of `master_seed`, so
/// the result is identical for every thread count.
pub fn run_placebo_parallel(
    table: &ObservationTable,
    spec: &RegressionSpec,
    ctx: &EstimationContext<'_>,
    replications: usize,
    master_seed: u64,
    threads: Option<usize>,
) -> Result<PlaceboDistribution> {
    if replications == 0 {
        return Err(Error::Invalid("placebo run needs at least one replication".into()));
    }
    spec.validate(table)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<f64>> = pool.install(|| {
        (1..=replications as u64)
            .into_par_iter()
            .map(|k| placebo_estimate(table, spec, ctx, master_seed, k))
            .collect()
    });
    PlaceboDistribution::collect(outcomes, master_seed, spec)
}
