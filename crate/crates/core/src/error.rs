use alloc::string::String;
use alloc::vec::Vec;

use crate::date::{Date, YearMonth};

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("column `{0}` not found")]
    MissingColumn(String),

    #[error("column `{name}` has {found} entries, table has {expected} rows")]
    ColumnLength {
        name: String,
        expected: usize,
        found: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("date {0} is outside the CPI series coverage")]
    CpiCoverage(Date),

    #[error("CPI series is not contiguous at {0}")]
    CpiGap(YearMonth),

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("rank deficient design, collinear column(s): {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("fixed-effect absorption did not converge after {iterations} sweeps (max change {achieved:e})")]
    NotConverged { iterations: usize, achieved: f64 },

    #[error("cluster-robust covariance needs at least two clusters, found {0}")]
    TooFewClusters(usize),

    #[error("{failures} of {replications} placebo replications failed, more than the 1% allowance")]
    TooManyFailures { failures: usize, replications: usize },

    #[error("density grid [{lo}, {hi}] contains none of the estimates")]
    EmptySupport { lo: f64, hi: f64 },
}

impl Error {
    /// Errors that a single placebo replication may hit through an unlucky
    /// draw, as opposed to configuration problems that affect every replication.
    pub fn is_replication_failure(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::Degenerate(_)
                | Error::NotConverged { .. }
                | Error::TooFewClusters(_)
        )
    }
}
