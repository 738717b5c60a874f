//! Placebo-rollout randomization: re-estimate under scrambled schedules,
//! summarize the estimates by their mean ("design effect"), and test an
//! observed estimate against that distribution.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::data::quantile_sorted;
use crate::error::{Error, Result};
use crate::regression::{estimate_with_treatment, EstimationContext, RegressionSpec};
use crate::treatment::{replication_rng, scramble_with, RolloutSchedule};
use crate::ObservationTable;

/// Treatment-coefficient estimates across scrambled schedules.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlaceboDistribution {
    /// Successful estimates, in replication order.
    pub estimates: Vec<f64>,
    /// Replication index (1-based stream id) of each estimate.
    pub replication_ids: Vec<u64>,
    pub master_seed: u64,
    pub replications: usize,
    pub spec_fingerprint: String,
    /// Mean of `estimates`.
    pub design_effect: f64,
    pub failures: usize,
}

impl PlaceboDistribution {
    /// Assembles per-replication outcomes, `outcomes[j]` being replication
    /// `j + 1`. Failed replications are dropped from the mean; more than 1%
    /// failures aborts, as does any error that is not a replication failure.
    pub fn collect(
        outcomes: Vec<Result<f64>>,
        master_seed: u64,
        spec: &RegressionSpec,
    ) -> Result<Self> {
        let replications = outcomes.len();
        if replications == 0 {
            return Err(Error::Invalid("placebo run needs at least one replication".into()));
        }
        let mut estimates = Vec::with_capacity(replications);
        let mut ids = Vec::with_capacity(replications);
        let mut failures = 0;
        for (j, o) in outcomes.into_iter().enumerate() {
            match o {
                Ok(d) => {
                    estimates.push(d);
                    ids.push(j as u64 + 1);
                }
                Err(e) if e.is_replication_failure() => {
                    log::debug!("placebo replication {} failed: {e}", j + 1);
                    failures += 1;
                }
                Err(e) => return Err(e),
            }
        }
        if failures > replications / 100 {
            return Err(Error::TooManyFailures {
                failures,
                replications,
            });
        }
        let design_effect = mean(&estimates);
        Ok(PlaceboDistribution {
            estimates,
            replication_ids: ids,
            master_seed,
            replications,
            spec_fingerprint: spec.fingerprint().to_string(),
            design_effect,
            failures,
        })
    }

    pub fn sd(&self) -> f64 {
        let m = self.design_effect;
        let n = self.estimates.len() as f64;
        if n < 2.0 {
            return 0.0;
        }
        libm::sqrt(self.estimates.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
    }

    /// Monte Carlo standard error of the design effect.
    pub fn mc_se(&self) -> f64 {
        self.sd() / libm::sqrt(self.estimates.len() as f64)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// One placebo replication: scramble with stream `(master_seed, k)`,
/// reassign treatment and re-estimate. Returns the treatment coefficient.
pub fn placebo_estimate(
    table: &ObservationTable,
    spec: &RegressionSpec,
    ctx: &EstimationContext<'_>,
    master_seed: u64,
    k: u64,
) -> Result<f64> {
    let sched = ctx
        .schedule
        .ok_or_else(|| Error::Invalid("placebo runs need a rollout schedule".into()))?;
    let scrambled: RolloutSchedule = scramble_with(sched, &mut replication_rng(master_seed, k));
    let ctx = ctx.with_schedule(&scrambled);
    let (treat, birth_year) = ctx.treatment(table, &spec.treatment)?;
    estimate_with_treatment(table, spec, &ctx, &treat, &birth_year).map(|f| f.delta)
}

/// Sequential placebo run over replications `1..=replications`.
pub fn run_placebo(
    table: &ObservationTable,
    spec: &RegressionSpec,
    ctx: &EstimationContext<'_>,
    replications: usize,
    master_seed: u64,
) -> Result<PlaceboDistribution> {
    if replications == 0 {
        return Err(Error::Invalid("placebo run needs at least one replication".into()));
    }
    spec.validate(table)?;
    let outcomes = (1..=replications as u64)
        .map(|k| placebo_estimate(table, spec, ctx, master_seed, k))
        .collect();
    PlaceboDistribution::collect(outcomes, master_seed, spec)
}

/// Two-tailed randomization p-value of `observed` against the design effect:
/// (1 + #{k : |δₖ − DE| ≥ |observed − DE|}) / (K + 1).
pub fn two_tailed_p(dist: &PlaceboDistribution, observed: f64) -> f64 {
    let de = dist.design_effect;
    let threshold = libm::fabs(observed - de);
    let extreme = dist
        .estimates
        .iter()
        .filter(|&&d| libm::fabs(d - de) >= threshold)
        .count();
    (1 + extreme) as f64 / (dist.estimates.len() + 1) as f64
}

/// Evaluation grid for [`export_density`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum GridSpec {
    /// Data range padded by three bandwidths.
    Auto { points: usize },
    Range { lo: f64, hi: f64, points: usize },
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Auto { points: 512 }
    }
}

/// Kernel density of placebo estimates plus plot markers.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    /// Gaussian kernel bandwidth; zero when all estimates coincide.
    pub bandwidth: f64,
    pub design_effect: f64,
    pub observed: Option<f64>,
}

/// Silverman's rule: 0.9 min(sd, IQR/1.34) n^(-1/5), falling back to sd
/// when the IQR is zero.
pub fn silverman_bandwidth(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let sd = libm::sqrt(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0));
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * libm::pow(n, -0.2)
}

/// Gaussian kernel density of the estimates on an evenly spaced grid.
///
/// When every estimate is identical the density is a point mass placed in
/// the grid cell nearest to it (height 1/spacing).
pub fn export_density(
    dist: &PlaceboDistribution,
    grid: &GridSpec,
    observed: Option<f64>,
) -> Result<DensityCurve> {
    let xs = &dist.estimates;
    if xs.is_empty() {
        return Err(Error::Empty("placebo estimates"));
    }
    let h = silverman_bandwidth(xs);
    let (min, max) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let (lo, hi, points) = match *grid {
        GridSpec::Auto { points } => {
            let pad = if h > 0.0 { 3.0 * h } else { 0.5 };
            (min - pad, max + pad, points)
        }
        GridSpec::Range { lo, hi, points } => {
            if !(hi > lo) {
                return Err(Error::Invalid(format!("density grid [{lo}, {hi}] is empty")));
            }
            if !xs.iter().any(|&x| lo <= x && x <= hi) {
                return Err(Error::EmptySupport { lo, hi });
            }
            (lo, hi, points)
        }
    };
    if points < 2 {
        return Err(Error::Invalid("density grid needs at least two points".into()));
    }
    let step = (hi - lo) / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
    let mut density = alloc::vec![0.0; points];
    if h > 0.0 {
        let norm = 1.0 / (xs.len() as f64 * h * libm::sqrt(2.0 * core::f64::consts::PI));
        for (g, d) in grid.iter().zip(density.iter_mut()) {
            *d = norm
                * xs
                    .iter()
                    .map(|x| {
                        let u = (g - x) / h;
                        libm::exp(-0.5 * u * u)
                    })
                    .sum::<f64>();
        }
    } else {
        let cell = libm::round((xs[0] - lo) / step) as usize;
        density[cell.min(points - 1)] = 1.0 / step;
    }
    Ok(DensityCurve {
        grid,
        density,
        bandwidth: h,
        design_effect: dist.design_effect,
        observed,
    })
}
