//! Survey-time diagnostics: Epanechnikov moving averages and linear trends of
//! treated share and outcomes against interview date, by birth cohort.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::date::{Date, SurveyWindow};
use crate::error::{Error, Result};
use crate::regression::EstimationContext;
use crate::ObservationTable;

/// Epanechnikov kernel 0.75 (1 − u²) on |u| ≤ 1.
pub fn epanechnikov(u: f64) -> f64 {
    if libm::fabs(u) <= 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// Least-squares line of a variable against days since the window start.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinearTrend {
    /// Fitted change from the first to the last day of the window.
    pub slope_per_window: f64,
    /// Classical OLS standard error of `slope_per_window`; NaN with n = 2.
    pub slope_se: f64,
    /// Fitted value on the window's first day.
    pub intercept: f64,
    pub n: usize,
    pub window_days: i32,
}

impl LinearTrend {
    /// 95% normal interval for the window slope.
    pub fn interval95(&self) -> (f64, f64) {
        let h = 1.959_963_984_540_054 * self.slope_se;
        (self.slope_per_window - h, self.slope_per_window + h)
    }
}

/// Smoothed values on a date grid.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrendCurve {
    pub grid: Vec<Date>,
    /// `None` where no observation has positive kernel weight.
    pub values: Vec<Option<f64>>,
    /// Kish effective sample size (Σk)²/Σk² at each grid point.
    pub n_effective: Vec<f64>,
    pub trend: Option<LinearTrend>,
}

/// Nadaraya–Watson moving average with an Epanechnikov kernel of the given
/// half-width in days, unweighted by survey weights. Observations on the same
/// day are pooled; near the window edges the kernel is renormalized over the
/// available support.
pub fn kernel_smooth(
    dates: &[Date],
    values: &[f64],
    bandwidth_days: f64,
    grid: &[Date],
) -> Result<TrendCurve> {
    if !(bandwidth_days > 0.0) {
        return Err(Error::Invalid(format!("bandwidth must be positive, got {bandwidth_days}")));
    }
    if dates.len() != values.len() {
        return Err(Error::Invalid("dates and values differ in length".into()));
    }
    if dates.is_empty() {
        return Err(Error::Empty("smoothing input"));
    }
    // per-day count and sum
    let mut days: BTreeMap<i32, (f64, f64)> = BTreeMap::new();
    for (d, v) in dates.iter().zip(values) {
        let e = days.entry(d.days()).or_insert((0.0, 0.0));
        e.0 += 1.0;
        e.1 += v;
    }
    let reach = libm::floor(bandwidth_days) as i32;
    let mut out_v = Vec::with_capacity(grid.len());
    let mut out_n = Vec::with_capacity(grid.len());
    for g in grid {
        let (mut kw, mut kwy, mut k2) = (0.0, 0.0, 0.0);
        for (&day, &(count, sum)) in days.range(g.days() - reach..=g.days() + reach) {
            let k = epanechnikov(f64::from(day - g.days()) / bandwidth_days);
            kw += k * count;
            kwy += k * sum;
            k2 += k * k * count;
        }
        if kw > 0.0 {
            out_v.push(Some(kwy / kw));
            out_n.push(kw * kw / k2);
        } else {
            out_v.push(None);
            out_n.push(0.0);
        }
    }
    Ok(TrendCurve {
        grid: grid.to_vec(),
        values: out_v,
        n_effective: out_n,
        trend: None,
    })
}

/// OLS of values on days since `window.start`, slope scaled to the window span.
pub fn linear_trend(dates: &[Date], values: &[f64], window: &SurveyWindow) -> Result<LinearTrend> {
    if dates.len() != values.len() {
        return Err(Error::Invalid("dates and values differ in length".into()));
    }
    let n = dates.len();
    if n < 2 {
        return Err(Error::Degenerate("linear trend needs at least two observations".into()));
    }
    let x: Vec<f64> = dates
        .iter()
        .map(|d| f64::from(d.days() - window.start.days()))
        .collect();
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = values.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all interview dates are identical".into()));
    }
    let sxy: f64 = x.iter().zip(values).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let rss: f64 = x
        .iter()
        .zip(values)
        .map(|(xi, yi)| {
            let e = yi - a - b * xi;
            e * e
        })
        .sum();
    let span = f64::from(window.span_days());
    let slope_se = if n > 2 {
        libm::sqrt(rss / (nf - 2.0) / sxx) * span
    } else {
        f64::NAN
    };
    Ok(LinearTrend {
        slope_per_window: b * span,
        slope_se,
        intercept: a,
        n,
        window_days: window.span_days(),
    })
}

/// A birth-year cohort (inclusive range of estimated birth years).
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Cohort {
    pub name: String,
    pub birth_years: (i32, i32),
}

impl Cohort {
    pub fn new(name: &str, first: i32, last: i32) -> Self {
        Cohort {
            name: name.to_string(),
            birth_years: (first, last),
        }
    }

    fn contains(&self, by: i32) -> bool {
        self.birth_years.0 <= by && by <= self.birth_years.1
    }

    fn overlaps(&self, other: &Cohort) -> bool {
        self.birth_years.0 <= other.birth_years.1 && other.birth_years.0 <= self.birth_years.1
    }
}

/// Variable tracked in survey time.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum TrendVariable {
    /// Share of respondents coded treated.
    Treated,
    Column(String),
}

impl TrendVariable {
    pub fn name(&self) -> &str {
        match self {
            TrendVariable::Treated => "treated",
            TrendVariable::Column(c) => c,
        }
    }
}

impl core::str::FromStr for TrendVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "" => return Err(Error::Invalid("empty variable name".into())),
            "treated" => TrendVariable::Treated,
            other => TrendVariable::Column(other.to_string()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CohortCurve {
    pub cohort: String,
    pub variable: String,
    pub curve: TrendCurve,
    pub trend: LinearTrend,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SlopeDelta {
    pub variable: String,
    pub cohort: String,
    pub reference: String,
    /// Window slope of `cohort` minus that of `reference`.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CohortComparison {
    pub cohorts: Vec<Cohort>,
    /// One entry per cohort × variable, cohort-major.
    pub curves: Vec<CohortCurve>,
    /// Slope differences against the first cohort.
    pub slope_deltas: Vec<SlopeDelta>,
}

impl CohortComparison {
    pub fn curve(&self, cohort: &str, variable: &str) -> Option<&CohortCurve> {
        self.curves
            .iter()
            .find(|c| c.cohort == cohort && c.variable == variable)
    }
}

/// Per-cohort smoothed curves and linear trends on the daily grid of the
/// survey window. Rows with missing values of a variable are skipped for
/// that variable only.
pub fn cohort_compare(
    table: &ObservationTable,
    cohorts: &[Cohort],
    variables: &[TrendVariable],
    ctx: &EstimationContext<'_>,
    bandwidth_days: f64,
) -> Result<CohortComparison> {
    if cohorts.is_empty() {
        return Err(Error::Empty("cohort list"));
    }
    for (i, a) in cohorts.iter().enumerate() {
        if a.birth_years.0 > a.birth_years.1 {
            return Err(Error::Invalid(format!("cohort `{}` has an empty birth-year range", a.name)));
        }
        if let Some(b) = cohorts[i + 1..].iter().find(|b| a.overlaps(b)) {
            return Err(Error::Invalid(format!("cohorts `{}` and `{}` overlap", a.name, b.name)));
        }
    }
    let needs_treatment = variables.contains(&TrendVariable::Treated);
    let (treat, birth_year) = if needs_treatment {
        ctx.treatment(table, "treated")?
    } else {
        let by = table
            .interview_dates()
            .iter()
            .zip(table.ages())
            .map(|(&d, &a)| crate::treatment::estimate_birth_year(d, a))
            .collect();
        (Vec::new(), by)
    };
    let grid = ctx.window.daily_grid();
    let mut curves = Vec::new();
    for cohort in cohorts {
        let members: Vec<usize> = (0..table.len())
            .filter(|&i| cohort.contains(birth_year[i]) && ctx.window.contains(table.interview_dates()[i]))
            .collect();
        if members.is_empty() {
            return Err(Error::Degenerate(format!("cohort `{}` is empty", cohort.name)));
        }
        for var in variables {
            let column: &[Option<f64>] = match var {
                TrendVariable::Treated => &treat,
                TrendVariable::Column(c) => table.numeric(c)?,
            };
            let (dates, values): (Vec<Date>, Vec<f64>) = members
                .iter()
                .filter_map(|&i| column[i].map(|v| (table.interview_dates()[i], v)))
                .unzip();
            if dates.is_empty() {
                return Err(Error::Degenerate(format!(
                    "cohort `{}` has no observed `{}`",
                    cohort.name,
                    var.name()
                )));
            }
            let mut curve = kernel_smooth(&dates, &values, bandwidth_days, &grid)?;
            let trend = linear_trend(&dates, &values, &ctx.window)?;
            curve.trend = Some(trend);
            curves.push(CohortCurve {
                cohort: cohort.name.clone(),
                variable: var.name().to_string(),
                curve,
                trend,
            });
        }
    }
    let reference = &cohorts[0].name;
    let mut slope_deltas = Vec::new();
    for var in variables {
        let base = curves
            .iter()
            .find(|c| &c.cohort == reference && c.variable == var.name())
            .map(|c| c.trend.slope_per_window)
            .expect("reference curve built");
        for cohort in &cohorts[1..] {
            let s = curves
                .iter()
                .find(|c| c.cohort == cohort.name && c.variable == var.name())
                .map(|c| c.trend.slope_per_window)
                .expect("curve built");
            slope_deltas.push(SlopeDelta {
                variable: var.name().to_string(),
                cohort: cohort.name.clone(),
                reference: reference.clone(),
                delta: s - base,
            });
        }
    }
    Ok(CohortComparison {
        cohorts: cohorts.to_vec(),
        curves,
        slope_deltas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn day(i: i32) -> Date {
        SurveyWindow::default().start.add_days(i)
    }

    #[test]
    fn constant_series_smooths_to_constant() {
        let dates: Vec<Date> = (0..122).map(|i| day(i * 3)).collect();
        let vals = vec![2.5; 122];
        let c = kernel_smooth(&dates, &vals, 30.0, &SurveyWindow::default().daily_grid()).unwrap();
        assert!(c.values.iter().all(|v| (v.unwrap() - 2.5).abs() < 1e-15));
    }

    #[test]
    fn single_observation_support() {
        let c = kernel_smooth(&[day(100)], &[4.0], 30.0, &[day(80), day(129), day(130), day(131)]).unwrap();
        assert_eq!(c.values, vec![Some(4.0), Some(4.0), None, None]);
        assert_eq!(c.n_effective[0], 1.0);
        assert_eq!(c.n_effective[3], 0.0);
    }

    #[test]
    fn smoother_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let dates: Vec<Date> = (0..50).map(|_| day(rng.random_range(0..366))).collect();
        let vals: Vec<f64> = (0..50).map(|_| rng.random_range(-3.0..3.0)).collect();
        let grid: Vec<Date> = (0..10).map(|_| day(rng.random_range(0..366))).collect();
        let c = kernel_smooth(&dates, &vals, 30.0, &grid).unwrap();
        for (g, v) in grid.iter().zip(&c.values) {
            let (mut num, mut den) = (0.0, 0.0);
            for (d, y) in dates.iter().zip(&vals) {
                let u = f64::from(d.days() - g.days()) / 30.0;
                let k = if u.abs() <= 1.0 { 0.75 * (1.0 - u * u) } else { 0.0 };
                num += k * y;
                den += k;
            }
            match v {
                Some(v) => assert!((v - num / den).abs() < 1e-12),
                None => assert_eq!(den, 0.0),
            }
        }
    }

    #[test]
    fn bandwidth_validation() {
        assert!(kernel_smooth(&[day(0)], &[1.0], 0.0, &[day(0)]).is_err());
        assert!(kernel_smooth(&[], &[], 30.0, &[day(0)]).is_err());
    }

    #[test]
    fn exact_line_recovers_slope() {
        let w = SurveyWindow::default();
        let dates: Vec<Date> = (0..40).map(|i| day(i * 9)).collect();
        let vals: Vec<f64> = dates
            .iter()
            .map(|d| 1.5 + 0.2 * f64::from(d.days() - w.start.days()) / 365.0)
            .collect();
        let t = linear_trend(&dates, &vals, &w).unwrap();
        assert!((t.slope_per_window - 0.2).abs() < 1e-12);
        assert!((t.intercept - 1.5).abs() < 1e-12);
        assert_eq!(t.window_days, 365);
    }

    #[test]
    fn identical_dates_rejected() {
        let w = SurveyWindow::default();
        assert!(linear_trend(&[day(3), day(3)], &[1.0, 2.0], &w).is_err());
    }

    #[test]
    fn flat_noise_has_no_slope() {
        let w = SurveyWindow::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let dates: Vec<Date> = (0..10_000).map(|_| day(rng.random_range(0..366))).collect();
        let vals: Vec<f64> = (0..10_000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t = linear_trend(&dates, &vals, &w).unwrap();
        assert!(t.slope_per_window.abs() < 3.0 * t.slope_se);
    }

    proptest! {
        #[test]
        fn smoothed_values_stay_in_range(
            pts in prop::collection::vec((0i32..366, -5.0f64..5.0), 1..40),
            bw in 1.0f64..90.0,
        ) {
            let dates: Vec<Date> = pts.iter().map(|(d, _)| day(*d)).collect();
            let vals: Vec<f64> = pts.iter().map(|(_, v)| *v).collect();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let c = kernel_smooth(&dates, &vals, bw, &SurveyWindow::default().daily_grid()).unwrap();
            for v in c.values.iter().flatten() {
                prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
            }
        }

        #[test]
        fn huge_bandwidth_is_the_global_mean(
            pts in prop::collection::vec((0i32..366, -5.0f64..5.0), 1..40),
        ) {
            let dates: Vec<Date> = pts.iter().map(|(d, _)| day(*d)).collect();
            let vals: Vec<f64> = pts.iter().map(|(_, v)| *v).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let grid = [day(0), day(180), day(365)];
            // 1 - u^2 deviates from 1 by at most (365 / h)^2 inside the window
            let spread = vals.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
            let c = kernel_smooth(&dates, &vals, 1e6, &grid).unwrap();
            let bound = 2.0 * (365.0f64 / 1e6).powi(2) * spread + 1e-12;
            for v in &c.values {
                prop_assert!((v.unwrap() - mean).abs() <= bound);
            }
            let c = kernel_smooth(&dates, &vals, 1e9, &grid).unwrap();
            for v in &c.values {
                prop_assert!((v.unwrap() - mean).abs() < 1e-9);
            }
        }

        #[test]
        fn trend_is_equivariant(
            pts in prop::collection::vec((0i32..366, -5.0f64..5.0), 3..40),
            a in -1.0f64..1.0,
        ) {
            let w = SurveyWindow::default();
            let dates: Vec<Date> = pts.iter().map(|(d, _)| day(*d)).collect();
            prop_assume!(dates.iter().any(|d| *d != dates[0]));
            let vals: Vec<f64> = pts.iter().map(|(_, v)| *v).collect();
            let shifted: Vec<f64> = pts.iter().map(|(d, v)| v + a * f64::from(*d)).collect();
            let t0 = linear_trend(&dates, &vals, &w).unwrap();
            let t1 = linear_trend(&dates, &shifted, &w).unwrap();
            prop_assert!((t1.slope_per_window - t0.slope_per_window - a * 365.0).abs() < 1e-8);
        }
    }
}
