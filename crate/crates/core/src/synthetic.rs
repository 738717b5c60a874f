//! Synthetic data with a staggered rollout, rolling fieldwork, age-based
//! birth-year measurement and an outcome drift in interview time.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::data::{CpiSeries, Observation, ObservationTable};
use crate::date::{Date, SurveyWindow, YearMonth};
use crate::error::{Error, Result};
use crate::treatment::{Concordance, FiscalYear, RolloutSchedule, TreatmentRules};

/// District counts by fiscal year of adoption used when none are configured.
pub const DEFAULT_ADOPTION_SHARES: [(i32, u32); 5] =
    [(1985, 31), (1986, 109), (1987, 109), (1988, 109), (1989, 108)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum InterviewProcess {
    /// Interview day uniform over the window.
    #[default]
    Uniform,
    /// Each district is surveyed within one randomly chosen window month.
    SequencedByDistrict,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DgpConfig {
    pub n_districts: usize,
    /// Districts adopting in each fiscal year; must sum to `n_districts`.
    pub adoption_counts: Option<Vec<(FiscalYear, usize)>>,
    pub n_per_district: usize,
    /// Respondents per district from the older control cohort.
    pub control_per_district: usize,
    pub window: SurveyWindow,
    /// Inclusive range of completed age at interview for the main cohort.
    pub ages: (u32, u32),
    pub control_ages: (u32, u32),
    pub true_effect: f64,
    /// Outcome drift in log points per 365 days of interview time.
    pub drift: f64,
    /// Drift of log expenditure relative to log wage.
    pub pce_drift_ratio: f64,
    pub district_sd: f64,
    /// Outcome change per year of reported age.
    pub age_slope: f64,
    pub noise_sd: f64,
    pub interviews: InterviewProcess,
    pub weight_median: f64,
    pub weight_log_sd: f64,
    /// Price rise over the window used for the emitted CPI series.
    pub cpi_rise: f64,
    /// Probability that a wage is unobserved.
    pub wage_missing: f64,
    pub rules: TreatmentRules,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            n_districts: 100,
            adoption_counts: None,
            n_per_district: 50,
            control_per_district: 0,
            window: SurveyWindow::default(),
            ages: (21, 26),
            control_ages: (31, 36),
            true_effect: 0.0,
            drift: 0.2,
            pce_drift_ratio: 0.5,
            district_sd: 0.3,
            age_slope: 0.02,
            noise_sd: 0.5,
            interviews: InterviewProcess::Uniform,
            weight_median: 2800.0,
            weight_log_sd: 0.8,
            cpi_rise: 0.106,
            wage_missing: 0.0,
            rules: TreatmentRules::default(),
            seed: 0,
        }
    }
}

/// Largest-remainder apportionment of `n` over `shares`; ties go to the earlier entry.
pub fn apportion(n: usize, shares: &[u32]) -> Vec<usize> {
    let total: u64 = shares.iter().map(|&s| u64::from(s)).sum();
    if total == 0 {
        return vec![0; shares.len()];
    }
    let mut counts: Vec<usize> = shares
        .iter()
        .map(|&s| (n as u64 * u64::from(s) / total) as usize)
        .collect();
    let mut rema: Vec<(u64, usize)> = shares
        .iter()
        .enumerate()
        .map(|(i, &s)| (n as u64 * u64::from(s) % total, i))
        .collect();
    rema.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = n - counts.iter().sum::<usize>();
    for &(_, i) in rema.iter().take(short) {
        counts[i] += 1;
    }
    counts
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_districts == 0 {
            return Err(Error::Invalid("n_districts must be positive".into()));
        }
        if self.n_per_district == 0 {
            return Err(Error::Invalid("n_per_district must be positive".into()));
        }
        for (name, (lo, hi)) in [("ages", self.ages), ("control_ages", self.control_ages)] {
            if lo > hi {
                return Err(Error::Invalid(format!("{name} range is empty")));
            }
        }
        for (name, v) in [
            ("district_sd", self.district_sd),
            ("noise_sd", self.noise_sd),
            ("weight_log_sd", self.weight_log_sd),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Invalid(format!("{name} must be finite and non-negative")));
            }
        }
        for (name, v) in [
            ("true_effect", self.true_effect),
            ("drift", self.drift),
            ("pce_drift_ratio", self.pce_drift_ratio),
            ("age_slope", self.age_slope),
        ] {
            if !v.is_finite() {
                return Err(Error::Invalid(format!("{name} must be finite")));
            }
        }
        if !(self.weight_median > 0.0) || !self.weight_median.is_finite() {
            return Err(Error::Invalid("weight_median must be positive".into()));
        }
        if !(self.cpi_rise > -1.0) || !self.cpi_rise.is_finite() {
            return Err(Error::Invalid("cpi_rise must exceed -1".into()));
        }
        if !(0.0..1.0).contains(&self.wage_missing) {
            return Err(Error::Invalid("wage_missing must lie in [0, 1)".into()));
        }
        if let Some(counts) = &self.adoption_counts {
            let total: usize = counts.iter().map(|c| c.1).sum();
            if total != self.n_districts {
                return Err(Error::Invalid(format!(
                    "adoption counts sum to {total}, expected {}",
                    self.n_districts
                )));
            }
            let mut years: Vec<i32> = counts.iter().map(|c| c.0 .0).collect();
            years.sort_unstable();
            if years.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Invalid("adoption counts repeat a fiscal year".into()));
            }
        }
        Ok(())
    }

    /// Adoption counts per fiscal year, defaulting to the proportional split.
    pub fn adoption(&self) -> Vec<(FiscalYear, usize)> {
        match &self.adoption_counts {
            Some(c) => c.clone(),
            None => {
                let shares: Vec<u32> = DEFAULT_ADOPTION_SHARES.iter().map(|s| s.1).collect();
                DEFAULT_ADOPTION_SHARES
                    .iter()
                    .zip(apportion(self.n_districts, &shares))
                    .map(|(&(y, _), c)| (FiscalYear(y), c))
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub table: ObservationTable,
    pub schedule: RolloutSchedule,
    pub concordance: Concordance,
    pub cpi: CpiSeries,
}

pub const WAGE: &str = "log_wage";
pub const PCE: &str = "log_pce";
pub const FEMALE: &str = "female";
/// True treatment status by actual birth date, kept for diagnostics.
pub const TRUE_TREATED: &str = "true_treated";

fn district_id(i: usize, n: usize) -> String {
    let width = core::cmp::max(3, n.to_string().len());
    format!("D{:0width$}", i + 1)
}

fn month_start(m: YearMonth) -> Result<Date> {
    Date::from_ymd(m.year, m.month, 1).ok_or_else(|| Error::Invalid(format!("month {m} out of range")))
}

/// Draws a birth date whose completed age at `interview` lies in `ages`.
fn draw_birth(rng: &mut ChaCha8Rng, interview: Date, ages: (u32, u32)) -> Date {
    let oldest = interview.add_years(-(ages.1 as i32) - 1).days() + 1;
    let youngest = interview.add_years(-(ages.0 as i32)).days();
    Date::from_days(rng.random_range(oldest..=youngest))
}

pub fn generate(config: &DgpConfig) -> Result<SyntheticData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_districts;
    let ids: Vec<String> = (0..n).map(|i| district_id(i, n)).collect();

    let mut labels: Vec<FiscalYear> = config
        .adoption()
        .iter()
        .flat_map(|&(fy, c)| core::iter::repeat_n(fy, c))
        .collect();
    labels.shuffle(&mut rng);
    let schedule = RolloutSchedule::new(ids.iter().cloned().zip(labels.iter().copied()))?;
    let concordance = Concordance::identity(ids.iter().cloned());

    let district_noise = Normal::new(0.0, config.district_sd)
        .map_err(|e| Error::Invalid(format!("district_sd: {e}")))?;
    let noise = Normal::new(0.0, config.noise_sd).map_err(|e| Error::Invalid(format!("noise_sd: {e}")))?;
    let weights = LogNormal::new(libm::log(config.weight_median), config.weight_log_sd)
        .map_err(|e| Error::Invalid(format!("weights: {e}")))?;

    let window = config.window;
    let span = window.span_days();
    let n_months = window.n_months() as i64;
    let first = window.first_month().ordinal();
    let mut table = ObservationTable::with_schema(
        "synthetic",
        [WAGE, PCE, FEMALE, TRUE_TREATED],
        [] as [&str; 0],
    );
    let mut person = 0u64;
    for (d, id) in ids.iter().enumerate() {
        let effect = district_noise.sample(&mut rng);
        let threshold = config.rules.threshold_year(labels[d]);
        let month = YearMonth::from_ordinal(first + rng.random_range(0..n_months));
        let total = config.n_per_district + config.control_per_district;
        for j in 0..total {
            let ages = if j < config.n_per_district {
                config.ages
            } else {
                config.control_ages
            };
            let interview = match config.interviews {
                InterviewProcess::Uniform => window.start.add_days(rng.random_range(0..=span)),
                InterviewProcess::SequencedByDistrict => {
                    let lo = core::cmp::max(window.start, month_start(month)?);
                    let next = month.succ();
                    let hi = core::cmp::min(
                        window.end,
                        month_start(next)?.add_days(-1),
                    );
                    Date::from_days(rng.random_range(lo.days()..=hi.days()))
                }
            };
            let birth = draw_birth(&mut rng, interview, ages);
            let age = interview.completed_years_since(birth) as u32;
            debug_assert!(ages.0 <= age && age <= ages.1);
            let treated = if birth.year() >= threshold { 1.0 } else { 0.0 };
            let t = f64::from(interview.days() - window.start.days()) / 365.0;
            let age_term = config.age_slope * f64::from(age - ages.0);
            let wage = 5.0
                + effect
                + age_term
                + config.drift * t
                + config.true_effect * treated
                + noise.sample(&mut rng);
            let pce = 7.0
                + effect
                + age_term
                + config.pce_drift_ratio * config.drift * t
                + config.true_effect * treated
                + noise.sample(&mut rng);
            let female = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
            let w = weights.sample(&mut rng);
            let missing = config.wage_missing > 0.0 && rng.random_bool(config.wage_missing);
            person += 1;
            let mut numeric = BTreeMap::new();
            numeric.insert(WAGE.to_string(), if missing { None } else { Some(wage) });
            numeric.insert(PCE.to_string(), Some(pce));
            numeric.insert(FEMALE.to_string(), Some(female));
            numeric.insert(TRUE_TREATED.to_string(), Some(treated));
            table.push(Observation {
                person_id: format!("P{person:07}"),
                district: id.clone(),
                interview,
                age,
                weight: w,
                numeric,
                categorical: BTreeMap::new(),
            })?;
        }
    }

    let base = window.first_month();
    let months = window.n_months() as i64;
    let growth = libm::log1p(config.cpi_rise);
    let points = (0..months).map(|m| {
        (
            YearMonth::from_ordinal(base.ordinal() + m),
            100.0 * libm::exp(growth * m as f64 / 12.0),
        )
    })
    .collect();
    let cpi = CpiSeries::new(points, base)?;
    Ok(SyntheticData {
        table,
        schedule,
        concordance,
        cpi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_apportionment() {
        assert_eq!(apportion(466, &[31, 109, 109, 109, 108]), vec![31, 109, 109, 109, 108]);
        let c = apportion(100, &[31, 109, 109, 109, 108]);
        assert_eq!(c, vec![7, 24, 23, 23, 23]);
        assert_eq!(apportion(3, &[1, 1, 1, 1]), vec![1, 1, 1, 0]);
    }

    #[test]
    fn row_count_and_schedule() {
        let cfg = DgpConfig {
            n_districts: 12,
            n_per_district: 7,
            control_per_district: 2,
            ..DgpConfig::default()
        };
        let data = generate(&cfg).unwrap();
        assert_eq!(data.table.len(), 12 * 9);
        assert_eq!(data.schedule.len(), 12);
        assert_eq!(data.concordance.len(), 12);
        let counts = data.schedule.counts();
        assert_eq!(counts.values().sum::<usize>(), 12);
    }

    #[test]
    fn ages_and_dates_in_range() {
        let cfg = DgpConfig {
            n_districts: 20,
            control_per_district: 10,
            interviews: InterviewProcess::SequencedByDistrict,
            ..DgpConfig::default()
        };
        let data = generate(&cfg).unwrap();
        let t = &data.table;
        for i in 0..t.len() {
            assert!(cfg.window.contains(t.interview_dates()[i]));
            let a = t.ages()[i];
            assert!((21..=26).contains(&a) || (31..=36).contains(&a));
        }
        // one fieldwork month per district
        let mut months: BTreeMap<&str, alloc::collections::BTreeSet<YearMonth>> = BTreeMap::new();
        for i in 0..t.len() {
            months
                .entry(t.districts()[i].as_str())
                .or_default()
                .insert(t.interview_dates()[i].year_month());
        }
        assert!(months.values().all(|m| m.len() == 1));
    }

    #[test]
    fn noiseless_flat_config_is_constant() {
        let cfg = DgpConfig {
            n_districts: 5,
            n_per_district: 20,
            drift: 0.0,
            true_effect: 0.0,
            district_sd: 0.0,
            noise_sd: 0.0,
            age_slope: 0.0,
            ..DgpConfig::default()
        };
        let data = generate(&cfg).unwrap();
        assert!(data.table.numeric(WAGE).unwrap().iter().all(|v| *v == Some(5.0)));
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = DgpConfig {
            n_districts: 10,
            n_per_district: 5,
            seed: 9,
            ..DgpConfig::default()
        };
        assert_eq!(generate(&cfg).unwrap().table, generate(&cfg).unwrap().table);
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            DgpConfig { n_districts: 0, ..DgpConfig::default() },
            DgpConfig { n_per_district: 0, ..DgpConfig::default() },
            DgpConfig { noise_sd: -1.0, ..DgpConfig::default() },
            DgpConfig { ages: (30, 20), ..DgpConfig::default() },
            DgpConfig {
                adoption_counts: Some(vec![(FiscalYear(1985), 50)]),
                ..DgpConfig::default()
            },
        ] {
            assert!(matches!(generate(&cfg), Err(Error::Invalid(_))));
        }
    }

    #[test]
    fn cpi_spans_the_window() {
        let data = generate(&DgpConfig { n_districts: 3, n_per_district: 2, ..DgpConfig::default() }).unwrap();
        let pts: Vec<_> = data.cpi.points().collect();
        assert_eq!(pts.len(), 12);
        let last = pts.last().unwrap().1;
        assert!((last / 100.0 - libm::exp(libm::log(1.106) * 11.0 / 12.0)).abs() < 1e-12);
    }
}
