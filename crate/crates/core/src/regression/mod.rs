//! Weighted least squares with absorbed fixed effects, singleton dropping,
//! cluster-robust covariance, and the end-to-end specification runner.
//!
//! The runner stages are: assign treatment, restrict the cohort, drop rows
//! with missing values, apply the weight policy, optionally deflate, optionally
//! add survey-month indicators, drop fixed-effect singletons, absorb, solve,
//! and compute the clustered covariance.
//!
//! Rows are put in a canonical order before any arithmetic, so results do not
//! depend on the row order of the input table.

mod fe;
mod vcov;
mod wls;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

pub use fe::{
    absorb_fe, absorbed_dof, drop_singletons as drop_singleton_rows, AbsorbOptions, FeGroup,
    Factor, Grouping, KeyPart,
};
pub use vcov::{cluster_vcov, ClusterVcov};
pub use wls::{wls_fit, Design, WlsFit, RANK_TOLERANCE};

use crate::data::{deflate, trim_weights, CpiSeries, ObservationTable, WeightPolicy};
use crate::date::SurveyWindow;
use crate::error::{Error, Result};
use crate::fingerprint::{Fingerprint, Fnv1a};
use crate::treatment::{Concordance, RolloutSchedule, TreatmentAssignment, TreatmentRules};

/// A column whose weighted norm shrinks below this fraction of its original
/// norm under absorption is collinear with the fixed effects.
pub const FE_COLLINEARITY_TOLERANCE: f64 = 1e-8;

/// Declarative regression specification.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegressionSpec {
    pub name: String,
    pub outcome: String,
    /// Label of the treatment regressor; read from a numeric column of this
    /// name when no rollout schedule is supplied.
    #[cfg_attr(feature = "serde", serde(default = "default_treatment"))]
    pub treatment: String,
    #[cfg_attr(feature = "serde", serde(default))]
    pub controls: Vec<String>,
    pub absorb: Vec<Grouping>,
    #[cfg_attr(feature = "serde", serde(default = "default_cluster"))]
    pub cluster: Factor,
    #[cfg_attr(feature = "serde", serde(default))]
    pub weights: WeightPolicy,
    #[cfg_attr(feature = "serde", serde(default))]
    pub month_dummies: bool,
    #[cfg_attr(feature = "serde", serde(default))]
    pub deflate: bool,
    /// Inclusive range of estimated birth years kept.
    #[cfg_attr(feature = "serde", serde(default))]
    pub birth_years: Option<(i32, i32)>,
    /// Inclusive range of ages at interview kept.
    #[cfg_attr(feature = "serde", serde(default))]
    pub ages: Option<(u32, u32)>,
}

#[cfg(feature = "serde")]
fn default_treatment() -> String {
    "treated".into()
}

#[cfg(feature = "serde")]
fn default_cluster() -> Factor {
    Factor::District
}

impl RegressionSpec {
    fn base(name: &str, outcome: &str, absorb: Vec<Grouping>) -> Self {
        RegressionSpec {
            name: name.to_string(),
            outcome: outcome.to_string(),
            treatment: "treated".to_string(),
            controls: Vec::new(),
            absorb,
            cluster: Factor::District,
            weights: WeightPolicy::default(),
            month_dummies: false,
            deflate: false,
            birth_years: None,
            ages: None,
        }
    }

    /// Two-way fixed effects: district and birth-year effects.
    pub fn two_way(name: &str, outcome: &str) -> Self {
        Self::base(
            name,
            outcome,
            vec![
                Grouping::single(Factor::District),
                Grouping::single(Factor::BirthYear),
            ],
        )
    }

    /// District-by-age effects: treatment varies with birth year while age
    /// at interview is held fixed.
    pub fn district_by_age(name: &str, outcome: &str) -> Self {
        Self::base(
            name,
            outcome,
            vec![Grouping::interaction([Factor::District, Factor::Age])],
        )
    }

    /// District-by-birth-year effects. The treatment is a function of the
    /// cell, so this specification is not identified.
    pub fn district_by_birth_year(name: &str, outcome: &str) -> Self {
        Self::base(
            name,
            outcome,
            vec![Grouping::interaction([Factor::District, Factor::BirthYear])],
        )
    }

    pub fn with_controls<I, S>(mut self, controls: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.controls = controls.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_weights(mut self, policy: WeightPolicy) -> Self {
        self.weights = policy;
        self
    }

    pub fn with_month_dummies(mut self, on: bool) -> Self {
        self.month_dummies = on;
        self
    }

    pub fn with_deflation(mut self, on: bool) -> Self {
        self.deflate = on;
        self
    }

    pub fn with_birth_years(mut self, lo: i32, hi: i32) -> Self {
        self.birth_years = Some((lo, hi));
        self
    }

    pub fn with_ages(mut self, lo: u32, hi: u32) -> Self {
        self.ages = Some((lo, hi));
        self
    }

    /// Checks the specification against a table's schema.
    pub fn validate(&self, table: &ObservationTable) -> Result<()> {
        if self.absorb.is_empty() {
            return Err(Error::Invalid(format!("spec `{}`: no fixed-effect groupings", self.name)));
        }
        if !table.has_numeric(&self.outcome) {
            return Err(Error::MissingColumn(self.outcome.clone()));
        }
        for c in &self.controls {
            if !table.has_numeric(c) && !table.has_categorical(c) {
                return Err(Error::MissingColumn(c.clone()));
            }
        }
        for g in &self.absorb {
            if g.0.is_empty() {
                return Err(fe::grouping_error(g, "empty"));
            }
            for f in &g.0 {
                check_factor(table, f)?;
            }
        }
        check_factor(table, &self.cluster)?;
        self.weights.validate()?;
        if let Some((lo, hi)) = self.birth_years {
            if lo > hi {
                return Err(Error::Invalid(format!("birth-year range {lo}..{hi} is empty")));
            }
        }
        if let Some((lo, hi)) = self.ages {
            if lo > hi {
                return Err(Error::Invalid(format!("age range {lo}..{hi} is empty")));
            }
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> Fingerprint {
        let mut h = Fnv1a::new();
        h.str(&self.name);
        h.str(&self.outcome);
        h.str(&self.treatment);
        for c in &self.controls {
            h.str(c);
        }
        h.str("|");
        for g in &self.absorb {
            h.str(&g.to_string());
        }
        h.str("|");
        h.str(self.cluster.name());
        h.str(match self.weights.mode {
            crate::data::WeightMode::None => "none",
            crate::data::WeightMode::Raw => "raw",
            crate::data::WeightMode::Trimmed => "trimmed",
        });
        h.f64(self.weights.trim_multiplier);
        h.str(if self.month_dummies { "m1" } else { "m0" });
        h.str(if self.deflate { "d1" } else { "d0" });
        match self.birth_years {
            Some((a, b)) => h.str(&format!("by{a}-{b}")),
            None => h.str("by*"),
        }
        match self.ages {
            Some((a, b)) => h.str(&format!("age{a}-{b}")),
            None => h.str("age*"),
        }
        h.finish_fingerprint()
    }
}

fn check_factor(table: &ObservationTable, f: &Factor) -> Result<()> {
    match f {
        Factor::Column(c) if !table.has_categorical(c) => Err(Error::MissingColumn(c.clone())),
        _ => Ok(()),
    }
}

/// Auxiliary inputs shared by every estimate on a dataset.
#[derive(Debug, Clone, Copy)]
pub struct EstimationContext<'a> {
    pub schedule: Option<&'a RolloutSchedule>,
    /// Defaults to the identity mapping when absent.
    pub concordance: Option<&'a Concordance>,
    pub cpi: Option<&'a CpiSeries>,
    pub rules: TreatmentRules,
    pub window: SurveyWindow,
    pub absorb: AbsorbOptions,
}

impl<'a> EstimationContext<'a> {
    pub fn new(schedule: &'a RolloutSchedule) -> Self {
        EstimationContext {
            schedule: Some(schedule),
            concordance: None,
            cpi: None,
            rules: TreatmentRules::default(),
            window: SurveyWindow::default(),
            absorb: AbsorbOptions::default(),
        }
    }

    /// Treatment is read from the table instead of derived from a schedule.
    pub fn without_schedule() -> Self {
        EstimationContext {
            schedule: None,
            concordance: None,
            cpi: None,
            rules: TreatmentRules::default(),
            window: SurveyWindow::default(),
            absorb: AbsorbOptions::default(),
        }
    }

    pub fn with_concordance(mut self, conc: &'a Concordance) -> Self {
        self.concordance = Some(conc);
        self
    }

    pub fn with_cpi(mut self, cpi: &'a CpiSeries) -> Self {
        self.cpi = Some(cpi);
        self
    }

    pub fn with_schedule(mut self, sched: &'a RolloutSchedule) -> Self {
        self.schedule = Some(sched);
        self
    }

    pub fn with_rules(mut self, rules: TreatmentRules) -> Self {
        self.rules = rules;
        self
    }

    pub fn with_window(mut self, window: SurveyWindow) -> Self {
        self.window = window;
        self
    }

    /// Per-row treatment indicator (None = missing) and estimated birth year.
    pub fn treatment(
        &self,
        table: &ObservationTable,
        treatment_column: &str,
    ) -> Result<(Vec<Option<f64>>, Vec<i32>)> {
        match self.schedule {
            Some(sched) => {
                let identity;
                let conc = match self.concordance {
                    Some(c) => c,
                    None => {
                        identity = Concordance::identity(sched.iter().map(|(d, _)| d.to_string()));
                        &identity
                    }
                };
                let a = TreatmentAssignment::compute(table, conc, sched, &self.rules);
                Ok((a.indicators(), a.birth_year))
            }
            None => {
                let d = table.numeric(treatment_column)?.to_vec();
                let by = table
                    .interview_dates()
                    .iter()
                    .zip(table.ages())
                    .map(|(&d, &a)| crate::treatment::estimate_birth_year(d, a))
                    .collect();
                Ok((d, by))
            }
        }
    }
}

/// Rows excluded before estimation, by reason.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Exclusions {
    pub outside_cohort: usize,
    pub missing_treatment: usize,
    pub missing_values: usize,
}

impl Exclusions {
    pub fn total(&self) -> usize {
        self.outside_cohort + self.missing_treatment + self.missing_values
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DofInfo {
    pub n_regressors: usize,
    pub absorbed: usize,
    pub residual: usize,
    pub small_sample_factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitResult {
    pub spec_name: String,
    pub spec_fingerprint: String,
    pub coefficient_names: Vec<String>,
    /// Treatment coefficient first, then controls and month indicators.
    pub coefficients: Vec<f64>,
    pub delta: f64,
    pub se_delta: f64,
    pub betas: Vec<f64>,
    pub vcov: Vec<Vec<f64>>,
    /// Residuals of the estimation sample, aligned with `rows`.
    pub residuals: Vec<f64>,
    /// Input-table row index of each estimation-sample row, in canonical order.
    pub rows: Vec<usize>,
    pub n_input: usize,
    pub n_used: usize,
    pub n_singletons_dropped: usize,
    pub exclusions: Exclusions,
    pub n_clusters: usize,
    pub dof: DofInfo,
    pub fe_sweeps: usize,
}

impl FitResult {
    pub fn t_stat(&self) -> f64 {
        self.delta / self.se_delta
    }
}

fn factor_key(
    f: &Factor,
    i: usize,
    table: &ObservationTable,
    birth_year: &[i32],
    window: &SurveyWindow,
) -> Option<KeyPart> {
    Some(match f {
        Factor::District => KeyPart::Str(table.districts()[i].clone()),
        Factor::BirthYear => KeyPart::Int(birth_year[i] as i64),
        Factor::Age => KeyPart::Int(table.ages()[i] as i64),
        Factor::SurveyMonth => KeyPart::Int(window.month_index(table.interview_dates()[i])),
        Factor::Column(c) => KeyPart::Str(table.categorical(c).ok()?[i].clone()?),
    })
}

fn grouping_keys(
    g: &Grouping,
    rows: &[usize],
    table: &ObservationTable,
    birth_year: &[i32],
    window: &SurveyWindow,
) -> Vec<Vec<KeyPart>> {
    rows.iter()
        .map(|&i| {
            g.0.iter()
                .map(|f| factor_key(f, i, table, birth_year, window).expect("missing keys filtered"))
                .collect()
        })
        .collect()
}

/// Removes fixed-effect singletons from a table under the given groupings.
/// Rows with a missing categorical key share one cell.
pub fn drop_singletons(
    table: &ObservationTable,
    absorb: &[Grouping],
    window: &SurveyWindow,
) -> Result<(ObservationTable, usize)> {
    let by: Vec<i32> = table
        .interview_dates()
        .iter()
        .zip(table.ages())
        .map(|(&d, &a)| crate::treatment::estimate_birth_year(d, a))
        .collect();
    let groups: Vec<FeGroup> = absorb
        .iter()
        .map(|g| {
            let keys: Vec<Vec<Option<KeyPart>>> = (0..table.len())
                .map(|i| g.0.iter().map(|f| factor_key(f, i, table, &by, window)).collect())
                .collect();
            FeGroup::from_keys(&g.to_string(), &keys)
        })
        .collect();
    if groups.is_empty() {
        return Err(Error::Invalid("no fixed-effect groupings".into()));
    }
    let (kept, dropped) = fe::drop_singletons(&groups)?;
    Ok((table.select(&kept), dropped))
}

/// Runs one specification end to end.
pub fn estimate_spec(
    table: &ObservationTable,
    spec: &RegressionSpec,
    ctx: &EstimationContext<'_>,
) -> Result<FitResult> {
    spec.validate(table)?;
    let (treat, birth_year) = ctx.treatment(table, &spec.treatment)?;
    estimate_with_treatment(table, spec, ctx, &treat, &birth_year)
}

pub(crate) fn estimate_with_treatment(
    table: &ObservationTable,
    spec: &RegressionSpec,
    ctx: &EstimationContext<'_>,
    treat: &[Option<f64>],
    birth_year: &[i32],
) -> Result<FitResult> {
    let window = &ctx.window;
    let outcome = table.numeric(&spec.outcome)?;
    let numeric_controls: Vec<(&str, &[Option<f64>])> = spec
        .controls
        .iter()
        .filter_map(|c| table.numeric(c).ok().map(|v| (c.as_str(), v)))
        .collect();
    let categorical_controls: Vec<(&str, &[Option<String>])> = spec
        .controls
        .iter()
        .filter(|c| !table.has_numeric(c))
        .map(|c| Ok((c.as_str(), table.categorical(c)?)))
        .collect::<Result<_>>()?;
    let mut fe_factors: Vec<&Factor> = spec.absorb.iter().flat_map(|g| g.0.iter()).collect();
    fe_factors.push(&spec.cluster);

    // sample selection
    let mut excl = Exclusions::default();
    let mut keep = Vec::new();
    for i in 0..table.len() {
        let by = birth_year[i];
        let age = table.ages()[i];
        let in_cohort = spec.birth_years.is_none_or(|(lo, hi)| (lo..=hi).contains(&by))
            && spec.ages.is_none_or(|(lo, hi)| (lo..=hi).contains(&age));
        if !in_cohort {
            excl.outside_cohort += 1;
        } else if treat[i].is_none() {
            excl.missing_treatment += 1;
        } else if outcome[i].is_none()
            || numeric_controls.iter().any(|(_, c)| c[i].is_none())
            || categorical_controls.iter().any(|(_, c)| c[i].is_none())
            || fe_factors
                .iter()
                .any(|f| factor_key(f, i, table, birth_year, window).is_none())
        {
            excl.missing_values += 1;
        } else {
            keep.push(i);
        }
    }
    if keep.is_empty() {
        return Err(Error::Degenerate(format!(
            "spec `{}`: no rows left after sample restrictions",
            spec.name
        )));
    }
    if spec.month_dummies || spec.deflate {
        if let Some(&i) = keep.iter().find(|&&i| !window.contains(table.interview_dates()[i])) {
            return Err(Error::Invalid(format!(
                "interview date {} lies outside the survey window",
                table.interview_dates()[i]
            )));
        }
    }

    // canonical row order
    keep.sort_by(|&a, &b| {
        table.person_ids()[a]
            .cmp(&table.person_ids()[b])
            .then_with(|| table.districts()[a].cmp(&table.districts()[b]))
            .then_with(|| table.interview_dates()[a].cmp(&table.interview_dates()[b]))
            .then_with(|| table.ages()[a].cmp(&table.ages()[b]))
            .then_with(|| table.weights()[a].total_cmp(&table.weights()[b]))
            .then_with(|| outcome[a].unwrap().total_cmp(&outcome[b].unwrap()))
            .then_with(|| treat[a].unwrap().total_cmp(&treat[b].unwrap()))
    });

    // singletons
    let groups: Vec<FeGroup> = spec
        .absorb
        .iter()
        .map(|g| FeGroup::from_keys(&g.to_string(), &grouping_keys(g, &keep, table, birth_year, window)))
        .collect();
    let (survivors, n_singletons) = fe::drop_singletons(&groups)?;
    let rows: Vec<usize> = survivors.iter().map(|&s| keep[s]).collect();
    let groups: Vec<FeGroup> = groups.iter().map(|g| g.subset(&survivors)).collect();
    let n = rows.len();

    // weights and outcome
    let raw_w: Vec<f64> = rows.iter().map(|&i| table.weights()[i]).collect();
    let weights = trim_weights(&raw_w, &spec.weights)?;
    let mut y: Vec<f64> = rows.iter().map(|&i| outcome[i].unwrap()).collect();
    if spec.deflate {
        let cpi = ctx
            .cpi
            .ok_or_else(|| Error::Invalid("deflation requested but no CPI series supplied".into()))?;
        let dates: Vec<_> = rows.iter().map(|&i| table.interview_dates()[i]).collect();
        y = deflate(&y, &dates, cpi)?;
    }

    // design
    let mut design = Design::default();
    design.push(spec.treatment.clone(), rows.iter().map(|&i| treat[i].unwrap()).collect());
    for (name, col) in &numeric_controls {
        design.push(*name, rows.iter().map(|&i| col[i].unwrap()).collect());
    }
    for (name, col) in &categorical_controls {
        let levels: BTreeMap<&str, ()> = rows
            .iter()
            .map(|&i| (col[i].as_deref().unwrap(), ()))
            .collect();
        for level in levels.keys().skip(1) {
            design.push(
                format!("{name}={level}"),
                rows.iter()
                    .map(|&i| f64::from(u8::from(col[i].as_deref() == Some(level))))
                    .collect(),
            );
        }
    }
    if spec.month_dummies {
        let months: Vec<i64> = rows
            .iter()
            .map(|&i| window.month_index(table.interview_dates()[i]))
            .collect();
        for m in 1..window.n_months() as i64 {
            if months.contains(&m) {
                let label = crate::date::YearMonth::from_ordinal(window.first_month().ordinal() + m);
                design.push(
                    format!("month_{label}"),
                    months.iter().map(|&x| f64::from(u8::from(x == m))).collect(),
                );
            }
        }
    }

    // absorb
    let wnorm = |c: &[f64]| libm::sqrt(c.iter().zip(&weights).map(|(x, w)| w * x * x).sum::<f64>());
    let raw_norms: Vec<f64> = design.columns.iter().map(|c| wnorm(c)).collect();
    let mut all = design.columns.clone();
    all.push(y);
    let sweeps = absorb_fe(&mut all, &groups, &weights, &ctx.absorb)?;
    let y = all.pop().expect("outcome column");
    design.columns = all;
    let absorbed: Vec<String> = design
        .columns
        .iter()
        .zip(&raw_norms)
        .zip(&design.names)
        .filter(|((c, &raw), _)| raw == 0.0 || wnorm(c) <= FE_COLLINEARITY_TOLERANCE * raw)
        .map(|(_, name)| name.clone())
        .collect();
    if !absorbed.is_empty() {
        return Err(Error::RankDeficient { columns: absorbed });
    }

    let fit = wls_fit(&design, &y, &weights)?;
    let clusters: Vec<KeyPart> = rows
        .iter()
        .map(|&i| factor_key(&spec.cluster, i, table, birth_year, window).expect("filtered"))
        .collect();
    let k_fe = absorbed_dof(&groups);
    let vc = cluster_vcov(&design, &fit, &weights, &clusters, k_fe)?;

    let p = design.n_cols();
    Ok(FitResult {
        spec_name: spec.name.clone(),
        spec_fingerprint: spec.fingerprint().to_string(),
        delta: fit.coefficients[0],
        se_delta: vc.se(0),
        betas: fit.coefficients[1..].to_vec(),
        coefficients: fit.coefficients,
        coefficient_names: design.names,
        vcov: vc.rows(),
        residuals: fit.residuals,
        rows,
        n_input: table.len(),
        n_used: n,
        n_singletons_dropped: n_singletons,
        exclusions: excl,
        n_clusters: vc.n_clusters,
        dof: DofInfo {
            n_regressors: p,
            absorbed: k_fe,
            residual: n - p - k_fe,
            small_sample_factor: vc.small_sample_factor,
        },
        fe_sweeps: sweeps,
    })
}
