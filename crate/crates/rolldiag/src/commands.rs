//! Subcommand implementations. Each returns the paths it wrote.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rolldiag_core::randomization::{export_density, GridSpec};
use rolldiag_core::regression::{DofInfo, EstimationContext, Exclusions};
use rolldiag_core::survey_time::{cohort_compare, Cohort, CohortComparison, TrendVariable};
use rolldiag_core::synthetic::{generate, DgpConfig, PCE, WAGE};
use rolldiag_core::treatment::Resolution;
use rolldiag_core::{
    estimate_spec, resolve_rollout_year, two_tailed_p, Concordance, CpiSeries, FitResult,
    ObservationTable, PlaceboDistribution, RegressionSpec, RolloutSchedule,
};
use serde::Serialize;
use serde_json::json;

use crate::config::{Command, RunConfig};
use crate::io::{self, LoadReport};
use crate::placebo::run_placebo_parallel;

/// One-sided 1% critical value of the standard normal.
pub const Z_ONE_SIDED_01: f64 = 2.326_347_874_040_841;

pub struct Inputs {
    pub table: ObservationTable,
    pub load_report: LoadReport,
    pub schedule: Option<RolloutSchedule>,
    pub concordance: Option<Concordance>,
    pub cpi: Option<CpiSeries>,
}

impl Inputs {
    pub fn load(cfg: &RunConfig) -> anyhow::Result<Self> {
        let data = cfg.data.as_ref().context("config has no [data] section")?;
        let (table, load_report) = io::load_observations(&data.observations, &data.columns)?;
        log::info!(
            "loaded {} of {} rows from {}",
            load_report.rows_loaded,
            load_report.rows_read,
            data.observations.display()
        );
        Ok(Inputs {
            table,
            load_report,
            schedule: data.schedule.as_deref().map(io::load_schedule).transpose()?,
            concordance: data.concordance.as_deref().map(io::load_concordance).transpose()?,
            cpi: data
                .cpi
                .as_deref()
                .map(|p| io::load_cpi(p, &cfg.window))
                .transpose()?,
        })
    }

    pub fn context<'a>(&'a self, cfg: &RunConfig) -> EstimationContext<'a> {
        let mut ctx = EstimationContext::without_schedule()
            .with_rules(cfg.treatment)
            .with_window(cfg.window);
        ctx.absorb = cfg.absorb;
        ctx.schedule = self.schedule.as_ref();
        ctx.concordance = self.concordance.as_ref();
        ctx.cpi = self.cpi.as_ref();
        ctx
    }
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_text(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    written.push(path);
    Ok(())
}

fn write_json<T: Serialize>(path: PathBuf, value: &T, written: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text, written)
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
}

/// Machine-readable record of one fitted specification.
#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub spec: RegressionSpec,
    pub spec_fingerprint: String,
    pub delta: f64,
    pub se_delta: f64,
    pub t_stat: f64,
    pub coefficients: Vec<Coefficient>,
    pub vcov: Vec<Vec<f64>>,
    pub n_input: usize,
    pub n_used: usize,
    pub n_singletons_dropped: usize,
    pub exclusions: Exclusions,
    pub n_clusters: usize,
    pub dof: DofInfo,
    pub fe_sweeps: usize,
}

impl FitSummary {
    pub fn new(spec: &RegressionSpec, fit: &FitResult) -> Self {
        FitSummary {
            spec: spec.clone(),
            spec_fingerprint: fit.spec_fingerprint.clone(),
            delta: fit.delta,
            se_delta: fit.se_delta,
            t_stat: fit.t_stat(),
            coefficients: fit
                .coefficient_names
                .iter()
                .zip(&fit.coefficients)
                .enumerate()
                .map(|(i, (n, b))| Coefficient {
                    name: n.clone(),
                    estimate: *b,
                    se: fit.vcov[i][i].sqrt(),
                })
                .collect(),
            vcov: fit.vcov.clone(),
            n_input: fit.n_input,
            n_used: fit.n_used,
            n_singletons_dropped: fit.n_singletons_dropped,
            exclusions: fit.exclusions,
            n_clusters: fit.n_clusters,
            dof: fit.dof,
            fe_sweeps: fit.fe_sweeps,
        }
    }
}

fn weights_label(spec: &RegressionSpec) -> String {
    match spec.weights.mode {
        rolldiag_core::WeightMode::None => "none".into(),
        rolldiag_core::WeightMode::Raw => "raw".into(),
        rolldiag_core::WeightMode::Trimmed => format!("trimmed({})", spec.weights.trim_multiplier),
    }
}

/// Fixed-width table with one column per specification.
pub fn text_table(fits: &[FitSummary]) -> String {
    let mut rows: Vec<(String, Vec<String>)> = vec![
        ("".into(), fits.iter().map(|f| f.spec.name.clone()).collect()),
        ("outcome".into(), fits.iter().map(|f| f.spec.outcome.clone()).collect()),
        (
            f_name(fits),
            fits.iter().map(|f| format!("{:.3}", f.delta)).collect(),
        ),
        ("".into(), fits.iter().map(|f| format!("({:.3})", f.se_delta)).collect()),
        ("observations".into(), fits.iter().map(|f| f.n_used.to_string()).collect()),
        (
            "singletons dropped".into(),
            fits.iter().map(|f| f.n_singletons_dropped.to_string()).collect(),
        ),
        ("clusters".into(), fits.iter().map(|f| f.n_clusters.to_string()).collect()),
        (
            "fixed effects".into(),
            fits.iter()
                .map(|f| {
                    f.spec
                        .absorb
                        .iter()
                        .map(|g| g.to_string())
                        .collect::<Vec<_>>()
                        .join(" + ")
                })
                .collect(),
        ),
        ("weights".into(), fits.iter().map(|f| weights_label(&f.spec)).collect()),
        (
            "month dummies".into(),
            fits.iter().map(|f| yes_no(f.spec.month_dummies)).collect(),
        ),
        ("deflated".into(), fits.iter().map(|f| yes_no(f.spec.deflate)).collect()),
    ];
    let label_w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let col_w: Vec<usize> = (0..fits.len())
        .map(|j| rows.iter().map(|r| r.1[j].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (label, cells) in rows.drain(..) {
        let _ = write!(out, "{label:<label_w$}");
        for (c, w) in cells.iter().zip(&col_w) {
            let _ = write!(out, "  {c:>w$}");
        }
        out.push('\n');
    }
    out.push_str("Standard errors in parentheses, clustered as specified.\n");
    out
}

fn f_name(fits: &[FitSummary]) -> String {
    let mut names: Vec<&str> = fits.iter().map(|f| f.spec.treatment.as_str()).collect();
    names.dedup();
    names.join("/")
}

fn yes_no(b: bool) -> String {
    if b { "yes" } else { "no" }.into()
}

pub fn cmd_fit(cfg: &RunConfig) -> anyhow::Result<Vec<PathBuf>> {
    cfg.validate(Command::Fit)?;
    let inputs = Inputs::load(cfg)?;
    for s in &cfg.specs {
        s.validate(&inputs.table).with_context(|| format!("spec `{}`", s.name))?;
    }
    let ctx = inputs.context(cfg);
    let mut fits = Vec::new();
    for s in &cfg.specs {
        let fit = estimate_spec(&inputs.table, s, &ctx).with_context(|| format!("spec `{}`", s.name))?;
        log::info!("{}: delta {:.4} (se {:.4}), n {}", s.name, fit.delta, fit.se_delta, fit.n_used);
        fits.push(FitSummary::new(s, &fit));
    }
    ensure_dir(&cfg.output)?;
    let mut written = Vec::new();
    write_json(
        cfg.output.join("fit_results.json"),
        &json!({ "load": inputs.load_report, "results": fits }),
        &mut written,
    )?;
    write_text(cfg.output.join("fit_results.txt"), &text_table(&fits), &mut written)?;
    Ok(written)
}

#[derive(Debug, Clone, Serialize)]
pub struct PlaceboSummary {
    pub spec: String,
    pub spec_fingerprint: String,
    pub master_seed: u64,
    pub replications: usize,
    pub failures: usize,
    pub observed: f64,
    pub observed_se: f64,
    pub design_effect: f64,
    pub estimate_sd: f64,
    pub design_effect_mc_se: f64,
    pub p_two_tailed: f64,
    pub estimates: Vec<f64>,
    pub replication_ids: Vec<u64>,
}

pub fn placebo_summary(fit: &FitResult, dist: &PlaceboDistribution, spec: &RegressionSpec) -> PlaceboSummary {
    PlaceboSummary {
        spec: spec.name.clone(),
        spec_fingerprint: dist.spec_fingerprint.clone(),
        master_seed: dist.master_seed,
        replications: dist.replications,
        failures: dist.failures,
        observed: fit.delta,
        observed_se: fit.se_delta,
        design_effect: dist.design_effect,
        estimate_sd: dist.sd(),
        design_effect_mc_se: dist.mc_se(),
        p_two_tailed: two_tailed_p(dist, fit.delta),
        estimates: dist.estimates.clone(),
        replication_ids: dist.replication_ids.clone(),
    }
}

fn density_csv(dist: &PlaceboDistribution, grid: &GridSpec, observed: f64) -> anyhow::Result<String> {
    let curve = export_density(dist, grid, Some(observed))?;
    csv_text(
        &["estimate", "density", "design_effect", "observed"],
        curve.grid.iter().zip(&curve.density).enumerate().map(|(i, (g, d))| {
            // markers repeat on the first row only
            let (de, ob) = if i == 0 {
                (curve.design_effect.to_string(), observed.to_string())
            } else {
                (String::new(), String::new())
            };
            vec![g.to_string(), d.to_string(), de, ob]
        }),
    )
}

const PLACEBO_SCHEMA: &str = r#"{
  "placebo_<spec>.json": {
    "spec": "specification name",
    "spec_fingerprint": "hash of the specification",
    "master_seed": "seed of the replication streams",
    "replications": "number of scrambled schedules K",
    "failures": "replications that failed (excluded from the mean)",
    "observed": "treatment coefficient under the actual schedule",
    "observed_se": "its clustered standard error",
    "design_effect": "mean of the placebo estimates",
    "estimate_sd": "standard deviation of the placebo estimates",
    "design_effect_mc_se": "Monte Carlo standard error of the design effect",
    "p_two_tailed": "(1 + #{|d_k - DE| >= |observed - DE|}) / (K_ok + 1)",
    "estimates": "placebo estimates in replication order",
    "replication_ids": "stream index k of each estimate"
  },
  "placebo_<spec>_density.csv": {
    "estimate": "grid point",
    "density": "Gaussian kernel density of the placebo estimates (Silverman bandwidth)",
    "design_effect": "marker, first row only",
    "observed": "marker, first row only"
  }
}
"#;

pub fn cmd_placebo(cfg: &RunConfig) -> anyhow::Result<Vec<PathBuf>> {
    cfg.validate(Command::Placebo)?;
    let inputs = Inputs::load(cfg)?;
    for s in &cfg.specs {
        s.validate(&inputs.table).with_context(|| format!("spec `{}`", s.name))?;
    }
    let ctx = inputs.context(cfg);
    ensure_dir(&cfg.output)?;
    let mut written = Vec::new();
    for s in &cfg.specs {
        let fit = estimate_spec(&inputs.table, s, &ctx).with_context(|| format!("spec `{}`", s.name))?;
        let dist = run_placebo_parallel(
            &inputs.table,
            s,
            &ctx,
            cfg.placebo.replications,
            cfg.seed,
            cfg.threads,
        )
        .with_context(|| format!("placebo run for spec `{}`", s.name))?;
        let summary = placebo_summary(&fit, &dist, s);
        log::info!(
            "{}: design effect {:.4}, observed {:.4}, p {:.4}",
            s.name,
            summary.design_effect,
            summary.observed,
            summary.p_two_tailed
        );
        write_json(cfg.output.join(format!("placebo_{}.json", s.name)), &summary, &mut written)?;
        write_text(
            cfg.output.join(format!("placebo_{}_density.csv", s.name)),
            &density_csv(&dist, &cfg.placebo.grid, fit.delta)?,
            &mut written,
        )?;
    }
    write_text(cfg.output.join("placebo_schema.json"), PLACEBO_SCHEMA, &mut written)?;
    Ok(written)
}

const TRENDS_SCHEMA: &str = r#"{
  "trend_<cohort>_<variable>.csv": {
    "date": "grid day (YYYY-MM-DD), daily over the survey window",
    "smoothed": "Epanechnikov moving average, empty where no observation is in reach",
    "n_effective": "Kish effective sample size of the kernel weights"
  },
  "trend_<cohort>_<variable>_fit.csv": {
    "slope_per_window": "least-squares change over the window span",
    "slope_se": "classical standard error of the slope",
    "intercept": "fitted value on the first window day",
    "n": "observations",
    "window_days": "window span in days"
  },
  "trend_slope_deltas.csv": {
    "variable": "trended variable",
    "cohort": "compared cohort",
    "reference": "first configured cohort",
    "delta": "slope of cohort minus slope of reference"
  }
}
"#;

fn write_comparison(out: &Path, cmp: &CohortComparison, written: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    for c in &cmp.curves {
        let rows = c
            .curve
            .grid
            .iter()
            .zip(&c.curve.values)
            .zip(&c.curve.n_effective)
            .map(|((d, v), n)| {
                vec![
                    d.to_string(),
                    v.map(|x| x.to_string()).unwrap_or_default(),
                    n.to_string(),
                ]
            });
        write_text(
            out.join(format!("trend_{}_{}.csv", c.cohort, c.variable)),
            &csv_text(&["date", "smoothed", "n_effective"], rows)?,
            written,
        )?;
        let t = &c.trend;
        write_text(
            out.join(format!("trend_{}_{}_fit.csv", c.cohort, c.variable)),
            &csv_text(
                &["slope_per_window", "slope_se", "intercept", "n", "window_days"],
                [vec![
                    t.slope_per_window.to_string(),
                    t.slope_se.to_string(),
                    t.intercept.to_string(),
                    t.n.to_string(),
                    t.window_days.to_string(),
                ]],
            )?,
            written,
        )?;
    }
    write_text(
        out.join("trend_slope_deltas.csv"),
        &csv_text(
            &["variable", "cohort", "reference", "delta"],
            cmp.slope_deltas.iter().map(|d| {
                vec![
                    d.variable.clone(),
                    d.cohort.clone(),
                    d.reference.clone(),
                    d.delta.to_string(),
                ]
            }),
        )?,
        written,
    )?;
    write_text(out.join("trends_schema.json"), TRENDS_SCHEMA, written)
}

pub fn cmd_trends(cfg: &RunConfig) -> anyhow::Result<Vec<PathBuf>> {
    cfg.validate(Command::Trends)?;
    let inputs = Inputs::load(cfg)?;
    let ctx = inputs.context(cfg);
    let vars = cfg.trends.trend_variables()?;
    let cmp = cohort_compare(&inputs.table, &cfg.trends.cohorts, &vars, &ctx, cfg.trends.bandwidth_days)?;
    ensure_dir(&cfg.output)?;
    let mut written = Vec::new();
    write_comparison(&cfg.output, &cmp, &mut written)?;
    Ok(written)
}

#[derive(Debug, Clone, Serialize)]
pub struct FitLine {
    pub spec: String,
    pub delta: Option<f64>,
    pub se: Option<f64>,
    pub error: Option<String>,
}

fn fit_line(table: &ObservationTable, spec: &RegressionSpec, ctx: &EstimationContext<'_>) -> (FitLine, Option<FitResult>) {
    match estimate_spec(table, spec, ctx) {
        Ok(f) => (
            FitLine {
                spec: spec.name.clone(),
                delta: Some(f.delta),
                se: Some(f.se_delta),
                error: None,
            },
            Some(f),
        ),
        Err(e) => (
            FitLine {
                spec: spec.name.clone(),
                delta: None,
                se: None,
                error: Some(e.to_string()),
            },
            None,
        ),
    }
}

/// End-to-end run of the estimators on synthetic data.
#[derive(Debug, Clone, Serialize)]
pub struct MechanismReport {
    pub dgp: DgpConfig,
    pub fits: Vec<FitLine>,
    pub placebo_replications: usize,
    pub placebo_seed: u64,
    pub design_effect: f64,
    pub design_effect_mc_se: f64,
    /// Design effect over its Monte Carlo standard error.
    pub design_effect_z: f64,
    pub p_two_tailed: f64,
    /// One-sided Monte Carlo test of a positive design effect at the 1% level.
    pub positive_design_effect: bool,
    /// Month indicators bring the treatment coefficient within two standard errors of zero.
    pub month_dummy_nullification: bool,
    pub wage_slopes: Vec<(String, f64, f64)>,
}

pub fn mechanism_report(
    dgp: &DgpConfig,
    table: &ObservationTable,
    ctx: &EstimationContext<'_>,
    replications: usize,
    seed: u64,
    threads: Option<usize>,
) -> anyhow::Result<(MechanismReport, Option<CohortComparison>)> {
    let (lo, hi) = dgp.ages;
    let eq3 = RegressionSpec::district_by_age("district_by_age", WAGE).with_ages(lo, hi);
    let specs = [
        RegressionSpec::two_way("two_way", WAGE).with_ages(lo, hi),
        eq3.clone(),
        RegressionSpec::district_by_birth_year("district_by_birth_year", WAGE).with_ages(lo, hi),
        eq3.clone().with_month_dummies(true),
    ];
    let mut fits = Vec::new();
    let mut results = Vec::new();
    for (i, s) in specs.iter().enumerate() {
        let mut s = s.clone();
        if i == 3 {
            s.name = "district_by_age_months".into();
        }
        let (line, fit) = fit_line(table, &s, ctx);
        fits.push(line);
        results.push(fit);
    }
    let observed = results[1].as_ref().context("district-by-age fit failed")?;
    let dist = run_placebo_parallel(table, &eq3, ctx, replications, seed, threads)?;
    let z = dist.design_effect / dist.mc_se();
    let month = results[3].as_ref().context("month-dummy fit failed")?;

    let mut comparison = None;
    let mut wage_slopes = Vec::new();
    if dgp.control_per_district > 0 {
        // estimated birth years reachable from each age range
        let (first, last) = (ctx.window.start.year(), ctx.window.end.year());
        let cohorts = [
            Cohort::new("treated_cohort", first - hi as i32, last - lo as i32),
            Cohort::new(
                "control_cohort",
                first - dgp.control_ages.1 as i32,
                last - dgp.control_ages.0 as i32,
            ),
        ];
        if cohorts[0].birth_years.0 > cohorts[1].birth_years.1 {
            let cmp = cohort_compare(
                table,
                &cohorts,
                &[TrendVariable::Treated, TrendVariable::Column(WAGE.into()), TrendVariable::Column(PCE.into())],
                ctx,
                30.0,
            )?;
            for c in cmp.curves.iter().filter(|c| c.variable == WAGE) {
                wage_slopes.push((c.cohort.clone(), c.trend.slope_per_window, c.trend.slope_se));
            }
            comparison = Some(cmp);
        }
    }
    Ok((
        MechanismReport {
            dgp: dgp.clone(),
            fits,
            placebo_replications: replications,
            placebo_seed: seed,
            design_effect: dist.design_effect,
            design_effect_mc_se: dist.mc_se(),
            design_effect_z: z,
            p_two_tailed: two_tailed_p(&dist, observed.delta),
            positive_design_effect: z > Z_ONE_SIDED_01,
            month_dummy_nullification: month.delta.abs() < 2.0 * month.se_delta,
            wage_slopes,
        },
        comparison,
    ))
}

fn report_text(r: &MechanismReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "Synthetic data: {} districts x {} respondents, true effect {}, drift {} per year",
        r.dgp.n_districts, r.dgp.n_per_district, r.dgp.true_effect, r.dgp.drift
    );
    s.push('\n');
    for f in &r.fits {
        match (f.delta, f.se, &f.error) {
            (Some(d), Some(se), _) => {
                let _ = writeln!(s, "{:<26} {d:>8.4} ({se:.4})", f.spec);
            }
            (_, _, Some(e)) => {
                let _ = writeln!(s, "{:<26} not estimable: {e}", f.spec);
            }
            _ => {}
        }
    }
    let _ = writeln!(
        s,
        "\nPlacebo design effect ({} replications, seed {}): {:.4} (MC se {:.5}, z {:.1})",
        r.placebo_replications, r.placebo_seed, r.design_effect, r.design_effect_mc_se, r.design_effect_z
    );
    let _ = writeln!(s, "Two-tailed randomization p of the observed estimate: {:.4}", r.p_two_tailed);
    let _ = writeln!(s, "Positive design effect (one-sided 1%): {}", yes_no(r.positive_design_effect));
    let _ = writeln!(s, "Month dummies nullify the estimate: {}", yes_no(r.month_dummy_nullification));
    for (c, slope, se) in &r.wage_slopes {
        let _ = writeln!(s, "Wage slope over the window, {c}: {slope:.4} (se {se:.4})");
    }
    s
}

pub fn cmd_simulate(cfg: &RunConfig) -> anyhow::Result<Vec<PathBuf>> {
    cfg.validate(Command::Simulate)?;
    let mut dgp = cfg.simulate.dgp.clone();
    dgp.seed = cfg.seed;
    let data = generate(&dgp)?;
    let out = &cfg.output;
    ensure_dir(out)?;
    let mut written = Vec::new();
    let p = out.join("observations.csv");
    io::write_observations(&p, &data.table)?;
    written.push(p);
    let p = out.join("schedule.csv");
    io::write_schedule(&p, &data.schedule)?;
    written.push(p);
    let p = out.join("concordance.csv");
    io::write_concordance(&p, &data.concordance)?;
    written.push(p);
    let p = out.join("cpi.csv");
    io::write_cpi(&p, &data.cpi)?;
    written.push(p);
    write_json(out.join("simulate_config.json"), &dgp, &mut written)?;
    if cfg.simulate.report {
        let ctx = EstimationContext::new(&data.schedule)
            .with_concordance(&data.concordance)
            .with_cpi(&data.cpi)
            .with_window(dgp.window)
            .with_rules(dgp.rules);
        let (report, comparison) = mechanism_report(
            &dgp,
            &data.table,
            &ctx,
            cfg.simulate.report_replications,
            cfg.seed,
            cfg.threads,
        )?;
        write_json(out.join("mechanism_report.json"), &report, &mut written)?;
        write_text(out.join("mechanism_report.txt"), &report_text(&report), &mut written)?;
        if let Some(cmp) = comparison {
            write_comparison(out, &cmp, &mut written)?;
        }
    }
    Ok(written)
}

pub fn cmd_concord(cfg: &RunConfig) -> anyhow::Result<Vec<PathBuf>> {
    cfg.validate(Command::Concord)?;
    let data = cfg.data.as_ref().context("config has no [data] section")?;
    let sched = io::load_schedule(data.schedule.as_deref().context("data.schedule")?)?;
    let conc = io::load_concordance(data.concordance.as_deref().context("data.concordance")?)?;
    let mut rows = Vec::new();
    let (mut resolved, mut missing) = (0usize, 0usize);
    for child in conc.children() {
        match resolve_rollout_year(child, &conc, &sched, &cfg.treatment) {
            Resolution::Resolved { year, sd } => {
                resolved += 1;
                rows.push(vec![child.to_string(), "resolved".into(), year.0.to_string(), sd.to_string(), String::new()]);
            }
            Resolution::Missing(reason) => {
                missing += 1;
                log::info!("district {child} coded missing: {reason}");
                let sd = match reason {
                    rolldiag_core::treatment::MissingReason::MixedParentage { sd } => sd.to_string(),
                    _ => String::new(),
                };
                rows.push(vec![child.to_string(), "missing".into(), String::new(), sd, reason.to_string()]);
            }
        }
    }
    ensure_dir(&cfg.output)?;
    let mut written = Vec::new();
    write_text(
        cfg.output.join("concordance_resolution.csv"),
        &csv_text(&["followup_district", "status", "fiscal_year_start", "parent_sd", "reason"], rows)?,
        &mut written,
    )?;
    println!("{resolved} districts resolved, {missing} coded missing");
    Ok(written)
}
