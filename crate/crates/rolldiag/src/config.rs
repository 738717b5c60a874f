//! TOML run configuration.
//!
//! ```toml
//! output = "out"
//! seed = 20240101
//! threads = 8                   # optional; all cores when absent
//!
//! [data]
//! observations = "wages.csv"    # paths are relative to this file
//! schedule = "schedule.csv"
//! concordance = "concordance.csv"
//! cpi = "cpi.csv"
//! [data.columns]
//! numeric = ["log_wage", "female"]
//!
//! [window]                      # default 2011-07-01 .. 2012-06-30
//! start = "2011-07-01"
//! end = "2012-06-30"
//!
//! [treatment]
//! sd_threshold = 0.1
//! threshold_offset = 1
//!
//! [[spec]]
//! name = "wage_unweighted"
//! outcome = "log_wage"
//! absorb = ["district*age"]
//! weights = { mode = "trimmed", trim_multiplier = 5.0 }
//! birth_years = [1985, 1990]
//!
//! [placebo]
//! replications = 1000
//! grid = { kind = "auto", points = 512 }
//!
//! [trends]
//! bandwidth_days = 30.0
//! variables = ["treated", "log_wage"]
//! cohorts = [{ name = "treated", birth_years = [1985, 1990] }]
//!
//! [simulate]
//! report = true
//! [simulate.dgp]
//! n_districts = 100
//! drift = 0.2
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use rolldiag_core::randomization::GridSpec;
use rolldiag_core::regression::{AbsorbOptions, RegressionSpec};
use rolldiag_core::survey_time::{Cohort, TrendVariable};
use rolldiag_core::synthetic::DgpConfig;
use rolldiag_core::{SurveyWindow, TreatmentRules, WeightMode};
use serde::Deserialize;

use crate::io::ColumnMapping;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub observations: PathBuf,
    pub schedule: Option<PathBuf>,
    pub concordance: Option<PathBuf>,
    pub cpi: Option<PathBuf>,
    #[serde(default)]
    pub columns: ColumnMapping,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlaceboConfig {
    pub replications: usize,
    pub grid: GridSpec,
}

impl Default for PlaceboConfig {
    fn default() -> Self {
        PlaceboConfig {
            replications: 1000,
            grid: GridSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrendsConfig {
    pub bandwidth_days: f64,
    pub cohorts: Vec<Cohort>,
    pub variables: Vec<String>,
}

impl Default for TrendsConfig {
    fn default() -> Self {
        TrendsConfig {
            bandwidth_days: 30.0,
            cohorts: vec![
                Cohort::new("born_1985_1990", 1985, 1990),
                Cohort::new("born_1975_1980", 1975, 1980),
            ],
            variables: vec!["treated".into(), "log_wage".into(), "log_pce".into()],
        }
    }
}

impl TrendsConfig {
    pub fn trend_variables(&self) -> anyhow::Result<Vec<TrendVariable>> {
        self.variables
            .iter()
            .map(|v| v.parse().map_err(anyhow::Error::from))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub dgp: DgpConfig,
    /// Chain fits, a placebo run and trends into a mechanism report.
    pub report: bool,
    pub report_replications: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            dgp: DgpConfig::default(),
            report: false,
            report_replications: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub window: SurveyWindow,
    #[serde(default)]
    pub treatment: TreatmentRules,
    #[serde(default)]
    pub absorb: AbsorbOptions,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub threads: Option<usize>,
    #[serde(default, rename = "spec")]
    pub specs: Vec<RegressionSpec>,
    #[serde(default)]
    pub placebo: PlaceboConfig,
    #[serde(default)]
    pub trends: TrendsConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Which subcommand a configuration is validated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Fit,
    Placebo,
    Trends,
    Simulate,
    Concord,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a config and resolves its relative paths against its directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg =
            Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(d) = &mut self.data {
            fix(&mut d.observations);
            d.schedule.iter_mut().for_each(fix);
            d.concordance.iter_mut().for_each(fix);
            d.cpi.iter_mut().for_each(fix);
        }
        fix(&mut self.output);
    }

    fn data(&self) -> anyhow::Result<&DataConfig> {
        self.data.as_ref().context("config has no [data] section")
    }

    /// Checks everything that can be checked before loading data.
    pub fn validate(&self, command: Command) -> anyhow::Result<()> {
        ensure!(
            self.treatment.sd_threshold >= 0.0,
            "treatment.sd_threshold must be non-negative"
        );
        ensure!(self.threads != Some(0), "threads must be positive");
        ensure!(
            self.absorb.tolerance > 0.0 && self.absorb.max_sweeps > 0,
            "absorb tolerance and max_sweeps must be positive"
        );
        match command {
            Command::Fit | Command::Placebo => {
                let data = self.data()?;
                check_file(&data.observations)?;
                self.validate_specs()?;
                if command == Command::Placebo {
                    ensure!(
                        self.placebo.replications >= 1,
                        "placebo.replications must be at least 1"
                    );
                    check_file(data.schedule.as_ref().context("placebo runs need data.schedule")?)?;
                    if let GridSpec::Range { lo, hi, points } = self.placebo.grid {
                        ensure!(hi > lo && points >= 2, "placebo.grid range is empty");
                    }
                }
                for p in [&data.schedule, &data.concordance, &data.cpi].into_iter().flatten() {
                    check_file(p)?;
                }
            }
            Command::Trends => {
                let data = self.data()?;
                check_file(&data.observations)?;
                for p in [&data.schedule, &data.concordance].into_iter().flatten() {
                    check_file(p)?;
                }
                let t = &self.trends;
                ensure!(t.bandwidth_days > 0.0, "trends.bandwidth_days must be positive");
                ensure!(!t.cohorts.is_empty(), "trends.cohorts is empty");
                ensure!(!t.variables.is_empty(), "trends.variables is empty");
                let vars = t.trend_variables()?;
                if vars.contains(&TrendVariable::Treated) && data.schedule.is_none() {
                    let listed = data.columns.numeric.iter().any(|c| c == "treated");
                    ensure!(listed, "trending `treated` needs data.schedule or a numeric `treated` column");
                }
                let mut names = BTreeSet::new();
                for c in &t.cohorts {
                    check_name(&c.name)?;
                    ensure!(names.insert(&c.name), "duplicate cohort name `{}`", c.name);
                }
            }
            Command::Simulate => {
                self.simulate.dgp.validate()?;
                if self.simulate.report {
                    ensure!(
                        self.simulate.report_replications >= 1,
                        "simulate.report_replications must be at least 1"
                    );
                }
            }
            Command::Concord => {
                let data = self.data()?;
                check_file(data.schedule.as_ref().context("concord needs data.schedule")?)?;
                check_file(data.concordance.as_ref().context("concord needs data.concordance")?)?;
            }
        }
        Ok(())
    }

    fn validate_specs(&self) -> anyhow::Result<()> {
        ensure!(!self.specs.is_empty(), "no [[spec]] entries");
        let data = self.data()?;
        let mut names = BTreeSet::new();
        for s in &self.specs {
            check_name(&s.name)?;
            ensure!(names.insert(&s.name), "duplicate spec name `{}`", s.name);
            ensure!(!s.absorb.is_empty(), "spec `{}`: absorb is empty", s.name);
            s.weights.validate().with_context(|| format!("spec `{}`", s.name))?;
            if s.deflate {
                ensure!(data.cpi.is_some(), "spec `{}` deflates but data.cpi is not set", s.name);
            }
            if data.schedule.is_none() {
                ensure!(
                    data.columns.numeric.contains(&s.treatment),
                    "spec `{}`: without data.schedule the treatment `{}` must be a numeric column",
                    s.name,
                    s.treatment
                );
            }
            if let Some((lo, hi)) = s.birth_years {
                ensure!(lo <= hi, "spec `{}`: empty birth-year range", s.name);
            }
            if let Some((lo, hi)) = s.ages {
                ensure!(lo <= hi, "spec `{}`: empty age range", s.name);
            }
            if s.weights.mode == WeightMode::Trimmed {
                ensure!(
                    s.weights.trim_multiplier > 0.0,
                    "spec `{}`: trim multiplier must be positive",
                    s.name
                );
            }
        }
        Ok(())
    }
}

fn check_file(p: &Path) -> anyhow::Result<()> {
    if !p.is_file() {
        bail!("referenced file {} does not exist", p.display());
    }
    Ok(())
}

/// Names become file-name stems.
fn check_name(name: &str) -> anyhow::Result<()> {
    ensure!(
        !name.is_empty()
            && name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-'),
        "name `{name}` must be non-empty and use only letters, digits, `_` and `-`"
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn module_example_parses() {
        let doc: String = include_str!("config.rs")
            .lines()
            .skip_while(|l| !l.starts_with("//! ```toml"))
            .skip(1)
            .take_while(|l| !l.starts_with("//! ```"))
            .map(|l| l.trim_start_matches("//!").trim_start_matches(' '))
            .collect::<Vec<_>>()
            .join("\n");
        let cfg = RunConfig::from_toml(&doc).unwrap();
        assert_eq!(cfg.specs.len(), 1);
        assert_eq!(cfg.specs[0].absorb[0].to_string(), "district*age");
        assert_eq!(cfg.specs[0].birth_years, Some((1985, 1990)));
        assert_eq!(cfg.placebo.replications, 1000);
        assert!(cfg.simulate.report);
        assert_eq!(cfg.simulate.dgp.n_districts, 100);
        assert_eq!(cfg.threads, Some(8));
    }

    #[test]
    fn empty_spec_list_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let obs = dir.path().join("obs.csv");
        std::fs::write(&obs, "x\n").unwrap();
        let mut cfg = RunConfig::from_toml("[data]\nobservations = \"obs.csv\"\n").unwrap();
        cfg.resolve_paths(dir.path());
        let err = cfg.validate(Command::Fit).unwrap_err();
        assert!(err.to_string().contains("no [[spec]]"));
    }

    #[test]
    fn unknown_keys_and_bad_values() {
        assert!(RunConfig::from_toml("colour = 1").is_err());
        let cfg = RunConfig::from_toml("[simulate.dgp]\nn_districts = 0\n").unwrap();
        assert!(cfg.validate(Command::Simulate).is_err());
        assert!(RunConfig::from_toml("[window]\nstart = \"2012-01-01\"\nend = \"2011-01-01\"\n").is_err());
        let cfg = RunConfig::from_toml("[data]\nobservations = \"/nonexistent/obs.csv\"\n").unwrap();
        assert!(cfg.validate(Command::Trends).is_err());
    }
}
