use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rolldiag::commands::{cmd_concord, cmd_fit, cmd_placebo, cmd_simulate, cmd_trends};
use rolldiag::config::RunConfig;
use rolldiag::io::{load_observations, write_observations, ColumnMapping};
use rolldiag_core::synthetic::{generate, DgpConfig};

const FIXTURE: &str = "\
person_id,district,interview_date,age,weight,y
1,A,2011-08-01,25,1,5.0
2,A,2012-02-01,26,2,5.3
3,A,2011-09-15,27,1,4.8
4,A,2012-03-01,28,1,4.7
5,B,2011-07-20,24,3,5.2
6,B,2012-05-10,24,1,5.6
7,B,2011-11-11,22,2,5.5
8,C,2011-10-01,21,1,5.4
9,C,2012-04-01,25,1,5.1
10,C,2011-12-01,23,2,5.0
";

const SCHEDULE: &str = "original_district,fiscal_year_start\nA,1985\nB,1987\nC,1989\n";

fn fixture_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("obs.csv"), FIXTURE).unwrap();
    fs::write(dir.path().join("schedule.csv"), SCHEDULE).unwrap();
    fs::write(
        dir.path().join("run.toml"),
        r#"
output = "out"
[data]
observations = "obs.csv"
schedule = "schedule.csv"
[data.columns]
numeric = ["y"]
[[spec]]
name = "fixture"
outcome = "y"
absorb = ["district"]
weights = { mode = "raw" }
"#,
    )
    .unwrap();
    dir
}

fn load(dir: &Path) -> RunConfig {
    RunConfig::load(&dir.join("run.toml")).unwrap()
}

#[test]
fn fixture_fit_matches_hand_computation() {
    let dir = fixture_dir();
    let cfg = load(dir.path());
    let written = cmd_fit(&cfg).unwrap();
    assert_eq!(written.len(), 2);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/fit_results.json")).unwrap()).unwrap();
    let r = &json["results"][0];
    // within-district weighted regression and cluster sandwich worked by hand:
    // treated = A{1,2}, B{6,7}, C{8}; c = 3/2 * 9/6
    assert!((r["delta"].as_f64().unwrap() - 0.381159420289855).abs() < 1e-12);
    assert!((r["se_delta"].as_f64().unwrap() - 0.04780404013762497).abs() < 1e-12);
    assert_eq!(r["n_used"], 10);
    assert_eq!(r["n_clusters"], 3);
    assert_eq!(r["dof"]["absorbed"], 3);

    let first = fs::read(dir.path().join("out/fit_results.json")).unwrap();
    let table = fs::read_to_string(dir.path().join("out/fit_results.txt")).unwrap();
    assert!(table.contains("0.381"));
    cmd_fit(&cfg).unwrap();
    assert_eq!(first, fs::read(dir.path().join("out/fit_results.json")).unwrap());
}

#[test]
fn empty_spec_list_fails_validation() {
    let dir = fixture_dir();
    let text = fs::read_to_string(dir.path().join("run.toml")).unwrap();
    let cut = text.find("[[spec]]").unwrap();
    fs::write(dir.path().join("run.toml"), &text[..cut]).unwrap();
    let err = cmd_fit(&load(dir.path())).unwrap_err();
    assert!(err.to_string().contains("spec"));
}

#[test]
fn simulated_files_reload_losslessly() {
    let data = generate(&DgpConfig {
        n_districts: 15,
        n_per_district: 20,
        wage_missing: 0.2,
        seed: 4,
        ..DgpConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("obs.csv");
    write_observations(&p, &data.table).unwrap();
    let (back, report) = load_observations(&p, &ColumnMapping::for_table(&data.table)).unwrap();
    assert!(report.excluded.is_empty());
    assert_eq!(back.len(), data.table.len());
    assert_eq!(back.person_ids(), data.table.person_ids());
    assert_eq!(back.interview_dates(), data.table.interview_dates());
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(back.weights()), bits(data.table.weights()));
    for name in data.table.numeric_names() {
        let a: Vec<Option<u64>> = data.table.numeric(name).unwrap().iter().map(|v| v.map(f64::to_bits)).collect();
        let b: Vec<Option<u64>> = back.numeric(name).unwrap().iter().map(|v| v.map(f64::to_bits)).collect();
        assert_eq!(a, b, "{name}");
    }
}

fn simulate_config(dir: &Path, dgp: &str) -> RunConfig {
    let text = format!("output = \"sim\"\nseed = 11\n[simulate.dgp]\n{dgp}");
    fs::write(dir.join("sim.toml"), text).unwrap();
    RunConfig::load(&dir.join("sim.toml")).unwrap()
}

#[test]
fn simulate_then_fit_placebo_trends_concord() {
    let dir = tempfile::tempdir().unwrap();
    cmd_simulate(&simulate_config(
        dir.path(),
        "n_districts = 30\nn_per_district = 30\ncontrol_per_district = 10\n",
    ))
    .unwrap();
    let sim = dir.path().join("sim");
    assert!(sim.join("observations.csv").is_file());
    fs::write(
        dir.path().join("run.toml"),
        r#"
output = "res"
seed = 3
threads = 2
[data]
observations = "sim/observations.csv"
schedule = "sim/schedule.csv"
concordance = "sim/concordance.csv"
cpi = "sim/cpi.csv"
[data.columns]
numeric = ["log_wage", "log_pce", "female"]
[[spec]]
name = "wage"
outcome = "log_wage"
absorb = ["district*age"]
controls = ["female"]
birth_years = [1985, 1991]
[[spec]]
name = "wage_real_months"
outcome = "log_wage"
absorb = ["district*age"]
month_dummies = true
deflate = true
weights = { mode = "trimmed" }
[placebo]
replications = 10
[trends]
variables = ["treated", "log_wage"]
cohorts = [{ name = "young", birth_years = [1985, 1991] }, { name = "old", birth_years = [1975, 1981] }]
"#,
    )
    .unwrap();
    let cfg = load(dir.path());
    cmd_fit(&cfg).unwrap();
    let res = dir.path().join("res");
    let fits: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(res.join("fit_results.json")).unwrap()).unwrap();
    assert_eq!(fits["results"].as_array().unwrap().len(), 2);

    cmd_placebo(&cfg).unwrap();
    let p: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(res.join("placebo_wage.json")).unwrap()).unwrap();
    assert_eq!(p["estimates"].as_array().unwrap().len(), 10);
    let pv = p["p_two_tailed"].as_f64().unwrap();
    assert!(pv > 0.0 && pv <= 1.0);
    let density = fs::read_to_string(res.join("placebo_wage_density.csv")).unwrap();
    assert_eq!(density.lines().count(), 513);

    cmd_trends(&cfg).unwrap();
    let old = fs::read_to_string(res.join("trend_old_treated.csv")).unwrap();
    for line in old.lines().skip(1) {
        let smoothed = line.split(',').nth(1).unwrap();
        assert!(smoothed.is_empty() || smoothed == "0", "{line}");
    }
    assert_eq!(old.lines().count(), 367);
    assert!(res.join("trend_young_log_wage_fit.csv").is_file());

    cmd_concord(&cfg).unwrap();
    let conc = fs::read_to_string(res.join("concordance_resolution.csv")).unwrap();
    assert_eq!(conc.lines().count(), 31);
    assert!(!conc.contains("missing"));
}

#[test]
fn mixed_parentage_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.csv"), "original_district,fiscal_year_start\nP,1985\nQ,1989\n").unwrap();
    fs::write(
        dir.path().join("c.csv"),
        "followup_district,original_district,population_weight\nX,P,0.5\nX,Q,0.5\nY,P,1\n",
    )
    .unwrap();
    fs::write(dir.path().join("obs.csv"), "x\n").unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "[data]\nobservations = \"obs.csv\"\nschedule = \"s.csv\"\nconcordance = \"c.csv\"\n",
    )
    .unwrap();
    cmd_concord(&load(dir.path())).unwrap();
    let out = fs::read_to_string(dir.path().join("out/concordance_resolution.csv")).unwrap();
    assert!(out.contains("X,missing,,2,mixed parentage"));
    assert!(out.contains("Y,resolved,1985,0,"));
}

#[test]
fn simulate_rejects_zero_districts() {
    let dir = tempfile::tempdir().unwrap();
    assert!(cmd_simulate(&simulate_config(dir.path(), "n_districts = 0\n")).is_err());
}

fn binary() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_rolldiag"))
}

#[test]
fn binary_exit_status_and_determinism() {
    let dir = fixture_dir();
    let run = |out: &str| {
        Command::new(binary())
            .args(["fit", "--config"])
            .arg(dir.path().join("run.toml"))
            .arg("--out")
            .arg(dir.path().join(out))
            .output()
            .unwrap()
    };
    assert!(run("a").status.success());
    assert!(run("b").status.success());
    assert_eq!(
        fs::read(dir.path().join("a/fit_results.json")).unwrap(),
        fs::read(dir.path().join("b/fit_results.json")).unwrap()
    );
    let bad = Command::new(binary())
        .args(["fit", "--config"])
        .arg(dir.path().join("absent.toml"))
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("error"));
}

#[test]
fn simulate_report_flags_the_mechanism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulate_config(
        dir.path(),
        "n_districts = 100\n[simulate]\nreport = true\nreport_replications = 100\n",
    );
    cmd_simulate(&cfg).unwrap();
    let r: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sim/mechanism_report.json")).unwrap()).unwrap();
    assert_eq!(r["positive_design_effect"], true);
    assert_eq!(r["month_dummy_nullification"], true);
    assert!(r["fits"][2]["error"].as_str().unwrap().contains("treated"));
}
