//! CSV formats for observations, rollout schedules, concordances and CPI series.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a table
//! written and read back is bit-identical. Missing cells are empty.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use rolldiag_core::{
    Concordance, CpiSeries, Date, FiscalYear, Observation, ObservationTable, RolloutSchedule,
    SurveyWindow, YearMonth,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: missing required column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: no parseable rows")]
    NoRows { path: PathBuf },
    #[error("{path}, line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: {source}")]
    Core {
        path: PathBuf,
        source: rolldiag_core::Error,
    },
}

pub type IoResult<T> = std::result::Result<T, IoError>;

/// Names of the input columns holding each observation field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMapping {
    pub person_id: String,
    pub district: String,
    pub interview_date: String,
    pub age: String,
    pub weight: String,
    /// Outcomes and numeric controls.
    pub numeric: Vec<String>,
    pub categorical: Vec<String>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            person_id: "person_id".into(),
            district: "district".into(),
            interview_date: "interview_date".into(),
            age: "age".into(),
            weight: "weight".into(),
            numeric: Vec::new(),
            categorical: Vec::new(),
        }
    }
}

impl ColumnMapping {
    /// Default field names plus every optional column of `table`.
    pub fn for_table(table: &ObservationTable) -> Self {
        ColumnMapping {
            numeric: table.numeric_names().map(String::from).collect(),
            categorical: table.categorical_names().map(String::from).collect(),
            ..ColumnMapping::default()
        }
    }
}

/// Rows dropped while loading, with the first problem of each.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_loaded: usize,
    /// (line number, reason) for each excluded row.
    pub excluded: Vec<(u64, String)>,
}

fn open(path: &Path) -> IoResult<csv::Reader<File>> {
    let file = File::open(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn create(path: &Path) -> IoResult<csv::Writer<File>> {
    let file = File::create(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn core_err(path: &Path) -> impl Fn(rolldiag_core::Error) -> IoError + '_ {
    move |source| IoError::Core {
        path: path.to_path_buf(),
        source,
    }
}

fn header_index(path: &Path, headers: &csv::StringRecord, name: &str) -> IoResult<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| IoError::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "NaN" | ".")
}

/// Loads micro-data. Rows with an unparseable required field, a
/// non-positive weight or a malformed numeric cell are excluded and reported.
pub fn load_observations(
    path: &Path,
    mapping: &ColumnMapping,
) -> IoResult<(ObservationTable, LoadReport)> {
    let mut reader = open(path)?;
    let headers = reader.headers().map_err(csv_err(path))?.clone();
    let idx = |name: &str| header_index(path, &headers, name);
    let (pid, dist, date, age, weight) = (
        idx(&mapping.person_id)?,
        idx(&mapping.district)?,
        idx(&mapping.interview_date)?,
        idx(&mapping.age)?,
        idx(&mapping.weight)?,
    );
    let numeric: Vec<(String, usize)> = mapping
        .numeric
        .iter()
        .map(|n| Ok((n.clone(), idx(n)?)))
        .collect::<IoResult<_>>()?;
    let categorical: Vec<(String, usize)> = mapping
        .categorical
        .iter()
        .map(|n| Ok((n.clone(), idx(n)?)))
        .collect::<IoResult<_>>()?;

    let sample_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut table = ObservationTable::with_schema(
        &sample_id,
        numeric.iter().map(|(n, _)| n.as_str()),
        categorical.iter().map(|(n, _)| n.as_str()),
    );
    let mut report = LoadReport::default();
    for (j, record) in reader.records().enumerate() {
        let line = j as u64 + 2;
        report.rows_read += 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                report.excluded.push((line, e.to_string()));
                continue;
            }
        };
        match parse_row(&record, pid, dist, date, age, weight, &numeric, &categorical) {
            Ok(obs) => match table.push(obs) {
                Ok(()) => report.rows_loaded += 1,
                Err(e) => report.excluded.push((line, e.to_string())),
            },
            Err(msg) => report.excluded.push((line, msg)),
        }
    }
    for (line, why) in &report.excluded {
        log::warn!("{}:{line}: row excluded: {why}", path.display());
    }
    if table.is_empty() {
        return Err(IoError::NoRows {
            path: path.to_path_buf(),
        });
    }
    Ok((table, report))
}

#[allow(clippy::too_many_arguments)]
fn parse_row(
    r: &csv::StringRecord,
    pid: usize,
    dist: usize,
    date: usize,
    age: usize,
    weight: usize,
    numeric: &[(String, usize)],
    categorical: &[(String, usize)],
) -> Result<Observation, String> {
    let cell = |i: usize| r.get(i).unwrap_or("");
    let required = |i: usize, what: &str| {
        let c = cell(i);
        if is_missing(c) {
            Err(format!("missing {what}"))
        } else {
            Ok(c)
        }
    };
    let person_id = required(pid, "person id")?.to_string();
    let district = required(dist, "district")?.to_string();
    let interview: Date = required(date, "interview date")?
        .parse()
        .map_err(|e| format!("interview date: {e}"))?;
    let age: u32 = required(age, "age")?
        .parse()
        .map_err(|e| format!("age: {e}"))?;
    let weight: f64 = required(weight, "weight")?
        .parse()
        .map_err(|e| format!("weight: {e}"))?;
    let mut num = BTreeMap::new();
    for (name, i) in numeric {
        let c = cell(*i);
        let v = if is_missing(c) {
            None
        } else {
            Some(c.parse::<f64>().map_err(|e| format!("{name}: {e}"))?)
        };
        num.insert(name.clone(), v);
    }
    let mut cat = BTreeMap::new();
    for (name, i) in categorical {
        let c = cell(*i);
        cat.insert(name.clone(), (!is_missing(c)).then(|| c.to_string()));
    }
    Ok(Observation {
        person_id,
        district,
        interview,
        age,
        weight,
        numeric: num,
        categorical: cat,
    })
}

fn float_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes a table with default field names followed by the numeric and
/// categorical columns in name order.
pub fn write_observations(path: &Path, table: &ObservationTable) -> IoResult<()> {
    let mut w = create(path)?;
    let m = ColumnMapping::for_table(table);
    let mut header = vec![
        m.person_id.clone(),
        m.district.clone(),
        m.interview_date.clone(),
        m.age.clone(),
        m.weight.clone(),
    ];
    header.extend(m.numeric.iter().cloned());
    header.extend(m.categorical.iter().cloned());
    w.write_record(&header).map_err(csv_err(path))?;
    let numeric: Vec<&[Option<f64>]> = m
        .numeric
        .iter()
        .map(|n| table.numeric(n).expect("listed column"))
        .collect();
    let categorical: Vec<&[Option<String>]> = m
        .categorical
        .iter()
        .map(|n| table.categorical(n).expect("listed column"))
        .collect();
    for i in 0..table.len() {
        let mut rec = vec![
            table.person_ids()[i].clone(),
            table.districts()[i].clone(),
            table.interview_dates()[i].to_string(),
            table.ages()[i].to_string(),
            table.weights()[i].to_string(),
        ];
        rec.extend(numeric.iter().map(|c| float_cell(c[i])));
        rec.extend(categorical.iter().map(|c| c[i].clone().unwrap_or_default()));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_err(path: &Path, line: u64, message: String) -> IoError {
    IoError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    }
}

/// Rollout schedule CSV: `original_district,fiscal_year_start`.
pub fn load_schedule(path: &Path) -> IoResult<RolloutSchedule> {
    let mut reader = open(path)?;
    let headers = reader.headers().map_err(csv_err(path))?.clone();
    let d = header_index(path, &headers, "original_district")?;
    let y = header_index(path, &headers, "fiscal_year_start")?;
    let mut entries = Vec::new();
    for (j, rec) in reader.records().enumerate() {
        let line = j as u64 + 2;
        let rec = rec.map_err(csv_err(path))?;
        let fy: FiscalYear = rec[y]
            .parse()
            .map_err(|e: rolldiag_core::Error| parse_err(path, line, e.to_string()))?;
        entries.push((rec[d].to_string(), fy));
    }
    if entries.is_empty() {
        return Err(IoError::NoRows {
            path: path.to_path_buf(),
        });
    }
    RolloutSchedule::new(entries).map_err(core_err(path))
}

pub fn write_schedule(path: &Path, sched: &RolloutSchedule) -> IoResult<()> {
    let mut w = create(path)?;
    w.write_record(["original_district", "fiscal_year_start"])
        .map_err(csv_err(path))?;
    for (d, fy) in sched.iter() {
        w.write_record([d, &fy.0.to_string()]).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Concordance CSV: `followup_district,original_district,population_weight`.
pub fn load_concordance(path: &Path) -> IoResult<Concordance> {
    let mut reader = open(path)?;
    let headers = reader.headers().map_err(csv_err(path))?.clone();
    let c = header_index(path, &headers, "followup_district")?;
    let p = header_index(path, &headers, "original_district")?;
    let w = header_index(path, &headers, "population_weight")?;
    let mut conc = Concordance::new();
    for (j, rec) in reader.records().enumerate() {
        let line = j as u64 + 2;
        let rec = rec.map_err(csv_err(path))?;
        let weight: f64 = rec[w]
            .parse()
            .map_err(|e| parse_err(path, line, format!("population_weight: {e}")))?;
        conc.add(&rec[c], &rec[p], weight)
            .map_err(|e| parse_err(path, line, e.to_string()))?;
    }
    if conc.is_empty() {
        return Err(IoError::NoRows {
            path: path.to_path_buf(),
        });
    }
    Ok(conc)
}

pub fn write_concordance(path: &Path, conc: &Concordance) -> IoResult<()> {
    let mut w = create(path)?;
    w.write_record(["followup_district", "original_district", "population_weight"])
        .map_err(csv_err(path))?;
    for child in conc.children() {
        for (parent, weight) in conc.parents(child).unwrap_or_default() {
            w.write_record([child, parent.as_str(), &weight.to_string()])
                .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Two-column CPI CSV (`YYYY-MM`, index) with a header row, based at the
/// window's first month.
pub fn load_cpi(path: &Path, window: &SurveyWindow) -> IoResult<CpiSeries> {
    let mut reader = open(path)?;
    let mut points = Vec::new();
    for (j, rec) in reader.records().enumerate() {
        let line = j as u64 + 2;
        let rec = rec.map_err(csv_err(path))?;
        if rec.len() < 2 {
            return Err(parse_err(path, line, "expected two columns".into()));
        }
        let month: YearMonth = rec[0]
            .parse()
            .map_err(|e: rolldiag_core::Error| parse_err(path, line, e.to_string()))?;
        let value: f64 = rec[1]
            .parse()
            .map_err(|e| parse_err(path, line, format!("CPI value: {e}")))?;
        points.push((month, value));
    }
    if points.is_empty() {
        return Err(IoError::NoRows {
            path: path.to_path_buf(),
        });
    }
    CpiSeries::based_at_window(points, window).map_err(core_err(path))
}

pub fn write_cpi(path: &Path, cpi: &CpiSeries) -> IoResult<()> {
    let mut w = create(path)?;
    w.write_record(["month", "cpi"]).map_err(csv_err(path))?;
    for (m, v) in cpi.points() {
        w.write_record([m.to_string(), v.to_string()])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}
