//! Columnar observation table, survey-weight trimming and CPI deflation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::date::{Date, SurveyWindow, YearMonth};
use crate::error::{Error, Result};

/// One survey respondent, as a row view of an [`ObservationTable`].
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub person_id: String,
    /// Follow-up (survey-time) district code.
    pub district: String,
    pub interview: Date,
    /// Completed years of life on the interview date.
    pub age: u32,
    /// Survey multiplier.
    pub weight: f64,
    /// Outcomes and numeric controls; `None` is an absent cell.
    pub numeric: BTreeMap<String, Option<f64>>,
    pub categorical: BTreeMap<String, Option<String>>,
}

/// Immutable-after-load columnar micro-data.
///
/// Every column has exactly `len()` entries. Missing numeric or categorical
/// cells are `None`; required fields (district, date, age, weight) are always
/// present.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationTable {
    sample_id: String,
    person_id: Vec<String>,
    district: Vec<String>,
    interview: Vec<Date>,
    age: Vec<u32>,
    weight: Vec<f64>,
    numeric: BTreeMap<String, Vec<Option<f64>>>,
    categorical: BTreeMap<String, Vec<Option<String>>>,
}

impl ObservationTable {
    /// Empty table with the given optional-column schema.
    pub fn with_schema<N, C>(sample_id: &str, numeric: N, categorical: C) -> Self
    where
        N: IntoIterator,
        N::Item: Into<String>,
        C: IntoIterator,
        C::Item: Into<String>,
    {
        ObservationTable {
            sample_id: sample_id.to_string(),
            numeric: numeric.into_iter().map(|n| (n.into(), Vec::new())).collect(),
            categorical: categorical
                .into_iter()
                .map(|n| (n.into(), Vec::new()))
                .collect(),
            ..Default::default()
        }
    }

    /// Builds a table from rows; the first row fixes the schema.
    pub fn from_rows(sample_id: &str, rows: Vec<Observation>) -> Result<Self> {
        let mut table = match rows.first() {
            Some(r) => Self::with_schema(
                sample_id,
                r.numeric.keys().cloned(),
                r.categorical.keys().cloned(),
            ),
            None => Self::with_schema(sample_id, Vec::<String>::new(), Vec::<String>::new()),
        };
        for row in rows {
            table.push(row)?;
        }
        Ok(table)
    }

    pub fn push(&mut self, row: Observation) -> Result<()> {
        if !(row.weight > 0.0 && row.weight.is_finite()) {
            return Err(Error::Invalid(format!(
                "row `{}`: weight must be positive, got {}",
                row.person_id, row.weight
            )));
        }
        let same_keys = |a: &mut dyn Iterator<Item = &String>, b: &mut dyn Iterator<Item = &String>| {
            a.eq(b)
        };
        if !same_keys(&mut row.numeric.keys(), &mut self.numeric.keys())
            || !same_keys(&mut row.categorical.keys(), &mut self.categorical.keys())
        {
            return Err(Error::Invalid(format!(
                "row `{}` does not match the table schema",
                row.person_id
            )));
        }
        self.person_id.push(row.person_id);
        self.district.push(row.district);
        self.interview.push(row.interview);
        self.age.push(row.age);
        self.weight.push(row.weight);
        for (name, v) in row.numeric {
            self.numeric.get_mut(&name).expect("schema checked").push(v);
        }
        for (name, v) in row.categorical {
            self.categorical.get_mut(&name).expect("schema checked").push(v);
        }
        Ok(())
    }

    pub fn sample_id(&self) -> &str {
        &self.sample_id
    }

    pub fn len(&self) -> usize {
        self.person_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.person_id.is_empty()
    }

    pub fn person_ids(&self) -> &[String] {
        &self.person_id
    }

    pub fn districts(&self) -> &[String] {
        &self.district
    }

    pub fn interview_dates(&self) -> &[Date] {
        &self.interview
    }

    pub fn ages(&self) -> &[u32] {
        &self.age
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    pub fn numeric_names(&self) -> impl Iterator<Item = &str> {
        self.numeric.keys().map(String::as_str)
    }

    pub fn categorical_names(&self) -> impl Iterator<Item = &str> {
        self.categorical.keys().map(String::as_str)
    }

    pub fn has_numeric(&self, name: &str) -> bool {
        self.numeric.contains_key(name)
    }

    pub fn has_categorical(&self, name: &str) -> bool {
        self.categorical.contains_key(name)
    }

    pub fn numeric(&self, name: &str) -> Result<&[Option<f64>]> {
        self.numeric
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn categorical(&self, name: &str) -> Result<&[Option<String>]> {
        self.categorical
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    /// Adds (or replaces) a derived numeric column.
    pub fn set_numeric(&mut self, name: &str, values: Vec<Option<f64>>) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::ColumnLength {
                name: name.to_string(),
                expected: self.len(),
                found: values.len(),
            });
        }
        self.numeric.insert(name.to_string(), values);
        Ok(())
    }

    pub fn row(&self, i: usize) -> Observation {
        Observation {
            person_id: self.person_id[i].clone(),
            district: self.district[i].clone(),
            interview: self.interview[i],
            age: self.age[i],
            weight: self.weight[i],
            numeric: self.numeric.iter().map(|(k, v)| (k.clone(), v[i])).collect(),
            categorical: self
                .categorical
                .iter()
                .map(|(k, v)| (k.clone(), v[i].clone()))
                .collect(),
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = Observation> + '_ {
        (0..self.len()).map(|i| self.row(i))
    }

    /// New table holding the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let pick = |v: &Vec<Option<f64>>| indices.iter().map(|&i| v[i]).collect();
        ObservationTable {
            sample_id: self.sample_id.clone(),
            person_id: indices.iter().map(|&i| self.person_id[i].clone()).collect(),
            district: indices.iter().map(|&i| self.district[i].clone()).collect(),
            interview: indices.iter().map(|&i| self.interview[i]).collect(),
            age: indices.iter().map(|&i| self.age[i]).collect(),
            weight: indices.iter().map(|&i| self.weight[i]).collect(),
            numeric: self.numeric.iter().map(|(k, v)| (k.clone(), pick(v))).collect(),
            categorical: self
                .categorical
                .iter()
                .map(|(k, v)| (k.clone(), indices.iter().map(|&i| v[i].clone()).collect()))
                .collect(),
        }
    }

    /// Indices of rows whose interview date falls outside `window`.
    pub fn outside_window(&self, window: &SurveyWindow) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| !window.contains(self.interview[i]))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum WeightMode {
    /// Unit weights.
    #[default]
    None,
    /// Survey multipliers as recorded.
    Raw,
    /// Survey multipliers capped at median + multiplier × IQR.
    Trimmed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct WeightPolicy {
    pub mode: WeightMode,
    pub trim_multiplier: f64,
}

impl Default for WeightPolicy {
    fn default() -> Self {
        WeightPolicy {
            mode: WeightMode::None,
            trim_multiplier: 5.0,
        }
    }
}

impl WeightPolicy {
    pub fn unweighted() -> Self {
        Self::default()
    }

    pub fn raw() -> Self {
        WeightPolicy {
            mode: WeightMode::Raw,
            ..Self::default()
        }
    }

    pub fn trimmed(multiplier: f64) -> Self {
        WeightPolicy {
            mode: WeightMode::Trimmed,
            trim_multiplier: multiplier,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.trim_multiplier > 0.0 && self.trim_multiplier.is_finite()) {
            return Err(Error::Invalid(format!(
                "trim multiplier must be positive, got {}",
                self.trim_multiplier
            )));
        }
        Ok(())
    }
}

/// Quantile of sorted data by linear interpolation between closest ranks:
/// position h = (n - 1) p, value x[floor h] + (h - floor h)(x[floor h + 1] - x[floor h]).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// The trimming cap median + multiplier × (Q3 - Q1).
pub fn trim_cap(weights: &[f64], multiplier: f64) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::Empty("weights"));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::Invalid(format!("weights must be positive, got {w}")));
    }
    let mut sorted = weights.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = quantile_sorted(&sorted, 0.5);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    Ok(median + multiplier * iqr)
}

/// Regression weights under `policy`: unit, raw, or capped at the trimming cap.
/// Order is preserved and no weight is ever increased.
pub fn trim_weights(weights: &[f64], policy: &WeightPolicy) -> Result<Vec<f64>> {
    policy.validate()?;
    if weights.is_empty() {
        return Err(Error::Empty("weights"));
    }
    match policy.mode {
        WeightMode::None => Ok(alloc::vec![1.0; weights.len()]),
        WeightMode::Raw => {
            trim_cap(weights, policy.trim_multiplier)?;
            Ok(weights.to_vec())
        }
        WeightMode::Trimmed => {
            let cap = trim_cap(weights, policy.trim_multiplier)?;
            Ok(weights.iter().map(|&w| if w > cap { cap } else { w }).collect())
        }
    }
}

/// Monthly consumer price index.
#[derive(Debug, Clone, PartialEq)]
pub struct CpiSeries {
    first: YearMonth,
    values: Vec<f64>,
    base: YearMonth,
}

impl CpiSeries {
    /// `points` must be contiguous months (in any order) with positive values;
    /// `base` must be covered.
    pub fn new(mut points: Vec<(YearMonth, f64)>, base: YearMonth) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("CPI series"));
        }
        points.sort_by_key(|(m, _)| *m);
        for w in points.windows(2) {
            if w[1].0 != w[0].0.succ() {
                return Err(Error::CpiGap(w[0].0.succ()));
            }
        }
        if let Some((m, v)) = points.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Invalid(format!("CPI for {m} must be positive, got {v}")));
        }
        let series = CpiSeries {
            first: points[0].0,
            values: points.iter().map(|(_, v)| *v).collect(),
            base,
        };
        if series.index(base).is_none() {
            return Err(Error::Invalid(format!("CPI base month {base} is not covered")));
        }
        Ok(series)
    }

    /// Series based at the survey window's first month.
    pub fn based_at_window(points: Vec<(YearMonth, f64)>, window: &SurveyWindow) -> Result<Self> {
        Self::new(points, window.first_month())
    }

    pub fn base(&self) -> YearMonth {
        self.base
    }

    pub fn index(&self, month: YearMonth) -> Option<f64> {
        let offset = month.ordinal() - self.first.ordinal();
        usize::try_from(offset)
            .ok()
            .and_then(|i| self.values.get(i).copied())
    }

    pub fn points(&self) -> impl Iterator<Item = (YearMonth, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &v)| (YearMonth::from_ordinal(self.first.ordinal() + i as i64), v))
    }

    /// ln(CPI(month of `date`) / CPI(base)).
    pub fn log_ratio(&self, date: Date) -> Result<f64> {
        let idx = self
            .index(date.year_month())
            .ok_or(Error::CpiCoverage(date))?;
        let base = self.index(self.base).expect("base covered");
        Ok(libm::log(idx / base))
    }
}

/// Converts log nominal values to log real values at base-month prices.
pub fn deflate(values: &[f64], dates: &[Date], cpi: &CpiSeries) -> Result<Vec<f64>> {
    if values.len() != dates.len() {
        return Err(Error::ColumnLength {
            name: "dates".to_string(),
            expected: values.len(),
            found: dates.len(),
        });
    }
    values
        .iter()
        .zip(dates)
        .map(|(&v, &d)| Ok(v - cpi.log_ratio(d)?))
        .collect()
}

/// Inverse of [`deflate`].
pub fn inflate(values: &[f64], dates: &[Date], cpi: &CpiSeries) -> Result<Vec<f64>> {
    if values.len() != dates.len() {
        return Err(Error::ColumnLength {
            name: "dates".to_string(),
            expected: values.len(),
            found: dates.len(),
        });
    }
    values
        .iter()
        .zip(dates)
        .map(|(&v, &d)| Ok(v + cpi.log_ratio(d)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn obs(id: &str, wage: Option<f64>) -> Observation {
        Observation {
            person_id: id.to_string(),
            district: "D1".to_string(),
            interview: Date::from_ymd(2011, 8, 1).unwrap(),
            age: 24,
            weight: 1.5,
            numeric: [("log_wage".to_string(), wage)].into_iter().collect(),
            categorical: BTreeMap::new(),
        }
    }

    #[test]
    fn table_rows_round_trip() {
        let rows = vec![obs("a", Some(5.0)), obs("b", None), obs("c", Some(4.5))];
        let t = ObservationTable::from_rows("s", rows.clone()).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.numeric("log_wage").unwrap(), &[Some(5.0), None, Some(4.5)]);
        assert_eq!(t.rows().collect::<Vec<_>>(), rows);
        assert_eq!(t.select(&[2, 0]).person_ids(), &["c", "a"]);
        assert!(matches!(t.numeric("log_pce"), Err(Error::MissingColumn(_))));
    }

    #[test]
    fn rejects_nonpositive_weight_and_schema_mismatch() {
        let mut t = ObservationTable::from_rows("s", vec![obs("a", None)]).unwrap();
        let mut bad = obs("b", None);
        bad.weight = 0.0;
        assert!(t.push(bad).is_err());
        let mut other = obs("c", None);
        other.numeric.insert("extra".to_string(), None);
        assert!(t.push(other).is_err());
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn equal_weights_are_untouched() {
        let w = vec![7.0; 9];
        assert_eq!(trim_cap(&w, 5.0).unwrap(), 7.0);
        assert_eq!(trim_weights(&w, &WeightPolicy::trimmed(5.0)).unwrap(), w);
    }

    #[test]
    fn trims_the_outlier() {
        // sorted 1 2 3 4 100: median 3, Q1 2, Q3 4, cap 3 + 5*2 = 13
        let w = [1.0, 2.0, 100.0, 3.0, 4.0];
        assert_eq!(trim_cap(&w, 5.0).unwrap(), 13.0);
        let t = trim_weights(&w, &WeightPolicy::trimmed(5.0)).unwrap();
        assert_eq!(t, vec![1.0, 2.0, 13.0, 3.0, 4.0]);
    }

    #[test]
    fn modes_and_errors() {
        let w = [1.0, 2.0, 3.0];
        assert_eq!(trim_weights(&w, &WeightPolicy::unweighted()).unwrap(), vec![1.0; 3]);
        assert_eq!(trim_weights(&w, &WeightPolicy::raw()).unwrap(), w.to_vec());
        assert_eq!(
            trim_weights(&[], &WeightPolicy::trimmed(5.0)),
            Err(Error::Empty("weights"))
        );
        assert!(trim_weights(&w, &WeightPolicy::trimmed(0.0)).is_err());
        assert!(trim_weights(&[1.0, -1.0], &WeightPolicy::raw()).is_err());
    }

    #[test]
    fn quantile_interpolates() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
        assert_eq!(quantile_sorted(&s, 0.25), 1.75);
        assert_eq!(quantile_sorted(&[9.0], 0.75), 9.0);
    }

    fn survey_cpi(values: &[f64]) -> CpiSeries {
        let w = SurveyWindow::default();
        let pts = values
            .iter()
            .enumerate()
            .map(|(i, &v)| (YearMonth::from_ordinal(w.first_month().ordinal() + i as i64), v))
            .collect();
        CpiSeries::based_at_window(pts, &w).unwrap()
    }

    #[test]
    fn constant_cpi_leaves_values() {
        let cpi = survey_cpi(&[120.0; 12]);
        let d = [Date::from_ymd(2011, 7, 3).unwrap(), Date::from_ymd(2012, 6, 30).unwrap()];
        assert_eq!(deflate(&[5.0, 6.0], &d, &cpi).unwrap(), vec![5.0, 6.0]);
    }

    #[test]
    fn deflation_arithmetic() {
        let mut v = vec![100.0; 12];
        v[3] = 110.0;
        let cpi = survey_cpi(&v);
        let d = Date::from_ymd(2011, 10, 15).unwrap();
        let out = deflate(&[5.0], &[d], &cpi).unwrap();
        assert!((out[0] - (5.0 - libm::log(1.1))).abs() < 1e-15);
    }

    #[test]
    fn ten_point_six_percent_rise() {
        let v: Vec<f64> = (0..12).map(|i| 100.0 * libm::pow(1.106, i as f64 / 11.0)).collect();
        let cpi = survey_cpi(&v);
        let first = Date::from_ymd(2011, 7, 1).unwrap();
        let last = Date::from_ymd(2012, 6, 30).unwrap();
        let out = deflate(&[5.0, 5.0], &[first, last], &cpi).unwrap();
        assert!((out[0] - out[1] - libm::log(1.106)).abs() < 1e-12);
        assert!((out[0] - out[1] - 0.1008).abs() < 1e-4);
    }

    #[test]
    fn cpi_validation() {
        let w = SurveyWindow::default();
        let gap = vec![(YearMonth::new(2011, 7), 1.0), (YearMonth::new(2011, 9), 1.0)];
        assert!(matches!(CpiSeries::based_at_window(gap, &w), Err(Error::CpiGap(_))));
        let cpi = survey_cpi(&[100.0; 12]);
        let outside = Date::from_ymd(2012, 7, 1).unwrap();
        assert_eq!(deflate(&[1.0], &[outside], &cpi), Err(Error::CpiCoverage(outside)));
        assert!(CpiSeries::new(vec![(YearMonth::new(2011, 7), -1.0)], YearMonth::new(2011, 7)).is_err());
    }

    proptest! {
        #[test]
        fn trimming_is_idempotent_and_never_increases(
            w in prop::collection::vec(0.01f64..1.0e5, 1..60)
        ) {
            let p = WeightPolicy::trimmed(5.0);
            let once = trim_weights(&w, &p).unwrap();
            let twice = trim_weights(&once, &p).unwrap();
            prop_assert_eq!(&once, &twice);
            for (a, b) in w.iter().zip(&once) {
                prop_assert!(b <= a);
                prop_assert!(b == a || *b == trim_cap(&w, 5.0).unwrap());
            }
        }

        #[test]
        fn deflate_inverts(
            vals in prop::collection::vec(-10.0f64..10.0, 1..30),
            cpi in prop::collection::vec(50.0f64..200.0, 12),
            day in 0i32..366,
        ) {
            let cpi = survey_cpi(&cpi);
            let d = Date::from_ymd(2011, 7, 1).unwrap().add_days(day);
            let dates = vec![d; vals.len()];
            let back = inflate(&deflate(&vals, &dates, &cpi).unwrap(), &dates, &cpi).unwrap();
            for (a, b) in vals.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
