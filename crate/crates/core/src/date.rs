//! Calendar dates stored as integer day counts.

use core::fmt;
use core::str::FromStr;

use chrono::{Datelike, Months, NaiveDate};

use crate::error::Error;

const EPOCH_DAYS_FROM_CE: i32 = 719_163;

/// A calendar date, stored as days since 1970-01-01.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Date(i32);

impl Date {
    pub const fn from_days(days: i32) -> Self {
        Date(days)
    }

    pub fn from_ymd(year: i32, month: u32, day: u32) -> Option<Self> {
        NaiveDate::from_ymd_opt(year, month, day).map(Self::from_naive)
    }

    pub const fn days(self) -> i32 {
        self.0
    }

    fn naive(self) -> NaiveDate {
        NaiveDate::from_num_days_from_ce_opt(self.0 + EPOCH_DAYS_FROM_CE)
            .expect("date within chrono range")
    }

    fn from_naive(d: NaiveDate) -> Self {
        Date(d.num_days_from_ce() - EPOCH_DAYS_FROM_CE)
    }

    pub fn year(self) -> i32 {
        self.naive().year()
    }

    pub fn month(self) -> u32 {
        self.naive().month()
    }

    pub fn day(self) -> u32 {
        self.naive().day()
    }

    pub fn year_month(self) -> YearMonth {
        let d = self.naive();
        YearMonth::new(d.year(), d.month())
    }

    pub fn add_days(self, days: i32) -> Self {
        Date(self.0 + days)
    }

    /// Shifts by whole calendar years; Feb 29 maps to Feb 28 in common years.
    pub fn add_years(self, years: i32) -> Self {
        let d = self.naive();
        let months = Months::new(years.unsigned_abs() * 12);
        let shifted = if years >= 0 {
            d.checked_add_months(months)
        } else {
            d.checked_sub_months(months)
        };
        Self::from_naive(shifted.expect("date within chrono range"))
    }

    /// Completed years of life on `self` for someone born on `birth`.
    pub fn completed_years_since(self, birth: Date) -> i32 {
        let (a, b) = (self.naive(), birth.naive());
        let mut years = a.year() - b.year();
        if (a.month(), a.day()) < (b.month(), b.day()) {
            years -= 1;
        }
        years
    }
}

impl fmt::Display for Date {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = self.naive();
        write!(f, "{:04}-{:02}-{:02}", d.year(), d.month(), d.day())
    }
}

impl FromStr for Date {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || Error::Invalid(alloc::format!("unparseable date `{s}`"));
        let mut parts = s.trim().splitn(3, '-');
        let mut next = || parts.next().ok_or_else(bad);
        let y: i32 = next()?.parse().map_err(|_| bad())?;
        let m: u32 = next()?.parse().map_err(|_| bad())?;
        let d: u32 = next()?.parse().map_err(|_| bad())?;
        Date::from_ymd(y, m, d).ok_or_else(bad)
    }
}

/// A calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub const fn new(year: i32, month: u32) -> Self {
        YearMonth { year, month }
    }

    /// Months since year 0, for integer-exact month arithmetic.
    pub const fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub const fn from_ordinal(ordinal: i64) -> Self {
        YearMonth {
            year: ordinal.div_euclid(12) as i32,
            month: (ordinal.rem_euclid(12) + 1) as u32,
        }
    }

    pub const fn succ(self) -> Self {
        Self::from_ordinal(self.ordinal() + 1)
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || Error::Invalid(alloc::format!("unparseable year-month `{s}`"));
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u32 = m.parse().map_err(|_| bad())?;
        if !(1..=12).contains(&month) {
            return Err(bad());
        }
        Ok(YearMonth::new(year, month))
    }
}

/// The fieldwork period of the follow-up survey, inclusive at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SurveyWindow {
    pub start: Date,
    pub end: Date,
}

impl Default for SurveyWindow {
    fn default() -> Self {
        SurveyWindow {
            start: Date::from_ymd(2011, 7, 1).unwrap(),
            end: Date::from_ymd(2012, 6, 30).unwrap(),
        }
    }
}

impl SurveyWindow {
    pub fn new(start: Date, end: Date) -> crate::Result<Self> {
        if end < start {
            return Err(Error::Invalid(alloc::format!(
                "survey window ends ({end}) before it starts ({start})"
            )));
        }
        Ok(SurveyWindow { start, end })
    }

    pub fn contains(&self, d: Date) -> bool {
        self.start <= d && d <= self.end
    }

    /// Days from first to last fieldwork day (365 for the default window).
    pub fn span_days(&self) -> i32 {
        self.end.days() - self.start.days()
    }

    pub fn first_month(&self) -> YearMonth {
        self.start.year_month()
    }

    pub fn n_months(&self) -> usize {
        (self.end.year_month().ordinal() - self.first_month().ordinal() + 1) as usize
    }

    /// Zero-based survey month of `d`; the window's first month is 0.
    pub fn month_index(&self, d: Date) -> i64 {
        d.year_month().ordinal() - self.first_month().ordinal()
    }

    /// Every day of the window, in order.
    pub fn daily_grid(&self) -> alloc::vec::Vec<Date> {
        (self.start.days()..=self.end.days()).map(Date::from_days).collect()
    }
}

#[cfg(feature = "serde")]
mod serde_impls {
    use super::*;
    use alloc::string::{String, ToString};
    use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

    impl Serialize for Date {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            s.collect_str(self)
        }
    }

    impl<'de> Deserialize<'de> for Date {
        fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            let s = String::deserialize(d)?;
            s.parse().map_err(|e: Error| de::Error::custom(e.to_string()))
        }
    }

    impl Serialize for YearMonth {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            s.collect_str(self)
        }
    }

    impl<'de> Deserialize<'de> for YearMonth {
        fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            let s = String::deserialize(d)?;
            s.parse().map_err(|e: Error| de::Error::custom(e.to_string()))
        }
    }

    impl Serialize for SurveyWindow {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            use serde::ser::SerializeStruct;
            let mut st = s.serialize_struct("SurveyWindow", 2)?;
            st.serialize_field("start", &self.start)?;
            st.serialize_field("end", &self.end)?;
            st.end()
        }
    }

    impl<'de> Deserialize<'de> for SurveyWindow {
        fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            #[derive(Deserialize)]
            struct Raw {
                start: Date,
                end: Date,
            }
            let raw = Raw::deserialize(d)?;
            SurveyWindow::new(raw.start, raw.end).map_err(|e| de::Error::custom(e.to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn epoch_and_display() {
        assert_eq!(Date::from_ymd(1970, 1, 1).unwrap().days(), 0);
        let d: Date = "2012-02-29".parse().unwrap();
        assert_eq!(d.to_string(), "2012-02-29");
        assert_eq!(d.year(), 2012);
        assert!("2011-02-29".parse::<Date>().is_err());
        assert!("2011-13".parse::<Date>().is_err());
    }

    #[test]
    fn default_window() {
        let w = SurveyWindow::default();
        assert_eq!(w.span_days(), 365);
        assert_eq!(w.n_months(), 12);
        assert_eq!(w.month_index(Date::from_ymd(2012, 1, 15).unwrap()), 6);
        assert_eq!(w.daily_grid().len(), 366);
    }

    #[test]
    fn completed_years() {
        let birth = Date::from_ymd(1985, 9, 10).unwrap();
        assert_eq!(Date::from_ymd(2011, 9, 9).unwrap().completed_years_since(birth), 25);
        assert_eq!(Date::from_ymd(2011, 9, 10).unwrap().completed_years_since(birth), 26);
        let leap = Date::from_ymd(1988, 2, 29).unwrap();
        assert_eq!(Date::from_ymd(2012, 2, 28).unwrap().completed_years_since(leap), 23);
        assert_eq!(leap.add_years(1), Date::from_ymd(1989, 2, 28).unwrap());
    }

    #[test]
    fn year_month_ordinals() {
        let ym = YearMonth::new(2011, 12);
        assert_eq!(ym.succ(), YearMonth::new(2012, 1));
        assert_eq!(YearMonth::from_ordinal(ym.ordinal()), ym);
        assert_eq!("2012-06".parse::<YearMonth>().unwrap(), YearMonth::new(2012, 6));
    }
}
