//! Birth-year estimation, rollout-based treatment assignment through a district
//! concordance, and placebo scrambling of rollout schedules.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Observation, ObservationTable};
use crate::date::Date;
use crate::error::{Error, Result};

/// A program fiscal year, identified by the calendar year it starts in
/// (`FiscalYear(1985)` is 1985-86, starting April 1, 1985).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct FiscalYear(pub i32);

impl fmt::Display for FiscalYear {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FY{}", self.0)
    }
}

impl FromStr for FiscalYear {
    type Err = Error;

    /// Accepts `1985`, `FY1985` and `1985-86`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let t = t.strip_prefix("FY").unwrap_or(t);
        let start = t.split_once('-').map_or(t, |(a, _)| a);
        start
            .parse()
            .map(FiscalYear)
            .map_err(|_| Error::Invalid(format!("unparseable fiscal year `{s}`")))
    }
}

/// Coding rules for turning rollout timing into treatment status.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TreatmentRules {
    /// Largest population-weighted SD of parent arrival years still treated
    /// as a common year.
    pub sd_threshold: f64,
    /// First treated birth year = fiscal-year start + this offset.
    pub threshold_offset: i32,
}

impl Default for TreatmentRules {
    fn default() -> Self {
        TreatmentRules {
            sd_threshold: 0.1,
            threshold_offset: 1,
        }
    }
}

impl TreatmentRules {
    pub fn threshold_year(&self, fy: FiscalYear) -> i32 {
        fy.0 + self.threshold_offset
    }
}

/// Rollout fiscal year of each original district.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RolloutSchedule {
    years: BTreeMap<String, FiscalYear>,
}

impl RolloutSchedule {
    pub fn new<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, FiscalYear)>,
        S: Into<String>,
    {
        let mut years = BTreeMap::new();
        for (id, fy) in entries {
            let id = id.into();
            if years.insert(id.clone(), fy).is_some() {
                return Err(Error::Invalid(format!(
                    "district `{id}` appears twice in the rollout schedule"
                )));
            }
        }
        Ok(RolloutSchedule { years })
    }

    pub fn get(&self, district: &str) -> Option<FiscalYear> {
        self.years.get(district).copied()
    }

    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    /// Entries in district-id order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, FiscalYear)> {
        self.years.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Number of districts per fiscal year.
    pub fn counts(&self) -> BTreeMap<FiscalYear, usize> {
        let mut counts = BTreeMap::new();
        for fy in self.years.values() {
            *counts.entry(*fy).or_insert(0) += 1;
        }
        counts
    }
}

/// Population-weighted parentage of follow-up districts in original districts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Concordance {
    parents: BTreeMap<String, Vec<(String, f64)>>,
}

impl Concordance {
    pub fn new() -> Self {
        Self::default()
    }

    /// Each district is its own sole parent.
    pub fn identity<I, S>(districts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let parents = districts
            .into_iter()
            .map(|d| {
                let d = d.into();
                (d.clone(), alloc::vec![(d, 1.0)])
            })
            .collect();
        Concordance { parents }
    }

    pub fn add(&mut self, child: &str, parent: &str, weight: f64) -> Result<()> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::Invalid(format!(
                "concordance weight for `{child}` <- `{parent}` must be positive, got {weight}"
            )));
        }
        self.parents
            .entry(child.to_string())
            .or_default()
            .push((parent.to_string(), weight));
        Ok(())
    }

    pub fn parents(&self, child: &str) -> Option<&[(String, f64)]> {
        self.parents.get(child).map(Vec::as_slice)
    }

    pub fn children(&self) -> impl Iterator<Item = &str> {
        self.parents.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }
}

/// Why a follow-up district has no usable rollout year.
#[derive(Debug, Clone, PartialEq)]
pub enum MissingReason {
    Unmapped,
    UnscheduledParent(String),
    /// Weighted SD of the parents' arrival years exceeds the threshold.
    MixedParentage { sd: f64 },
}

impl fmt::Display for MissingReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MissingReason::Unmapped => f.write_str("unmapped"),
            MissingReason::UnscheduledParent(p) => write!(f, "parent {p} not in schedule"),
            MissingReason::MixedParentage { sd } => write!(f, "mixed parentage (sd {sd:.4})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Resolution {
    Resolved { year: FiscalYear, sd: f64 },
    Missing(MissingReason),
}

impl Resolution {
    pub fn year(&self) -> Option<FiscalYear> {
        match self {
            Resolution::Resolved { year, .. } => Some(*year),
            Resolution::Missing(_) => None,
        }
    }
}

/// Rollout year of a follow-up district via its parents.
///
/// Parents' arrival years are summarized by their population-weighted mean and
/// SD (weights normalized to one). Above `rules.sd_threshold` the district is
/// missing; otherwise the mean rounded to the nearest year, ties down.
pub fn resolve_rollout_year(
    district: &str,
    conc: &Concordance,
    sched: &RolloutSchedule,
    rules: &TreatmentRules,
) -> Resolution {
    let Some(parents) = conc.parents(district).filter(|p| !p.is_empty()) else {
        log::debug!("district `{district}` is not in the concordance");
        return Resolution::Missing(MissingReason::Unmapped);
    };
    let mut years = Vec::with_capacity(parents.len());
    for (p, w) in parents {
        match sched.get(p) {
            Some(fy) => years.push((p.as_str(), *w, fy.0 as f64)),
            None => return Resolution::Missing(MissingReason::UnscheduledParent(p.clone())),
        }
    }
    // fixed summation order
    years.sort_by(|a, b| a.0.cmp(b.0).then(a.1.total_cmp(&b.1)));
    let total: f64 = years.iter().map(|(_, w, _)| w).sum();
    let mean: f64 = years.iter().map(|(_, w, y)| w / total * y).sum();
    let var: f64 = years
        .iter()
        .map(|(_, w, y)| w / total * (y - mean) * (y - mean))
        .sum();
    let sd = libm::sqrt(var.max(0.0));
    if sd > rules.sd_threshold {
        return Resolution::Missing(MissingReason::MixedParentage { sd });
    }
    let year = libm::ceil(mean - 0.5) as i32;
    Resolution::Resolved {
        year: FiscalYear(year),
        sd,
    }
}

/// Birth year as interview year minus completed years of age.
pub fn estimate_birth_year(interview: Date, age_years: u32) -> i32 {
    interview.year() - age_years as i32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Treatment {
    Treated,
    Untreated,
    Missing,
}

impl Treatment {
    pub fn indicator(self) -> Option<f64> {
        match self {
            Treatment::Treated => Some(1.0),
            Treatment::Untreated => Some(0.0),
            Treatment::Missing => None,
        }
    }
}

fn classify(birth_year: i32, year: Option<FiscalYear>, rules: &TreatmentRules) -> Treatment {
    match year {
        Some(fy) if birth_year >= rules.threshold_year(fy) => Treatment::Treated,
        Some(_) => Treatment::Untreated,
        None => Treatment::Missing,
    }
}

/// Treatment status of one respondent.
pub fn assign_treatment(
    row: &Observation,
    conc: &Concordance,
    sched: &RolloutSchedule,
    rules: &TreatmentRules,
) -> Treatment {
    let year = resolve_rollout_year(&row.district, conc, sched, rules).year();
    classify(estimate_birth_year(row.interview, row.age), year, rules)
}

/// Per-row treatment status and estimated birth year for a whole table.
#[derive(Debug, Clone, PartialEq)]
pub struct TreatmentAssignment {
    pub status: Vec<Treatment>,
    pub birth_year: Vec<i32>,
}

impl TreatmentAssignment {
    pub fn compute(
        table: &ObservationTable,
        conc: &Concordance,
        sched: &RolloutSchedule,
        rules: &TreatmentRules,
    ) -> Self {
        let mut resolved: BTreeMap<&str, Option<FiscalYear>> = BTreeMap::new();
        let birth_year: Vec<i32> = table
            .interview_dates()
            .iter()
            .zip(table.ages())
            .map(|(&d, &a)| estimate_birth_year(d, a))
            .collect();
        let status = table
            .districts()
            .iter()
            .zip(&birth_year)
            .map(|(d, &by)| {
                let year = *resolved
                    .entry(d.as_str())
                    .or_insert_with(|| resolve_rollout_year(d, conc, sched, rules).year());
                classify(by, year, rules)
            })
            .collect();
        TreatmentAssignment { status, birth_year }
    }

    pub fn indicators(&self) -> Vec<Option<f64>> {
        self.status.iter().map(|t| t.indicator()).collect()
    }
}

/// The RNG stream for placebo replication `k` under `master_seed`.
///
/// Streams depend only on `(master_seed, k)`, so results do not depend on how
/// replications are scheduled across threads.
pub fn replication_rng(master_seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(k);
    rng
}

/// Uniformly random reassignment of the schedule's fiscal-year labels over the
/// same districts; per-year counts are preserved.
pub fn scramble_with<R: Rng + ?Sized>(sched: &RolloutSchedule, rng: &mut R) -> RolloutSchedule {
    let mut labels: Vec<FiscalYear> = sched.years.values().copied().collect();
    labels.shuffle(rng);
    RolloutSchedule {
        years: sched.years.keys().cloned().zip(labels).collect(),
    }
}

pub fn scramble_schedule(sched: &RolloutSchedule, seed: u64) -> RolloutSchedule {
    scramble_with(sched, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn d(y: i32, m: u32, day: u32) -> Date {
        Date::from_ymd(y, m, day).unwrap()
    }

    fn sched(entries: &[(&str, i32)]) -> RolloutSchedule {
        RolloutSchedule::new(entries.iter().map(|(k, y)| (*k, FiscalYear(*y)))).unwrap()
    }

    #[test]
    fn birth_year_examples() {
        assert_eq!(estimate_birth_year(d(2011, 7, 1), 26), 1985);
        assert_eq!(estimate_birth_year(d(2012, 6, 30), 26), 1986);
        assert_eq!(estimate_birth_year(d(2012, 1, 1), 0), 2012);
    }

    #[test]
    fn birth_year_steps_at_new_year() {
        for age in [21u32, 26] {
            let before = estimate_birth_year(d(2011, 12, 31), age);
            let after = estimate_birth_year(d(2012, 1, 1), age);
            assert_eq!(after, before + 1);
        }
    }

    #[test]
    fn fiscal_year_parsing() {
        assert_eq!("1985".parse::<FiscalYear>().unwrap(), FiscalYear(1985));
        assert_eq!("FY1987".parse::<FiscalYear>().unwrap(), FiscalYear(1987));
        assert_eq!("1986-87".parse::<FiscalYear>().unwrap(), FiscalYear(1986));
        assert!("FYx".parse::<FiscalYear>().is_err());
    }

    #[test]
    fn duplicate_schedule_entry_rejected() {
        assert!(RolloutSchedule::new([("a", FiscalYear(1985)), ("a", FiscalYear(1986))]).is_err());
    }

    #[test]
    fn resolve_examples() {
        let rules = TreatmentRules::default();
        let s = sched(&[("p1", 1985), ("p2", 1987), ("p3", 1987), ("p4", 1986), ("p5", 1988)]);
        let mut c = Concordance::new();
        c.add("single", "p1", 3.0).unwrap();
        c.add("agree", "p2", 1.0).unwrap();
        c.add("agree", "p3", 1.0).unwrap();
        c.add("mixed", "p4", 1.0).unwrap();
        c.add("mixed", "p5", 1.0).unwrap();
        c.add("orphan", "nowhere", 1.0).unwrap();
        assert_eq!(resolve_rollout_year("single", &c, &s, &rules).year(), Some(FiscalYear(1985)));
        assert_eq!(
            resolve_rollout_year("agree", &c, &s, &rules),
            Resolution::Resolved { year: FiscalYear(1987), sd: 0.0 }
        );
        // equal weights on 1986 and 1988: mean 1987, sd sqrt(0.5*1 + 0.5*1) = 1
        assert_eq!(
            resolve_rollout_year("mixed", &c, &s, &rules),
            Resolution::Missing(MissingReason::MixedParentage { sd: 1.0 })
        );
        assert_eq!(
            resolve_rollout_year("unknown", &c, &s, &rules),
            Resolution::Missing(MissingReason::Unmapped)
        );
        assert!(matches!(
            resolve_rollout_year("orphan", &c, &s, &rules),
            Resolution::Missing(MissingReason::UnscheduledParent(_))
        ));
    }

    #[test]
    fn small_disagreement_rounds() {
        let rules = TreatmentRules::default();
        let s = sched(&[("big", 1987), ("tiny", 1988)]);
        let mut c = Concordance::new();
        c.add("x", "big", 999.0).unwrap();
        c.add("x", "tiny", 1.0).unwrap();
        match resolve_rollout_year("x", &c, &s, &rules) {
            Resolution::Resolved { year, sd } => {
                assert_eq!(year, FiscalYear(1987));
                assert!(sd < 0.1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    fn person(district: &str, interview: Date, age: u32) -> Observation {
        Observation {
            person_id: "p".into(),
            district: district.into(),
            interview,
            age,
            weight: 1.0,
            numeric: BTreeMap::new(),
            categorical: BTreeMap::new(),
        }
    }

    #[test]
    fn anantapur_example() {
        let rules = TreatmentRules::default();
        let s = sched(&[("anantapur", 1985), ("a", 1986), ("b", 1989)]);
        let mut c = Concordance::identity(["anantapur"]);
        c.add("mixed", "a", 1.0).unwrap();
        c.add("mixed", "b", 1.0).unwrap();
        let early = person("anantapur", d(2011, 7, 1), 26);
        let late = person("anantapur", d(2012, 6, 30), 26);
        assert_eq!(assign_treatment(&early, &c, &s, &rules), Treatment::Untreated);
        assert_eq!(assign_treatment(&late, &c, &s, &rules), Treatment::Treated);
        let m = person("mixed", d(2012, 6, 30), 21);
        assert_eq!(assign_treatment(&m, &c, &s, &rules), Treatment::Missing);
    }

    #[test]
    fn threshold_offset_is_configurable() {
        let rules = TreatmentRules { threshold_offset: 0, ..Default::default() };
        let s = sched(&[("x", 1985)]);
        let c = Concordance::identity(["x"]);
        let p = person("x", d(2011, 7, 1), 26);
        assert_eq!(assign_treatment(&p, &c, &s, &rules), Treatment::Treated);
    }

    #[test]
    fn single_year_schedule_scrambles_to_itself() {
        let s = sched(&[("a", 1987), ("b", 1987), ("c", 1987)]);
        for seed in 0..20 {
            assert_eq!(scramble_schedule(&s, seed), s);
        }
    }

    #[test]
    fn two_district_scramble_is_fair() {
        // Two arrangements, each with probability 1/2.
        let s = sched(&[("a", 1985), ("b", 1989)]);
        let n = 10_000u64;
        let same = (0..n)
            .filter(|&seed| scramble_schedule(&s, seed) == s)
            .count() as f64;
        let p = same / n as f64;
        let se = libm::sqrt(0.25 / n as f64);
        assert!((p - 0.5).abs() < 3.0 * se, "frequency {p}");
    }

    #[test]
    fn replication_streams_differ() {
        let s = sched(&[("a", 1985), ("b", 1986), ("c", 1987), ("d", 1988), ("e", 1989), ("f", 1985)]);
        let draws: Vec<_> = (0..8).map(|k| scramble_with(&s, &mut replication_rng(7, k))).collect();
        assert!(draws.iter().any(|x| x != &draws[0]));
        assert_eq!(scramble_with(&s, &mut replication_rng(7, 3)), draws[3]);
    }

    fn arb_schedule() -> impl Strategy<Value = RolloutSchedule> {
        prop::collection::vec(1985i32..=1989, 1..40).prop_map(|ys| {
            RolloutSchedule::new(
                ys.into_iter()
                    .enumerate()
                    .map(|(i, y)| (format!("d{i:03}"), FiscalYear(y))),
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn scramble_preserves_counts(s in arb_schedule(), seed in any::<u64>()) {
            let out = scramble_schedule(&s, seed);
            prop_assert_eq!(out.counts(), s.counts());
            prop_assert!(out.iter().map(|(k, _)| k).eq(s.iter().map(|(k, _)| k)));
        }

        #[test]
        fn oldest_never_and_youngest_always_treated(
            s in arb_schedule(), seed in any::<u64>(), day in 0i32..366
        ) {
            let rules = TreatmentRules::default();
            let out = scramble_schedule(&s, seed);
            let interview = d(2011, 7, 1).add_days(day);
            let c = Concordance::identity(out.iter().map(|(k, _)| k.to_string()));
            for (district, _) in out.iter() {
                // estimated birth years 1985 and 1991
                let old = person(district, interview, (interview.year() - 1985) as u32);
                let young = person(district, interview, (interview.year() - 1991) as u32);
                prop_assert_eq!(assign_treatment(&old, &c, &out, &rules), Treatment::Untreated);
                prop_assert_eq!(assign_treatment(&young, &c, &out, &rules), Treatment::Treated);
            }
        }

        #[test]
        fn treated_share_rises_with_birth_year(s in arb_schedule(), seed in any::<u64>()) {
            let rules = TreatmentRules::default();
            let out = scramble_schedule(&s, seed);
            let share = |by: i32| {
                out.iter().filter(|(_, fy)| by >= rules.threshold_year(*fy)).count()
            };
            for by in 1984..1992 {
                prop_assert!(share(by) <= share(by + 1));
            }
        }

        #[test]
        fn resolution_ignores_parent_order(
            parents in prop::collection::vec((1985i32..=1989, 0.1f64..10.0), 1..6),
            rot in 0usize..6,
        ) {
            let rules = TreatmentRules::default();
            let s = RolloutSchedule::new(
                parents.iter().enumerate().map(|(i, (y, _))| (format!("p{i}"), FiscalYear(*y)))
            ).unwrap();
            let mut a = Concordance::new();
            let mut b = Concordance::new();
            for (i, (_, w)) in parents.iter().enumerate() {
                a.add("x", &format!("p{i}"), *w).unwrap();
            }
            let n = parents.len();
            for j in 0..n {
                let i = (j + rot) % n;
                b.add("x", &format!("p{i}"), parents[i].1).unwrap();
            }
            prop_assert_eq!(
                resolve_rollout_year("x", &a, &s, &rules),
                resolve_rollout_year("x", &b, &s, &rules)
            );
        }
    }

    #[test]
    fn assignment_invariant_holds() {
        let rules = TreatmentRules::default();
        let s = sched(&[("a", 1985), ("b", 1988)]);
        let c = Concordance::identity(["a", "b"]);
        let mut rows = vec![];
        for (i, district) in ["a", "b", "z"].iter().enumerate() {
            for age in 21..=26 {
                let mut p = person(district, d(2011, 7, 1).add_days(40 * age as i32 + i as i32), age);
                p.person_id = format!("{district}{age}");
                rows.push(p);
            }
        }
        let t = ObservationTable::from_rows("s", rows).unwrap();
        let a = TreatmentAssignment::compute(&t, &c, &s, &rules);
        for (i, st) in a.status.iter().enumerate() {
            let district = &t.districts()[i];
            if *st == Treatment::Treated {
                let fy = s.get(district).unwrap();
                assert!(a.birth_year[i] >= rules.threshold_year(fy));
            }
            if district == "z" {
                assert_eq!(*st, Treatment::Missing);
            }
        }
    }
}
