//! Fixed-effect groupings, singleton dropping and within-transformation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// One dimension of a fixed-effect cell.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Factor {
    /// Follow-up district of the respondent.
    District,
    /// Estimated birth year (interview year minus age).
    BirthYear,
    /// Completed years of age at interview.
    Age,
    /// Calendar month of interview.
    SurveyMonth,
    /// A categorical column of the table.
    Column(String),
}

impl Factor {
    pub fn name(&self) -> &str {
        match self {
            Factor::District => "district",
            Factor::BirthYear => "birth_year",
            Factor::Age => "age",
            Factor::SurveyMonth => "survey_month",
            Factor::Column(c) => c,
        }
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Factor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(match s {
            "" => return Err(Error::Invalid("empty factor name".into())),
            "district" => Factor::District,
            "birth_year" => Factor::BirthYear,
            "age" => Factor::Age,
            "survey_month" => Factor::SurveyMonth,
            other => Factor::Column(other.to_string()),
        })
    }
}

/// A fixed-effect grouping: one factor, or an interaction written `a*b`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Grouping(pub Vec<Factor>);

impl Grouping {
    pub fn single(f: Factor) -> Self {
        Grouping(vec![f])
    }

    pub fn interaction(fs: impl IntoIterator<Item = Factor>) -> Self {
        Grouping(fs.into_iter().collect())
    }
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, factor) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("*")?;
            }
            write!(f, "{factor}")?;
        }
        Ok(())
    }
}

impl FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let factors = s.split('*').map(str::parse).collect::<Result<Vec<Factor>>>()?;
        Ok(Grouping(factors))
    }
}

#[cfg(feature = "serde")]
mod serde_impls {
    use super::*;
    use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

    impl Serialize for Grouping {
        fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
            s.collect_str(self)
        }
    }

    impl<'de> Deserialize<'de> for Grouping {
        fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
            String::deserialize(d)?
                .parse()
                .map_err(|e: Error| de::Error::custom(e.to_string()))
        }
    }

    impl Serialize for Factor {
        fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
            s.collect_str(self)
        }
    }

    impl<'de> Deserialize<'de> for Factor {
        fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
            String::deserialize(d)?
                .parse()
                .map_err(|e: Error| de::Error::custom(e.to_string()))
        }
    }
}

/// Value of one factor for one row.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum KeyPart {
    Int(i64),
    Str(String),
}

/// Dense cell ids of one grouping; ids follow the sorted order of cell keys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeGroup {
    pub name: String,
    pub ids: Vec<u32>,
    pub n_levels: usize,
}

impl FeGroup {
    pub fn from_keys<K: Ord + Clone>(name: &str, keys: &[K]) -> Self {
        let mut levels: BTreeMap<K, u32> = keys.iter().map(|k| (k.clone(), 0)).collect();
        for (i, v) in levels.values_mut().enumerate() {
            *v = i as u32;
        }
        FeGroup {
            name: name.to_string(),
            ids: keys.iter().map(|k| levels[k]).collect(),
            n_levels: levels.len(),
        }
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        let keys: Vec<u32> = rows.iter().map(|&i| self.ids[i]).collect();
        Self::from_keys(&self.name, &keys)
    }

    fn counts(&self) -> Vec<usize> {
        let mut c = vec![0usize; self.n_levels];
        for &id in &self.ids {
            c[id as usize] += 1;
        }
        c
    }
}

/// Iteratively removes rows that are alone in a cell of any grouping, until
/// no singleton remains. Returns the surviving row positions and the number
/// dropped.
pub fn drop_singletons(groups: &[FeGroup]) -> Result<(Vec<usize>, usize)> {
    let n = groups.first().map_or(0, |g| g.ids.len());
    let mut alive = vec![true; n];
    let mut counts: Vec<Vec<usize>> = groups.iter().map(FeGroup::counts).collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            if groups
                .iter()
                .zip(&counts)
                .any(|(g, c)| c[g.ids[i] as usize] == 1)
            {
                alive[i] = false;
                changed = true;
                for (g, c) in groups.iter().zip(counts.iter_mut()) {
                    c[g.ids[i] as usize] -= 1;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let kept: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();
    if n > 0 && kept.is_empty() {
        return Err(Error::Degenerate("every row is a fixed-effect singleton".into()));
    }
    let dropped = n - kept.len();
    Ok((kept, dropped))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct AbsorbOptions {
    /// Convergence threshold on the largest change of any element in a sweep.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for AbsorbOptions {
    fn default() -> Self {
        AbsorbOptions {
            tolerance: 1e-10,
            max_sweeps: 10_000,
        }
    }
}

fn demean_once(x: &mut [f64], g: &FeGroup, w: &[f64], sums: &mut [f64], wsum: &[f64]) -> f64 {
    sums.iter_mut().for_each(|s| *s = 0.0);
    for ((&id, &xi), &wi) in g.ids.iter().zip(x.iter()).zip(w) {
        sums[id as usize] += wi * xi;
    }
    let mut max_change = 0.0f64;
    for (s, &ws) in sums.iter_mut().zip(wsum) {
        *s /= ws;
        max_change = max_change.max(s.abs());
    }
    for (xi, &id) in x.iter_mut().zip(&g.ids) {
        *xi -= sums[id as usize];
    }
    max_change
}

/// Removes weighted cell means of every grouping from each column in place.
///
/// A single grouping is one exact pass. Several groupings use alternating
/// projections until the largest change in a sweep is below the tolerance.
/// Returns the largest sweep count used by any column.
pub fn absorb_fe(
    columns: &mut [Vec<f64>],
    groups: &[FeGroup],
    weights: &[f64],
    opts: &AbsorbOptions,
) -> Result<usize> {
    if groups.is_empty() {
        return Err(Error::Invalid("no fixed-effect groupings to absorb".into()));
    }
    let wsums: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let mut s = vec![0.0; g.n_levels];
            for (&id, &w) in g.ids.iter().zip(weights) {
                s[id as usize] += w;
            }
            s
        })
        .collect();
    let mut scratch: Vec<Vec<f64>> = groups.iter().map(|g| vec![0.0; g.n_levels]).collect();
    let mut max_sweeps = 0;
    for col in columns.iter_mut() {
        if groups.len() == 1 {
            demean_once(col, &groups[0], weights, &mut scratch[0], &wsums[0]);
            max_sweeps = max_sweeps.max(1);
            continue;
        }
        let mut sweep = 0;
        loop {
            sweep += 1;
            let mut change = 0.0f64;
            for ((g, s), ws) in groups.iter().zip(scratch.iter_mut()).zip(&wsums) {
                change = change.max(demean_once(col, g, weights, s, ws));
            }
            if change < opts.tolerance {
                break;
            }
            if sweep >= opts.max_sweeps {
                return Err(Error::NotConverged {
                    iterations: sweep,
                    achieved: change,
                });
            }
        }
        max_sweeps = max_sweeps.max(sweep);
    }
    Ok(max_sweeps)
}

/// Degrees of freedom absorbed by the fixed effects.
///
/// The first grouping counts all its levels. For a second grouping the
/// redundant levels are found exactly: levels minus the number of connected
/// components of the bipartite graph linking the two groupings' cells.
/// Every further grouping counts its levels minus one.
pub fn absorbed_dof(groups: &[FeGroup]) -> usize {
    let Some(first) = groups.first() else {
        return 0;
    };
    let mut dof = first.n_levels;
    if let Some(second) = groups.get(1) {
        let components = connected_components(first, second);
        dof += second.n_levels - components;
    }
    for g in groups.iter().skip(2) {
        dof += g.n_levels.saturating_sub(1);
    }
    dof
}

fn connected_components(a: &FeGroup, b: &FeGroup) -> usize {
    let n = a.n_levels + b.n_levels;
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (&ia, &ib) in a.ids.iter().zip(&b.ids) {
        let ra = find(&mut parent, ia as usize);
        let rb = find(&mut parent, a.n_levels + ib as usize);
        if ra != rb {
            parent[ra] = rb;
        }
    }
    (0..n).filter(|&x| find(&mut parent, x) == x).count()
}

pub(crate) fn grouping_error(g: &Grouping, reason: &str) -> Error {
    Error::Invalid(format!("fixed-effect grouping `{g}`: {reason}"))
}
