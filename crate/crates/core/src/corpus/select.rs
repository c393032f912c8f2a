use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What one unit of "mention" means when thresholding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountMode {
    /// Every matched name occurrence counts.
    #[default]
    Occurrences,
    /// Each article counts at most once per person.
    Articles,
}

/// Per-person, per-week mention counts over `weeks` weeks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionTable {
    weeks: usize,
    counts: BTreeMap<String, Vec<u64>>,
}

impl MentionTable {
    pub fn new(weeks: usize) -> Self {
        MentionTable {
            weeks,
            counts: BTreeMap::new(),
        }
    }

    /// Adds one article's mention counts to week `week` (0-based).
    pub fn record(&mut self, week: usize, mentions: &BTreeMap<String, u64>, mode: CountMode) {
        assert!(week < self.weeks, "week {week} outside table of {} weeks", self.weeks);
        for (name, &n) in mentions {
            if n == 0 {
                continue;
            }
            let row = self
                .counts
                .entry(name.clone())
                .or_insert_with(|| vec![0; self.weeks]);
            row[week] += match mode {
                CountMode::Occurrences => n,
                CountMode::Articles => 1,
            };
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, per_week: Vec<u64>) -> Result<()> {
        if per_week.len() != self.weeks {
            return Err(Error::Validation(format!(
                "expected {} weekly counts, got {}",
                self.weeks,
                per_week.len()
            )));
        }
        self.counts.insert(name.into(), per_week);
        Ok(())
    }

    pub fn weeks(&self) -> usize {
        self.weeks
    }

    pub fn counts(&self) -> &BTreeMap<String, Vec<u64>> {
        &self.counts
    }

    pub fn total(&self, name: &str) -> u64 {
        self.counts.get(name).map_or(0, |row| row.iter().sum())
    }
}

/// The ordered set of key figures; node `i` of every network is `names[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct KeyFigureSet {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl KeyFigureSet {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate key figure `{name}`")));
            }
        }
        Ok(KeyFigureSet { names, index })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

impl TryFrom<Vec<String>> for KeyFigureSet {
    type Error = Error;
    fn try_from(names: Vec<String>) -> Result<Self> {
        KeyFigureSet::new(names)
    }
}

impl From<KeyFigureSet> for Vec<String> {
    fn from(set: KeyFigureSet) -> Self {
        set.names
    }
}

/// Number of distinct weeks a name must appear in.
pub fn required_weeks(min_week_fraction: f64, weeks: usize) -> usize {
    // guard against 0.25 * 24 = 6.000000000000001 style round-up
    ((min_week_fraction * weeks as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Names with at least `min_mentions` total mentions that appear in at least
/// `ceil(min_week_fraction * T)` distinct weeks.
///
/// Ordered by descending total, ties broken by name. An empty selection is
/// returned as-is with a warning.
pub fn select_key_figures(
    table: &MentionTable,
    min_mentions: u64,
    min_week_fraction: f64,
) -> Result<KeyFigureSet> {
    if min_mentions < 1 {
        return Err(Error::Config("min_mentions must be at least 1".into()));
    }
    if !(min_week_fraction > 0.0 && min_week_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "min_week_fraction must lie in (0, 1], got {min_week_fraction}"
        )));
    }
    let need_weeks = required_weeks(min_week_fraction, table.weeks);

    let mut kept: Vec<(u64, &str)> = table
        .counts
        .iter()
        .filter_map(|(name, row)| {
            let total: u64 = row.iter().sum();
            let active = row.iter().filter(|&&c| c > 0).count();
            (total >= min_mentions && active >= need_weeks).then_some((total, name.as_str()))
        })
        .collect();
    kept.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));

    if kept.is_empty() {
        log::warn!(
            "no names reached {min_mentions} mentions across {need_weeks} of {} weeks",
            table.weeks
        );
    }
    KeyFigureSet::new(kept.into_iter().map(|(_, n)| n.to_string()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spread(total: u64, weeks: &[usize], t: usize) -> Vec<u64> {
        let mut row = vec![0; t];
        let per = total / weeks.len() as u64;
        let mut left = total;
        for (k, &w) in weeks.iter().enumerate() {
            let n = if k + 1 == weeks.len() { left } else { per };
            row[w] = n;
            left -= n;
        }
        row
    }

    #[test]
    fn ten_mentions_over_six_weeks_included() {
        let mut table = MentionTable::new(24);
        table.insert("A", spread(10, &[0, 3, 7, 9, 15, 20], 24)).unwrap();
        let set = select_key_figures(&table, 10, 0.25).unwrap();
        assert_eq!(set.names(), ["A"]);
    }

    #[test]
    fn burst_in_one_week_excluded() {
        let mut table = MentionTable::new(24);
        table.insert("A", spread(100, &[0], 24)).unwrap();
        assert!(select_key_figures(&table, 10, 0.25).unwrap().is_empty());
    }

    #[test]
    fn ordering_by_count_then_name() {
        let mut table = MentionTable::new(4);
        table.insert("Zed", vec![5, 5, 5, 5]).unwrap();
        table.insert("Amy", vec![5, 5, 5, 5]).unwrap();
        table.insert("Bob", vec![9, 9, 9, 9]).unwrap();
        let set = select_key_figures(&table, 1, 0.5).unwrap();
        assert_eq!(set.names(), ["Bob", "Amy", "Zed"]);
        assert_eq!(set.index_of("Zed"), Some(2));
    }

    #[test]
    fn toy_table_matches_exhaustive_filter() {
        let rows: Vec<(&str, Vec<u64>)> = vec![
            ("A", vec![3, 0, 4, 5, 0, 0, 1, 0]),
            ("B", vec![0, 0, 0, 0, 0, 0, 0, 40]),
            ("C", vec![1, 1, 1, 1, 1, 1, 1, 1]),
            ("D", vec![0, 2, 0, 2, 0, 2, 0, 2]),
            ("E", vec![9, 0, 0, 0, 0, 0, 0, 1]),
        ];
        let mut table = MentionTable::new(8);
        for (n, r) in &rows {
            table.insert(*n, r.clone()).unwrap();
        }
        for (min_m, frac) in [(1, 0.125), (8, 0.25), (8, 0.5), (10, 0.25), (2, 1.0)] {
            let got = select_key_figures(&table, min_m, frac).unwrap();
            let mut expect: Vec<&str> = Vec::new();
            for (n, r) in &rows {
                let mut total = 0;
                let mut active = 0;
                for c in r {
                    total += c;
                    if *c >= 1 {
                        active += 1;
                    }
                }
                if total >= min_m && (active as f64) >= frac * 8.0 {
                    expect.push(n);
                }
            }
            let mut got_sorted: Vec<&str> = got.names().iter().map(String::as_str).collect();
            got_sorted.sort();
            assert_eq!(got_sorted, expect, "thresholds ({min_m}, {frac})");
        }
    }

    #[test]
    fn invalid_thresholds_rejected() {
        let table = MentionTable::new(3);
        assert!(select_key_figures(&table, 0, 0.5).is_err());
        assert!(select_key_figures(&table, 1, 0.0).is_err());
        assert!(select_key_figures(&table, 1, 1.5).is_err());
    }

    #[test]
    fn record_respects_count_mode() {
        let mentions = BTreeMap::from([("A".to_string(), 3u64)]);
        let mut occ = MentionTable::new(2);
        occ.record(1, &mentions, CountMode::Occurrences);
        let mut art = MentionTable::new(2);
        art.record(1, &mentions, CountMode::Articles);
        assert_eq!(occ.counts()["A"], vec![0, 3]);
        assert_eq!(art.counts()["A"], vec![0, 1]);
    }

    proptest! {
        #[test]
        fn raising_min_mentions_never_adds(
            rows in prop::collection::vec(prop::collection::vec(0u64..6, 6), 1..8),
            lo in 1u64..10,
            extra in 0u64..10,
            frac in 0.05f64..1.0,
        ) {
            let mut table = MentionTable::new(6);
            for (i, r) in rows.into_iter().enumerate() {
                table.insert(format!("n{i}"), r).unwrap();
            }
            let low = select_key_figures(&table, lo, frac).unwrap();
            let high = select_key_figures(&table, lo + extra, frac).unwrap();
            for name in high.names() {
                prop_assert!(low.index_of(name).is_some());
            }
        }
    }
}
