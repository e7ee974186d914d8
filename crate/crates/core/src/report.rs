//! Occurrence and frequency statistics over day-by-day sightings.
//!
//! An occurrence is the appearance of an object (a route or an AS) on one
//! day. The frequency of an object seen on several days is the mean gap in
//! days between consecutive appearances; it is undefined for objects seen
//! once.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// Gap, in days, below which the summary counts a frequency as short.
pub const SHORT_FREQUENCY_DAYS: f64 = 14.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Occurrence {
    pub occurrences: usize,
    pub frequency: Option<f64>,
}

pub fn occurrence(days: &BTreeSet<NaiveDate>) -> Occurrence {
    let frequency = match (days.first(), days.last()) {
        (Some(a), Some(b)) if days.len() > 1 => {
            Some((*b - *a).num_days() as f64 / (days.len() - 1) as f64)
        }
        _ => None,
    };
    Occurrence {
        occurrences: days.len(),
        frequency,
    }
}

pub fn occurrences<K: Ord + Clone>(
    sightings: &BTreeMap<K, BTreeSet<NaiveDate>>,
) -> BTreeMap<K, Occurrence> {
    sightings
        .iter()
        .map(|(k, days)| (k.clone(), occurrence(days)))
        .collect()
}

/// Nearest-rank percentile: the smallest value with at least `p` percent
/// of the data at or below it. `None` for empty input or `p` outside
/// (0, 100].
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() || !(p > 0.0 && p <= 100.0) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    // p·n before dividing keeps whole ranks exact
    let rank = (p * v.len() as f64 / 100.0).ceil() as usize;
    Some(v[rank.clamp(1, v.len()) - 1])
}

/// Empirical CDF as (value, fraction of data ≤ value) at each distinct value.
pub fn ecdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, x) in v.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *x => last.1 = frac,
            _ => out.push((*x, frac)),
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OccurrenceSummary {
    pub objects: usize,
    /// Objects seen on at least two days.
    pub multi_day: usize,
    pub multi_day_share: f64,
    pub occurrence_p80: Option<f64>,
    /// Over multi-day objects only.
    pub frequency_p80: Option<f64>,
    /// Share of multi-day objects whose frequency is under
    /// [`SHORT_FREQUENCY_DAYS`].
    pub short_frequency_share: Option<f64>,
}

pub fn summarize<K>(stats: &BTreeMap<K, Occurrence>) -> OccurrenceSummary {
    let occ: Vec<f64> = stats.values().map(|o| o.occurrences as f64).collect();
    let freq: Vec<f64> = stats.values().filter_map(|o| o.frequency).collect();
    let objects = stats.len();
    let multi_day = freq.len();
    OccurrenceSummary {
        objects,
        multi_day,
        multi_day_share: if objects == 0 {
            0.0
        } else {
            multi_day as f64 / objects as f64
        },
        occurrence_p80: percentile(&occ, 80.0),
        frequency_p80: percentile(&freq, 80.0),
        short_frequency_share: (multi_day > 0).then(|| {
            freq.iter().filter(|f| **f < SHORT_FREQUENCY_DAYS).count() as f64 / multi_day as f64
        }),
    }
}

pub const CDF_CSV_HEADER: &str = "series,value,cdf";

/// Long-format CDF table, one block per named series.
pub fn cdf_csv(series: &[(&str, Vec<f64>)]) -> String {
    let mut out = String::from(CDF_CSV_HEADER);
    out.push('\n');
    for (name, values) in series {
        for (x, f) in ecdf(values) {
            out.push_str(&format!("{name},{x},{f}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2022, 10, day).unwrap()
    }

    /// Brute force: smallest data value whose share of data at or below it
    /// reaches p.
    fn percentile_oracle(values: &[f64], p: f64) -> f64 {
        let n = values.len() as f64;
        let mut best = f64::INFINITY;
        for x in values {
            let below = values.iter().filter(|y| **y <= *x).count() as f64;
            if below / n * 100.0 >= p - 1e-9 && *x < best {
                best = *x;
            }
        }
        best
    }

    #[test]
    fn occurrence_examples() {
        let once: BTreeSet<_> = [d(3)].into();
        assert_eq!(
            occurrence(&once),
            Occurrence {
                occurrences: 1,
                frequency: None
            }
        );
        let three: BTreeSet<_> = [d(1), d(4), d(11)].into();
        assert_eq!(occurrence(&three).frequency, Some(5.0));
        assert_eq!(occurrence(&BTreeSet::new()).occurrences, 0);
    }

    #[test]
    fn percentile_examples() {
        let v = [15.0, 20.0, 35.0, 40.0, 50.0];
        assert_eq!(percentile(&v, 30.0), Some(20.0));
        assert_eq!(percentile(&v, 40.0), Some(20.0));
        assert_eq!(percentile(&v, 80.0), Some(40.0));
        assert_eq!(percentile(&v, 100.0), Some(50.0));
        assert_eq!(percentile(&v, 0.0), None);
        assert_eq!(percentile(&[], 50.0), None);
    }

    #[test]
    fn summary_counts_multi_day() {
        let mut s: BTreeMap<u32, BTreeSet<NaiveDate>> = BTreeMap::new();
        s.insert(1, [d(1)].into());
        s.insert(2, [d(1), d(2)].into());
        s.insert(3, [d(1), d(29)].into());
        let sum = summarize(&occurrences(&s));
        assert_eq!(sum.objects, 3);
        assert_eq!(sum.multi_day, 2);
        assert_eq!(sum.short_frequency_share, Some(0.5));
        assert_eq!(sum.frequency_p80, Some(28.0));
    }

    #[test]
    fn cdf_table_ends_at_one() {
        let text = cdf_csv(&[("a", vec![2.0, 1.0, 2.0])]);
        assert_eq!(text, "series,value,cdf\na,1,0.3333333333333333\na,2,1\n");
    }

    proptest! {
        #[test]
        fn percentile_matches_brute_force(
            values in prop::collection::vec(0u32..40, 1..60),
            p in 1u32..=100,
        ) {
            let v: Vec<f64> = values.iter().map(|x| f64::from(*x)).collect();
            let p = f64::from(p);
            prop_assert_eq!(percentile(&v, p), Some(percentile_oracle(&v, p)));
        }

        #[test]
        fn ecdf_is_monotone(values in prop::collection::vec(-5.0f64..5.0, 1..50)) {
            let c = ecdf(&values);
            prop_assert!(c.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1));
            prop_assert_eq!(c.last().unwrap().1, 1.0);
        }
    }
}
