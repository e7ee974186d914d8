use std::collections::BTreeMap;

use chrono::NaiveDateTime;

use super::{Diagnostic, Parsed};
use crate::prefix::Asn;

/// What a hegemony series measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HegemonyScope {
    /// Centrality of `asn` in the global graph (IHR `originasn = 0`).
    Global { asn: Asn },
    /// How much routes from `origin` depend on `dependent`.
    Local { origin: Asn, dependent: Asn },
}

/// Time-ordered hegemony samples for one scope.
#[derive(Clone, Debug, PartialEq)]
pub struct HegemonySeries {
    pub scope: HegemonyScope,
    samples: Vec<(i64, f64)>,
}

impl HegemonySeries {
    /// Sorts by timestamp; a repeated timestamp keeps the later value.
    pub fn new(scope: HegemonyScope, mut samples: Vec<(i64, f64)>) -> Self {
        samples.sort_by_key(|s| s.0);
        let mut dedup: Vec<(i64, f64)> = Vec::with_capacity(samples.len());
        for s in samples {
            match dedup.last_mut() {
                Some(last) if last.0 == s.0 => *last = s,
                _ => dedup.push(s),
            }
        }
        HegemonySeries {
            scope,
            samples: dedup,
        }
    }

    pub fn samples(&self) -> &[(i64, f64)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples with timestamp strictly before `t`.
    pub fn before(&self, t: i64) -> &[(i64, f64)] {
        let end = self.samples.partition_point(|s| s.0 < t);
        &self.samples[..end]
    }

    /// Nearest sample at or before `t`.
    pub fn at_or_before(&self, t: i64) -> Option<(i64, f64)> {
        let end = self.samples.partition_point(|s| s.0 <= t);
        end.checked_sub(1).map(|i| self.samples[i])
    }

    /// Earliest sample at or after `t`.
    pub fn first_at_or_after(&self, t: i64) -> Option<(i64, f64)> {
        let start = self.samples.partition_point(|s| s.0 < t);
        self.samples.get(start).copied()
    }

    /// Samples in the half-open interval `(from, to]`.
    pub fn range_after(&self, from: i64, to: i64) -> &[(i64, f64)] {
        let start = self.samples.partition_point(|s| s.0 <= from);
        let end = self.samples.partition_point(|s| s.0 <= to);
        &self.samples[start..end.max(start)]
    }
}

/// All hegemony series from one snapshot.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HegemonyStore {
    series: BTreeMap<HegemonyScope, HegemonySeries>,
}

impl HegemonyStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_series(series: impl IntoIterator<Item = HegemonySeries>) -> Self {
        HegemonyStore {
            series: series.into_iter().map(|s| (s.scope, s)).collect(),
        }
    }

    pub fn global(&self, asn: Asn) -> Option<&HegemonySeries> {
        self.series.get(&HegemonyScope::Global { asn })
    }

    pub fn local(&self, origin: Asn, dependent: Asn) -> Option<&HegemonySeries> {
        self.series.get(&HegemonyScope::Local { origin, dependent })
    }

    pub fn series(&self) -> impl Iterator<Item = &HegemonySeries> {
        self.series.values()
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }
}

/// Accepts epoch seconds or `YYYY-MM-DD[ T]HH:MM:SS` with an optional UTC suffix.
fn parse_timebin(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    let mut t = s.replace('T', " ");
    for suffix in ["+00:00", "+00", "Z"] {
        if let Some(stripped) = t.strip_suffix(suffix) {
            t = stripped.to_string();
            break;
        }
    }
    NaiveDateTime::parse_from_str(t.trim(), "%Y-%m-%d %H:%M:%S")
        .ok()
        .map(|dt| dt.and_utc().timestamp())
}

/// Parses IHR-style `timebin,originasn,asn,hege` rows, grouped by scope.
pub fn parse_hegemony(text: &str) -> Parsed<HegemonyStore> {
    let mut grouped: BTreeMap<HegemonyScope, Vec<(i64, f64)>> = BTreeMap::new();
    let mut diagnostics = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if i == 0 && line.starts_with("timebin") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 4 {
            diagnostics.push(Diagnostic::new(
                i + 1,
                "expected timebin,originasn,asn,hege",
            ));
            continue;
        }
        let Some(ts) = parse_timebin(fields[0]) else {
            diagnostics.push(Diagnostic::new(
                i + 1,
                format!("bad timebin {:?}", fields[0]),
            ));
            continue;
        };
        let (origin, asn) = match (
            fields[1].trim().parse::<u32>(),
            fields[2].trim().parse::<u32>(),
        ) {
            (Ok(o), Ok(a)) => (Asn(o), Asn(a)),
            _ => {
                diagnostics.push(Diagnostic::new(i + 1, "non-integer AS number"));
                continue;
            }
        };
        let value = match fields[3].trim().parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ => {
                diagnostics.push(Diagnostic::new(
                    i + 1,
                    format!("bad hegemony value {:?}", fields[3]),
                ));
                continue;
            }
        };
        let clamped = value.clamp(0.0, 1.0);
        if clamped != value {
            diagnostics.push(Diagnostic::new(
                i + 1,
                format!("hegemony {value} clamped to {clamped}"),
            ));
        }
        let scope = if origin.0 == 0 {
            HegemonyScope::Global { asn }
        } else {
            HegemonyScope::Local {
                origin,
                dependent: asn,
            }
        };
        grouped.entry(scope).or_default().push((ts, clamped));
    }
    let store = HegemonyStore::from_series(
        grouped
            .into_iter()
            .map(|(scope, samples)| HegemonySeries::new(scope, samples)),
    );
    Parsed::new(store, diagnostics)
}

pub fn write_hegemony(store: &HegemonyStore) -> String {
    let mut out = String::from("timebin,originasn,asn,hege\n");
    for s in store.series() {
        let (origin, asn) = match s.scope {
            HegemonyScope::Global { asn } => (0, asn.0),
            HegemonyScope::Local { origin, dependent } => (origin.0, dependent.0),
        };
        for (ts, v) in s.samples() {
            out.push_str(&format!("{ts},{origin},{asn},{v}\n"));
        }
    }
    out
}
