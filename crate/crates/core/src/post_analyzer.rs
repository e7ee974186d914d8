//! Confirms suspected hijacks by looking for a jump in the suspect origin's
//! global hegemony, and groups confirmed hijacks into events.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::HegemonySeries;
use crate::prefix::{Asn, Prefix};
use crate::rov::RouteKey;

pub const WINDOW_SIZE: usize = 50;
/// Windows shorter than this carry too little history to test against.
pub const MIN_HISTORY: usize = 5;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const PERSISTENCE_HORIZON_SECS: i64 = 24 * 3600;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("only {samples} hegemony samples before the announcement")]
pub struct InsufficientHistory {
    pub samples: usize,
}

/// Recent hegemony values preceding an announcement.
#[derive(Clone, Debug, PartialEq)]
pub struct VisibilityWindow {
    values: Vec<f64>,
    mu: f64,
    sigma: f64,
}

impl VisibilityWindow {
    /// Mean and population standard deviation of `values`.
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len().max(1) as f64;
        // a constant window gets exact moments; summation error would
        // otherwise leave a tiny nonzero sigma
        if values.windows(2).all(|w| w[0] == w[1]) {
            let mu = values.first().copied().unwrap_or(0.0);
            return VisibilityWindow {
                values,
                mu,
                sigma: 0.0,
            };
        }
        let mu = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        VisibilityWindow {
            values,
            mu,
            sigma: var.sqrt(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Fewer than [`WINDOW_SIZE`] samples were available.
    pub fn is_short(&self) -> bool {
        self.values.len() < WINDOW_SIZE
    }
}

/// Up to [`WINDOW_SIZE`] samples strictly before `t`, oldest first.
pub fn window(series: &HegemonySeries, t: i64) -> Result<VisibilityWindow, InsufficientHistory> {
    let before = series.before(t);
    if before.len() < MIN_HISTORY {
        return Err(InsufficientHistory {
            samples: before.len(),
        });
    }
    let start = before.len().saturating_sub(WINDOW_SIZE);
    Ok(VisibilityWindow::from_values(
        before[start..].iter().map(|s| s.1).collect(),
    ))
}

/// Standard normal CDF.
pub fn phi(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Right tail `1 - Φ(z)`, computed directly to keep precision far out.
pub fn right_tail(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZTest {
    /// `None` when the window has zero spread.
    pub z: Option<f64>,
    pub p_right: f64,
    pub anomalous: bool,
}

/// Right-tailed test of `observed` against the window. With zero spread
/// the observation is anomalous iff it exceeds the mean, and `p_right` is
/// 0 or 1 accordingly.
pub fn z_test(win: &VisibilityWindow, observed: f64, alpha: f64) -> ZTest {
    if win.sigma == 0.0 {
        let anomalous = observed > win.mu;
        return ZTest {
            z: None,
            p_right: if anomalous { 0.0 } else { 1.0 },
            anomalous,
        };
    }
    let z = (observed - win.mu) / win.sigma;
    let p_right = right_tail(z);
    ZTest {
        z: Some(z),
        p_right,
        anomalous: p_right < alpha,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Verified,
    Unverified,
    NewPolicy,
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VerdictKind::Verified => "verified",
            VerdictKind::Unverified => "unverified",
            VerdictKind::NewPolicy => "new_policy",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub z: Option<f64>,
    pub p_right: Option<f64>,
}

impl Verdict {
    fn unverified() -> Self {
        Verdict {
            kind: VerdictKind::Unverified,
            z: None,
            p_right: None,
        }
    }
}

/// Tests the first sample at or after `t` against the window before `t`.
/// Missing history or a missing observation yields Unverified.
pub fn verify(series: Option<&HegemonySeries>, t: i64, alpha: f64) -> Verdict {
    let Some(series) = series else {
        return Verdict::unverified();
    };
    let Ok(win) = window(series, t) else {
        return Verdict::unverified();
    };
    let Some((_, observed)) = series.first_at_or_after(t) else {
        return Verdict::unverified();
    };
    let test = z_test(&win, observed, alpha);
    Verdict {
        kind: if test.anomalous {
            VerdictKind::Verified
        } else {
            VerdictKind::Unverified
        },
        z: test.z,
        p_right: Some(test.p_right),
    }
}

/// True iff every sample in `(t, t + horizon]` is anomalous against the
/// pre-`t` window and the series reaches `t + horizon`.
pub fn persistence_check(series: &HegemonySeries, t: i64, horizon: i64, alpha: f64) -> bool {
    let Ok(win) = window(series, t) else {
        return false;
    };
    let after = series.range_after(t, t + horizon);
    let covered = series.samples().last().is_some_and(|s| s.0 >= t + horizon);
    !after.is_empty() && covered && after.iter().all(|(_, v)| z_test(&win, *v, alpha).anomalous)
}

/// Verification followed by the persistence check: a verified route whose
/// new visibility level holds for the whole horizon becomes NewPolicy.
pub fn analyze(series: Option<&HegemonySeries>, t: i64, alpha: f64, horizon: i64) -> Verdict {
    let mut v = verify(series, t, alpha);
    if v.kind == VerdictKind::Verified
        && series.is_some_and(|s| persistence_check(s, t, horizon, alpha))
    {
        v.kind = VerdictKind::NewPolicy;
    }
    v
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HijackEvent {
    pub origin: Asn,
    pub date: NaiveDate,
    pub routes: BTreeSet<RouteKey>,
}

pub fn utc_day(ts: i64) -> NaiveDate {
    DateTime::from_timestamp(ts, 0)
        .map(|d| d.date_naive())
        .unwrap_or(NaiveDate::MIN)
}

/// One event per (origin, UTC day), ordered by day then origin.
pub fn group_events<'a>(routes: impl IntoIterator<Item = (&'a RouteKey, i64)>) -> Vec<HijackEvent> {
    let mut by: BTreeMap<(NaiveDate, Asn), BTreeSet<RouteKey>> = BTreeMap::new();
    for (key, ts) in routes {
        by.entry((utc_day(ts), key.origin))
            .or_default()
            .insert(*key);
    }
    by.into_iter()
        .map(|((date, origin), routes)| HijackEvent {
            origin,
            date,
            routes,
        })
        .collect()
}

/// One line of the verification report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationRecord {
    pub origin: Asn,
    pub prefix: Prefix,
    pub ts: i64,
    pub z: Option<f64>,
    pub p_right: Option<f64>,
    pub verdict: VerdictKind,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::HegemonyScope;
    use proptest::prelude::*;

    fn series(samples: Vec<(i64, f64)>) -> HegemonySeries {
        HegemonySeries::new(HegemonyScope::Global { asn: Asn(7) }, samples)
    }

    /// Φ by composite Simpson integration of the normal density from -12.
    fn phi_oracle(z: f64) -> f64 {
        let a = -12.0;
        if z <= a {
            return 0.0;
        }
        let n = 20_000;
        let h = (z - a) / n as f64;
        let pdf = |x: f64| (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = pdf(a) + pdf(z);
        for i in 1..n {
            let x = a + h * i as f64;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(x);
        }
        s * h / 3.0
    }

    #[test]
    fn phi_matches_integration() {
        for z in [-3.0, -1.0, 0.0, 0.5, 1.6449, 2.0, 4.0] {
            assert!((phi(z) - phi_oracle(z)).abs() < 1e-9, "{z}");
        }
        assert!((phi(1.6448536269514722) - 0.95).abs() < 1e-12);
    }

    #[test]
    fn window_sizes() {
        let s = series((0..60).map(|i| (i, i as f64 / 100.0)).collect());
        let w = window(&s, 60).unwrap();
        assert_eq!(w.values().len(), 50);
        assert_eq!(w.values()[0], 0.10);
        assert!(!w.is_short());

        let s = series((0..10).map(|i| (i, 0.1)).collect());
        let w = window(&s, 100).unwrap();
        assert_eq!(w.values().len(), 10);
        assert!(w.is_short());

        assert_eq!(
            window(&series(vec![]), 5),
            Err(InsufficientHistory { samples: 0 })
        );
        let s = series((0..4).map(|i| (i, 0.1)).collect());
        assert_eq!(window(&s, 100), Err(InsufficientHistory { samples: 4 }));
        // the sample at t itself is excluded
        let s = series((0..6).map(|i| (i, 0.1)).collect());
        assert_eq!(window(&s, 5).unwrap().values().len(), 5);
    }

    #[test]
    fn z_test_examples() {
        let flat = VisibilityWindow::from_values(vec![0.1; 20]);
        let t = z_test(&flat, 0.1, 0.05);
        assert!(!t.anomalous);
        assert_eq!(t.z, None);
        assert!(z_test(&flat, 0.11, 0.05).anomalous);

        let w = VisibilityWindow::from_values(vec![0.09, 0.11]);
        assert!((w.mu() - 0.1).abs() < 1e-15);
        assert!((w.sigma() - 0.01).abs() < 1e-12);
        let t = z_test(&w, 0.15, 0.05);
        assert!((t.z.unwrap() - 5.0).abs() < 1e-9);
        assert!((t.p_right - 2.866515719e-7).abs() < 1e-12);
        assert!(t.anomalous);
    }

    #[test]
    fn spike_verified_flat_not() {
        let mut samples: Vec<(i64, f64)> = (0..50)
            .map(|i| (i * 3600, 0.01 + 0.001 * (i % 3) as f64))
            .collect();
        samples.push((50 * 3600, 0.2));
        let s = series(samples);
        assert_eq!(
            verify(Some(&s), 50 * 3600, 0.05).kind,
            VerdictKind::Verified
        );
        let flat = series((0..60).map(|i| (i * 3600, 0.05)).collect());
        assert_eq!(
            verify(Some(&flat), 55 * 3600, 0.05).kind,
            VerdictKind::Unverified
        );
        assert_eq!(verify(None, 0, 0.05).kind, VerdictKind::Unverified);
        assert_eq!(
            verify(Some(&series(vec![])), 0, 0.05).kind,
            VerdictKind::Unverified
        );
    }

    #[test]
    fn rising_baseline_masks_event() {
        // history already climbing steeply towards the event level
        let mut samples: Vec<(i64, f64)> = (0..50).map(|i| (i * 3600, 0.004 * i as f64)).collect();
        samples.push((50 * 3600, 0.18));
        let s = series(samples);
        assert_eq!(
            verify(Some(&s), 50 * 3600, 0.05).kind,
            VerdictKind::Unverified
        );
    }

    #[test]
    fn persistence_rules() {
        let h = 3600;
        let base: Vec<(i64, f64)> = (0..50)
            .map(|i| (i * h, 0.01 + 0.001 * (i % 3) as f64))
            .collect();
        let t = 50 * h;

        let mut step = base.clone();
        step.extend((0..=24).map(|i| (t + i * h, 0.2)));
        let s = series(step);
        assert!(persistence_check(&s, t, PERSISTENCE_HORIZON_SECS, 0.05));
        assert_eq!(
            analyze(Some(&s), t, 0.05, PERSISTENCE_HORIZON_SECS).kind,
            VerdictKind::NewPolicy
        );

        let mut spike = base.clone();
        spike.push((t, 0.2));
        spike.extend((1..=24).map(|i| (t + i * h, if i < 3 { 0.2 } else { 0.011 })));
        let s = series(spike);
        assert!(!persistence_check(&s, t, PERSISTENCE_HORIZON_SECS, 0.05));
        assert_eq!(
            analyze(Some(&s), t, 0.05, PERSISTENCE_HORIZON_SECS).kind,
            VerdictKind::Verified
        );

        let mut empty = base.clone();
        empty.push((t, 0.2));
        assert!(!persistence_check(
            &series(empty),
            t,
            PERSISTENCE_HORIZON_SECS,
            0.05
        ));

        // high so far but the horizon has not elapsed yet
        let mut partial = base;
        partial.extend((0..10).map(|i| (t + i * h, 0.2)));
        assert!(!persistence_check(
            &series(partial),
            t,
            PERSISTENCE_HORIZON_SECS,
            0.05
        ));
    }

    #[test]
    fn events_by_origin_and_day() {
        let p = |s: &str| -> Prefix { s.parse().unwrap() };
        let k = |o: u32, s: &str| RouteKey::new(Asn(o), p(s));
        let day = 1_664_582_400;
        let routes = [
            (k(1, "10.0.0.0/24"), day + 10),
            (k(1, "10.0.1.0/24"), day + 20),
            (k(1, "10.0.2.0/24"), day + 86_399),
        ];
        let ev = group_events(routes.iter().map(|(k, t)| (k, *t)));
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].routes.len(), 3);

        let across = [
            (k(1, "10.0.0.0/24"), day + 86_399),
            (k(1, "10.0.1.0/24"), day + 86_400),
        ];
        assert_eq!(group_events(across.iter().map(|(k, t)| (k, *t))).len(), 2);

        let mixed = [
            (k(2, "10.0.0.0/24"), day),
            (k(1, "10.0.1.0/24"), day),
            (k(2, "11.0.0.0/24"), day),
        ];
        let ev = group_events(mixed.iter().map(|(k, t)| (k, *t)));
        assert_eq!(
            ev.iter().map(|e| e.origin).collect::<Vec<_>>(),
            vec![Asn(1), Asn(2)]
        );
        assert_eq!(ev[1].routes.len(), 2);
    }

    proptest! {
        #[test]
        fn monotone_in_observation(vals in prop::collection::vec(0.0f64..1.0, 5..50), a in 0.0f64..2.0, b in 0.0f64..2.0) {
            let w = VisibilityWindow::from_values(vals);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            if z_test(&w, lo, 0.05).anomalous {
                prop_assert!(z_test(&w, hi, 0.05).anomalous);
            }
        }

        #[test]
        fn flat_window_never_verifies_below_mean(v in 0.0f64..1.0, below in 0.0f64..1.0) {
            let w = VisibilityWindow::from_values(vec![v; 10]);
            prop_assert!(!z_test(&w, v * below, 0.05).anomalous);
        }
    }
}
