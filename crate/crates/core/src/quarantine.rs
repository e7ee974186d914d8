//! Quarantine of candidate routes and the whitelist they graduate into.
//!
//! Routes enter quarantine when the classifier calls them benign or the
//! post-analyzer cannot confirm a hijack. They leave through one of three
//! doors: the tightness fast path, 14 days of behavior monitoring, or an
//! operator decision. Deny decisions are permanent and beat everything.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::classifier::Importance;
use crate::error::{Error, Result};
use crate::features::{ConflictPair, FeatureVector, NUM_FEATURES};
use crate::prefix::{Asn, Prefix};
use crate::rov::{RouteKey, Validity};

pub const DEFAULT_T_THR: f64 = 0.3;
pub const QUARANTINE_DAYS: i64 = 14;
pub const PURGE_DAYS: i64 = 30;
pub const ACTIVITY_WINDOW_DAYS: i64 = 7;
pub const MIN_ACTIVE_DAYS: usize = 2;

/// Per-feature tightness weights, in feature order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TightnessWeights([f64; NUM_FEATURES]);

impl TightnessWeights {
    pub fn new(w: [f64; NUM_FEATURES]) -> Result<Self> {
        Importance::from_values(w).map(Self::from)
    }

    pub fn values(&self) -> [f64; NUM_FEATURES] {
        self.0
    }
}

impl From<Importance> for TightnessWeights {
    fn from(i: Importance) -> Self {
        TightnessWeights(i.values())
    }
}

/// Weighted sum of the six relational features minus the weighted distance.
pub fn tightness(fv: &FeatureVector, w: &TightnessWeights) -> f64 {
    let v = fv.values();
    let w = w.0;
    let mut t = 0.0;
    for i in 0..NUM_FEATURES - 1 {
        t += w[i] * v[i];
    }
    t - w[NUM_FEATURES - 1] * v[NUM_FEATURES - 1]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuarantineReason {
    ClassifiedBenign,
    UnverifiedHijack,
    NewPolicy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuarantineState {
    Pending,
    Whitelisted,
    Rejected,
    Expired,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuarantineEntry {
    pub key: RouteKey,
    pub entered: NaiveDate,
    pub reason: QuarantineReason,
    pub sightings: BTreeSet<NaiveDate>,
    pub state: QuarantineState,
    /// Length of the monitoring period in days.
    #[serde(default = "default_period")]
    pub period: i64,
    #[serde(default)]
    pub features: Option<FeatureVector>,
}

fn default_period() -> i64 {
    QUARANTINE_DAYS
}

impl QuarantineEntry {
    pub fn new(key: RouteKey, entered: NaiveDate, reason: QuarantineReason) -> Self {
        QuarantineEntry {
            key,
            entered,
            reason,
            sightings: BTreeSet::from([entered]),
            state: QuarantineState::Pending,
            period: QUARANTINE_DAYS,
            features: None,
        }
    }

    pub fn with_period(mut self, days: i64) -> Self {
        self.period = days;
        self
    }

    /// Last day of the monitoring period.
    pub fn last_day(&self) -> NaiveDate {
        self.entered + Duration::days(self.period - 1)
    }

    /// Records a sighting while pending; days outside the period are ignored.
    pub fn observe(&mut self, date: NaiveDate) {
        if self.state == QuarantineState::Pending && date >= self.entered && date <= self.last_day()
        {
            self.sightings.insert(date);
        }
    }

    /// Activity verdict once `through` (the last fully observed day) closes
    /// the period: some 7-day window holds at least two sightings, and the
    /// route was still seen in the final week.
    pub fn behavior_ok(&self, through: NaiveDate) -> Result<bool> {
        if through < self.last_day() {
            return Err(Error::MonitoringIncomplete {
                key: self.key.to_string(),
                until: self.last_day(),
            });
        }
        Ok(activity_rule(self.entered, self.period, &self.sightings))
    }
}

/// The activity criteria over sightings in the `period` days from `entered`.
pub fn activity_rule(entered: NaiveDate, period: i64, sightings: &BTreeSet<NaiveDate>) -> bool {
    let last = entered + Duration::days(period - 1);
    let days: Vec<NaiveDate> = sightings.range(entered..=last).copied().collect();
    let frequent = days
        .windows(MIN_ACTIVE_DAYS)
        .any(|w| (w[MIN_ACTIVE_DAYS - 1] - w[0]).num_days() < ACTIVITY_WINDOW_DAYS);
    let recent = days
        .last()
        .is_some_and(|d| *d >= entered + Duration::days(period - ACTIVITY_WINDOW_DAYS));
    frequent && recent
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    TightnessFastPath,
    BehaviorMonitoring,
    Manual,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::TightnessFastPath => "tightness_fast_path",
            Provenance::BehaviorMonitoring => "behavior_monitoring",
            Provenance::Manual => "manual",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Provenance::TightnessFastPath,
            Provenance::BehaviorMonitoring,
            Provenance::Manual,
        ]
        .into_iter()
        .find(|p| p.as_str() == s)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown provenance {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WhitelistEntry {
    pub origin: Asn,
    pub prefix: Prefix,
    pub added: NaiveDate,
    pub last_seen: NaiveDate,
    pub provenance: Provenance,
}

impl WhitelistEntry {
    pub fn key(&self) -> RouteKey {
        RouteKey::new(self.origin, self.prefix)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenyRecord {
    pub key: RouteKey,
    pub date: NaiveDate,
    pub note: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManualVerdict {
    Allow,
    Deny,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManualDecision {
    pub key: RouteKey,
    pub verdict: ManualVerdict,
    #[serde(default)]
    pub note: String,
    pub date: NaiveDate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InsertOutcome {
    Added,
    Refreshed,
    Blocked,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FastPathDecision {
    Whitelisted,
    Pending,
    Blocked,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PurgeReason {
    Stale,
    Resolved,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeReport {
    pub added: Vec<(RouteKey, Provenance)>,
    pub purged: Vec<(RouteKey, PurgeReason)>,
    pub expired: Vec<RouteKey>,
}

/// Whitelist, quarantine and deny set, plus the position in the manual
/// decision journal already applied.
#[derive(Clone, Debug, PartialEq)]
pub struct WhitelistStore {
    pub generation: Option<NaiveDate>,
    whitelist: BTreeMap<RouteKey, WhitelistEntry>,
    quarantine: BTreeMap<RouteKey, QuarantineEntry>,
    deny: BTreeMap<RouteKey, DenyRecord>,
    pub manual_applied: usize,
    /// Monitoring period given to new quarantine entries.
    pub quarantine_days: i64,
}

impl Default for WhitelistStore {
    fn default() -> Self {
        WhitelistStore {
            generation: None,
            whitelist: BTreeMap::new(),
            quarantine: BTreeMap::new(),
            deny: BTreeMap::new(),
            manual_applied: 0,
            quarantine_days: QUARANTINE_DAYS,
        }
    }
}

impl WhitelistStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Exact (origin, prefix) membership.
    pub fn whitelist_check(&self, origin: Asn, prefix: &Prefix) -> bool {
        self.whitelist.contains_key(&RouteKey::new(origin, *prefix))
    }

    pub fn whitelist_entry(&self, key: &RouteKey) -> Option<&WhitelistEntry> {
        self.whitelist.get(key)
    }

    pub fn whitelist(&self) -> impl Iterator<Item = &WhitelistEntry> {
        self.whitelist.values()
    }

    pub fn whitelist_len(&self) -> usize {
        self.whitelist.len()
    }

    pub fn is_denied(&self, key: &RouteKey) -> bool {
        self.deny.contains_key(key)
    }

    pub fn deny_set(&self) -> impl Iterator<Item = &DenyRecord> {
        self.deny.values()
    }

    pub fn quarantine_entry(&self, key: &RouteKey) -> Option<&QuarantineEntry> {
        self.quarantine.get(key)
    }

    pub fn quarantine(&self) -> impl Iterator<Item = &QuarantineEntry> {
        self.quarantine.values()
    }

    pub fn pending(&self) -> impl Iterator<Item = &QuarantineEntry> {
        self.quarantine
            .values()
            .filter(|e| e.state == QuarantineState::Pending)
    }

    /// Inserts or refreshes a whitelist entry unless the key is denied.
    pub fn insert_whitelist(
        &mut self,
        key: RouteKey,
        date: NaiveDate,
        provenance: Provenance,
    ) -> InsertOutcome {
        if self.is_denied(&key) {
            return InsertOutcome::Blocked;
        }
        if let Some(e) = self.whitelist.get_mut(&key) {
            e.last_seen = e.last_seen.max(date);
            return InsertOutcome::Refreshed;
        }
        self.whitelist.insert(
            key,
            WhitelistEntry {
                origin: key.origin,
                prefix: key.prefix,
                added: date,
                last_seen: date,
                provenance,
            },
        );
        if let Some(q) = self.quarantine.get_mut(&key) {
            q.state = QuarantineState::Whitelisted;
        }
        InsertOutcome::Added
    }

    /// Places a route in quarantine, or records another sighting if it is
    /// already pending. A route whose earlier quarantine ended without
    /// whitelisting starts over.
    pub fn enter_quarantine(
        &mut self,
        key: RouteKey,
        date: NaiveDate,
        reason: QuarantineReason,
        features: Option<FeatureVector>,
    ) -> &QuarantineEntry {
        let restart = match self.quarantine.get(&key) {
            None => true,
            Some(e) => match e.state {
                QuarantineState::Pending => false,
                QuarantineState::Rejected => false,
                QuarantineState::Expired | QuarantineState::Whitelisted => {
                    !self.whitelist.contains_key(&key)
                }
            },
        };
        if restart {
            let mut e = QuarantineEntry::new(key, date, reason).with_period(self.quarantine_days);
            e.features = features;
            self.quarantine.insert(key, e);
        } else if let Some(e) = self.quarantine.get_mut(&key) {
            e.observe(date);
            if features.is_some() && e.state == QuarantineState::Pending {
                e.features = features;
            }
        }
        &self.quarantine[&key]
    }

    /// Whitelists a benign-classified route at once when its tightness
    /// reaches the threshold; otherwise it stays pending.
    pub fn fast_path_whitelist(
        &mut self,
        key: RouteKey,
        fv: &FeatureVector,
        w: &TightnessWeights,
        t_thr: f64,
        date: NaiveDate,
    ) -> FastPathDecision {
        if self.is_denied(&key) {
            return FastPathDecision::Blocked;
        }
        if tightness(fv, w) >= t_thr {
            match self.insert_whitelist(key, date, Provenance::TightnessFastPath) {
                InsertOutcome::Blocked => FastPathDecision::Blocked,
                _ => FastPathDecision::Whitelisted,
            }
        } else {
            self.enter_quarantine(
                key,
                date,
                QuarantineReason::ClassifiedBenign,
                Some(fv.clone()),
            );
            FastPathDecision::Pending
        }
    }

    /// Applies an operator decision. Deny wins over any earlier or later Allow.
    pub fn manual_decision(&mut self, d: &ManualDecision) -> InsertOutcome {
        match d.verdict {
            ManualVerdict::Allow => self.insert_whitelist(d.key, d.date, Provenance::Manual),
            ManualVerdict::Deny => {
                self.whitelist.remove(&d.key);
                if let Some(q) = self.quarantine.get_mut(&d.key) {
                    q.state = QuarantineState::Rejected;
                }
                self.deny.entry(d.key).or_insert_with(|| DenyRecord {
                    key: d.key,
                    date: d.date,
                    note: d.note.clone(),
                });
                InsertOutcome::Blocked
            }
        }
    }

    /// End-of-day maintenance: refresh last-seen dates, record quarantine
    /// sightings, graduate or expire finished quarantines, and purge stale
    /// or resolved whitelist entries.
    pub fn daily_update(
        &mut self,
        date: NaiveDate,
        statuses: &BTreeMap<RouteKey, Validity>,
        sightings: &BTreeSet<RouteKey>,
        purge_days: i64,
    ) -> ChangeReport {
        let mut report = ChangeReport::default();
        for key in sightings {
            if let Some(e) = self.whitelist.get_mut(key) {
                e.last_seen = e.last_seen.max(date);
            }
            if let Some(q) = self.quarantine.get_mut(key) {
                q.observe(date);
            }
        }

        let finished: Vec<RouteKey> = self
            .quarantine
            .values()
            .filter(|q| q.state == QuarantineState::Pending && date >= q.last_day())
            .map(|q| q.key)
            .collect();
        for key in finished {
            let ok = self.quarantine[&key].behavior_ok(date).unwrap_or(false);
            if ok
                && self.insert_whitelist(key, date, Provenance::BehaviorMonitoring)
                    == InsertOutcome::Added
            {
                report.added.push((key, Provenance::BehaviorMonitoring));
            } else if self.whitelist.contains_key(&key) {
                // whitelisted meanwhile by another door
                if let Some(q) = self.quarantine.get_mut(&key) {
                    q.state = QuarantineState::Whitelisted;
                }
            } else {
                if let Some(q) = self.quarantine.get_mut(&key) {
                    q.state = if self.deny.contains_key(&key) {
                        QuarantineState::Rejected
                    } else {
                        QuarantineState::Expired
                    };
                }
                report.expired.push(key);
            }
        }

        let mut purge = Vec::new();
        for (key, e) in &self.whitelist {
            if (date - e.last_seen).num_days() > purge_days {
                purge.push((*key, PurgeReason::Stale));
            } else if matches!(statuses.get(key), Some(Validity::Valid | Validity::Unknown))
                || self.deny.contains_key(key)
            {
                purge.push((*key, PurgeReason::Resolved));
            }
        }
        for (key, reason) in purge {
            self.whitelist.remove(&key);
            report.purged.push((key, reason));
        }

        // forget finished quarantine records nobody has seen for a while
        self.quarantine.retain(|_, q| {
            q.state == QuarantineState::Pending
                || q.sightings
                    .last()
                    .is_some_and(|d| (date - *d).num_days() <= purge_days)
        });
        report
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cause {
    Deaggregation,
    Dependencies,
    MultiOrigins,
    DelayedRoas,
}

impl Cause {
    pub const ALL: [Cause; 4] = [
        Cause::Deaggregation,
        Cause::Dependencies,
        Cause::MultiOrigins,
        Cause::DelayedRoas,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Cause::Deaggregation => "deaggregation",
            Cause::Dependencies => "dependencies",
            Cause::MultiOrigins => "multi_origins",
            Cause::DelayedRoas => "delayed_roas",
        }
    }
}

/// Likely root causes of a benign conflict; several may apply.
pub fn categorize_cause(fv: &FeatureVector, pair: &ConflictPair) -> BTreeSet<Cause> {
    let mut out = BTreeSet::new();
    let relational = fv.origin_match == 1.0
        || fv.pc == 1.0
        || fv.moas == 1.0
        || fv.parent == 1.0
        || fv.depen > 0.0;
    if fv.origin_match == 1.0 {
        out.insert(Cause::Deaggregation);
    }
    let colocated = fv.as_dist == 0.0 && !relational && fv.alt_sources == 0.0;
    if fv.pc == 1.0 || fv.parent == 1.0 || fv.depen > 0.0 || colocated {
        out.insert(Cause::Dependencies);
    }
    if fv.moas == 1.0 && !pair.roa_origins.contains(&pair.bgp_origin) {
        out.insert(Cause::MultiOrigins);
    }
    if !relational && fv.alt_sources == 1.0 {
        out.insert(Cause::DelayedRoas);
    }
    out
}

pub const WHITELIST_FORMAT_VERSION: u32 = 1;
pub const WHITELIST_CSV_HEADER: &str = "origin,prefix,added,last_seen,provenance";
pub const DENY_CSV_HEADER: &str = "origin,prefix,date,note";

fn version_line(kind: &str) -> String {
    format!("# lov-{kind} format_version={WHITELIST_FORMAT_VERSION}")
}

fn check_version_line(kind: &str, line: Option<&str>) -> Result<()> {
    let expected = format!("# lov-{kind} format_version=");
    let found = line
        .and_then(|l| l.strip_prefix(&expected))
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| Error::InvalidArgument(format!("missing {kind} format version line")))?;
    if found != WHITELIST_FORMAT_VERSION {
        return Err(Error::StoreVersion {
            found,
            expected: WHITELIST_FORMAT_VERSION,
        });
    }
    Ok(())
}

pub fn write_whitelist_csv<'a>(entries: impl IntoIterator<Item = &'a WhitelistEntry>) -> String {
    let mut out = version_line("whitelist");
    out.push('\n');
    out.push_str(WHITELIST_CSV_HEADER);
    out.push('\n');
    for e in entries {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.origin, e.prefix, e.added, e.last_seen, e.provenance
        ));
    }
    out
}

pub fn parse_whitelist_csv(text: &str) -> Result<Vec<WhitelistEntry>> {
    let mut lines = text.lines();
    check_version_line("whitelist", lines.next())?;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() || (i == 0 && line == WHITELIST_CSV_HEADER) {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::InvalidArgument(format!("bad whitelist row {line:?}"));
        if f.len() != 5 {
            return Err(bad());
        }
        out.push(WhitelistEntry {
            origin: f[0].parse()?,
            prefix: f[1].parse()?,
            added: f[2].parse().map_err(|_| bad())?,
            last_seen: f[3].parse().map_err(|_| bad())?,
            provenance: f[4].parse()?,
        });
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct WhitelistJson {
    format_version: u32,
    generation: Option<NaiveDate>,
    entries: Vec<WhitelistEntry>,
}

pub fn write_whitelist_json<'a>(
    generation: Option<NaiveDate>,
    entries: impl IntoIterator<Item = &'a WhitelistEntry>,
) -> Result<String> {
    Ok(serde_json::to_string_pretty(&WhitelistJson {
        format_version: WHITELIST_FORMAT_VERSION,
        generation,
        entries: entries.into_iter().cloned().collect(),
    })?)
}

pub fn write_deny_csv<'a>(records: impl IntoIterator<Item = &'a DenyRecord>) -> String {
    let mut out = version_line("deny");
    out.push('\n');
    out.push_str(DENY_CSV_HEADER);
    out.push('\n');
    for r in records {
        let note = r.note.replace([',', '\n', '\r'], " ");
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.key.origin, r.key.prefix, r.date, note
        ));
    }
    out
}

pub fn parse_deny_csv(text: &str) -> Result<Vec<DenyRecord>> {
    let mut lines = text.lines();
    check_version_line("deny", lines.next())?;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() || (i == 0 && line == DENY_CSV_HEADER) {
            continue;
        }
        let f: Vec<&str> = line.splitn(4, ',').collect();
        let bad = || Error::InvalidArgument(format!("bad deny row {line:?}"));
        if f.len() < 3 {
            return Err(bad());
        }
        out.push(DenyRecord {
            key: RouteKey::new(f[0].parse()?, f[1].parse()?),
            date: f[2].parse().map_err(|_| bad())?,
            note: f.get(3).unwrap_or(&"").to_string(),
        });
    }
    Ok(out)
}

/// On-disk form of a store generation.
#[derive(Serialize, Deserialize)]
struct StoreFile {
    format_version: u32,
    generation: Option<NaiveDate>,
    manual_applied: usize,
    #[serde(default = "default_period")]
    quarantine_days: i64,
    whitelist: Vec<WhitelistEntry>,
    quarantine: Vec<QuarantineEntry>,
    deny: Vec<DenyRecord>,
}

impl WhitelistStore {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&StoreFile {
            format_version: WHITELIST_FORMAT_VERSION,
            generation: self.generation,
            manual_applied: self.manual_applied,
            quarantine_days: self.quarantine_days,
            whitelist: self.whitelist.values().cloned().collect(),
            quarantine: self.quarantine.values().cloned().collect(),
            deny: self.deny.values().cloned().collect(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Probe {
            format_version: u32,
        }
        let probe: Probe = serde_json::from_str(text)?;
        if probe.format_version != WHITELIST_FORMAT_VERSION {
            return Err(Error::StoreVersion {
                found: probe.format_version,
                expected: WHITELIST_FORMAT_VERSION,
            });
        }
        let f: StoreFile = serde_json::from_str(text)?;
        Ok(WhitelistStore {
            generation: f.generation,
            whitelist: f.whitelist.into_iter().map(|e| (e.key(), e)).collect(),
            quarantine: f.quarantine.into_iter().map(|e| (e.key, e)).collect(),
            deny: f.deny.into_iter().map(|d| (d.key, d)).collect(),
            manual_applied: f.manual_applied,
            quarantine_days: f.quarantine_days,
        })
    }
}
