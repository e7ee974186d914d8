//! The daily run over one file of announcements, the on-disk whitelist
//! store it advances, and the manual review journal.
//!
//! Store layout under `store_dir`:
//!
//! ```text
//! generations/YYYY-MM-DD.json   full store state after each run
//! journal.jsonl                 append-only manual decisions
//! published/whitelist.{json,csv}, published/deny.csv
//! writer.lock                   held while a run or review is active
//! ```
//!
//! A run for day `d` starts from the newest generation dated before `d`,
//! so rerunning a day with the same inputs reproduces the same outputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{Label, TrainedModel};
use crate::config::PipelineConfig;
use crate::features::{
    compute_features, write_feature_csv, ConflictPair, FeatureContext, FeatureRow, FeatureVector,
};
use crate::ingest::{
    parse_as2org, parse_as_rel, parse_geo, parse_hegemony, parse_irr, write_atomic, DatasetKind,
    GeoIndex, SnapshotStore,
};
use crate::post_analyzer::{
    analyze, group_events, VerdictKind, VerificationRecord, PERSISTENCE_HORIZON_SECS,
};
use crate::prefix::{Asn, BogonFilter};
use crate::quarantine::{
    categorize_cause, tightness, write_deny_csv, write_whitelist_csv, write_whitelist_json, Cause,
    FastPathDecision, InsertOutcome, ManualDecision, QuarantineEntry, QuarantineReason,
    TightnessWeights, WhitelistStore,
};
use crate::report::{occurrences, summarize, OccurrenceSummary};
use crate::rov::{parse_announcements, parse_vrp_csv, Announcement, RoaIndex, RouteKey, Validity};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct StoreLayout {
    pub root: PathBuf,
}

impl StoreLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        StoreLayout { root: root.into() }
    }

    pub fn generations(&self) -> PathBuf {
        self.root.join("generations")
    }

    pub fn generation(&self, date: NaiveDate) -> PathBuf {
        self.generations().join(format!("{date}.json"))
    }

    pub fn journal(&self) -> PathBuf {
        self.root.join("journal.jsonl")
    }

    pub fn whitelist_json(&self) -> PathBuf {
        self.root.join("published").join("whitelist.json")
    }

    pub fn whitelist_csv(&self) -> PathBuf {
        self.root.join("published").join("whitelist.csv")
    }

    pub fn deny_csv(&self) -> PathBuf {
        self.root.join("published").join("deny.csv")
    }

    pub fn lock(&self) -> PathBuf {
        self.root.join("writer.lock")
    }
}

#[derive(Clone, Debug)]
pub struct ReportLayout {
    pub root: PathBuf,
}

impl ReportLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ReportLayout { root: root.into() }
    }

    pub fn report(&self, date: NaiveDate) -> PathBuf {
        self.root.join(format!("{date}.report.json"))
    }

    pub fn verification(&self, date: NaiveDate) -> PathBuf {
        self.root.join(format!("{date}.verification.jsonl"))
    }

    pub fn features(&self, date: NaiveDate) -> PathBuf {
        self.root.join(format!("{date}.features.csv"))
    }

    pub fn routes(&self, date: NaiveDate) -> PathBuf {
        self.root.join(format!("{date}.routes.csv"))
    }
}

/// Exclusive writer lock, released on drop.
#[derive(Debug)]
pub struct WriterLock {
    path: PathBuf,
}

impl WriterLock {
    pub fn acquire(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(path)
        {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(WriterLock {
                    path: path.to_path_buf(),
                })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::Locked(path.to_path_buf()))
            }
            Err(e) => Err(Error::io(path, e)),
        }
    }
}

impl Drop for WriterLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

// ---------------------------------------------------------------------------
// generations and journal

pub fn generation_dates(layout: &StoreLayout) -> Result<Vec<NaiveDate>> {
    let dir = layout.generations();
    let entries = match fs::read_dir(&dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(dir, e)),
    };
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(&dir, e))?;
        let name = entry.file_name();
        if let Some(d) = name
            .to_str()
            .and_then(|n| n.strip_suffix(".json"))
            .and_then(|s| s.parse().ok())
        {
            out.push(d);
        }
    }
    out.sort();
    Ok(out)
}

pub fn load_generation(layout: &StoreLayout, date: NaiveDate) -> Result<WhitelistStore> {
    let path = layout.generation(date);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    WhitelistStore::from_json(&text)
}

/// Newest generation strictly before `before`, or the newest overall.
pub fn latest_generation(
    layout: &StoreLayout,
    before: Option<NaiveDate>,
) -> Result<Option<WhitelistStore>> {
    let dates = generation_dates(layout)?;
    let pick = dates
        .into_iter()
        .rev()
        .find(|d| before.is_none_or(|b| *d < b));
    pick.map(|d| load_generation(layout, d)).transpose()
}

pub fn read_journal(path: &Path) -> Result<Vec<ManualDecision>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let d: ManualDecision = serde_json::from_str(line).map_err(|e| {
            Error::InvalidArgument(format!("{} line {}: {e}", path.display(), i + 1))
        })?;
        out.push(d);
    }
    Ok(out)
}

fn append_journal(path: &Path, decisions: &[ManualDecision]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut buf = String::new();
    for d in decisions {
        buf.push_str(&serde_json::to_string(d)?);
        buf.push('\n');
    }
    f.write_all(buf.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    f.sync_all().map_err(|e| Error::io(path, e))
}

/// Applies journal entries the store has not seen yet.
pub fn apply_journal(store: &mut WhitelistStore, journal: &[ManualDecision]) -> Vec<InsertOutcome> {
    let from = store.manual_applied.min(journal.len());
    let outcomes = journal[from..]
        .iter()
        .map(|d| store.manual_decision(d))
        .collect();
    store.manual_applied = journal.len();
    outcomes
}

/// Writes the exports readers use, each replaced atomically.
pub fn publish(layout: &StoreLayout, store: &WhitelistStore) -> Result<()> {
    write_atomic(
        &layout.deny_csv(),
        write_deny_csv(store.deny_set()).as_bytes(),
    )?;
    write_atomic(
        &layout.whitelist_csv(),
        write_whitelist_csv(store.whitelist()).as_bytes(),
    )?;
    write_atomic(
        &layout.whitelist_json(),
        write_whitelist_json(store.generation, store.whitelist())?.as_bytes(),
    )
}

fn save_generation(layout: &StoreLayout, store: &WhitelistStore) -> Result<()> {
    let date = store
        .generation
        .ok_or_else(|| Error::InvalidArgument("store has no generation date".into()))?;
    write_atomic(&layout.generation(date), store.to_json()?.as_bytes())
}

/// Pending quarantine entries of the newest generation.
pub fn pending_entries(cfg: &PipelineConfig) -> Result<Vec<QuarantineEntry>> {
    let layout = StoreLayout::new(&cfg.store_dir);
    Ok(latest_generation(&layout, None)?
        .map(|s| s.pending().cloned().collect())
        .unwrap_or_default())
}

/// Records operator decisions in the journal and applies them to the
/// newest generation, then republishes. The next daily run replays the
/// journal too, so a decision is never lost.
pub fn review(
    cfg: &PipelineConfig,
    decisions: &[ManualDecision],
) -> Result<(WhitelistStore, Vec<InsertOutcome>)> {
    let layout = StoreLayout::new(&cfg.store_dir);
    let _lock = WriterLock::acquire(&layout.lock())?;
    append_journal(&layout.journal(), decisions)?;
    let journal = read_journal(&layout.journal())?;
    let mut store = latest_generation(&layout, None)?.unwrap_or_else(|| {
        let mut s = WhitelistStore::new();
        s.quarantine_days = cfg.quarantine_days;
        s
    });
    let outcomes = apply_journal(&mut store, &journal);
    if store.generation.is_some() {
        save_generation(&layout, &store)?;
    }
    publish(&layout, &store)?;
    Ok((store, outcomes))
}

// ---------------------------------------------------------------------------
// daily run

/// Where an invalid route ends up on a given day. Every invalid route lands
/// in exactly one bucket.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    Denied,
    /// Already on the whitelist before today's decision.
    Whitelisted,
    FastPath,
    Pending,
    VerifiedHijack,
    /// Unverified or new-policy hijack placed in quarantine.
    UnverifiedQuarantined,
}

impl Bucket {
    pub const ALL: [Bucket; 6] = [
        Bucket::Denied,
        Bucket::Whitelisted,
        Bucket::FastPath,
        Bucket::Pending,
        Bucket::VerifiedHijack,
        Bucket::UnverifiedQuarantined,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Bucket::Denied => "denied",
            Bucket::Whitelisted => "whitelisted",
            Bucket::FastPath => "fast_path",
            Bucket::Pending => "pending",
            Bucket::VerifiedHijack => "verified_hijack",
            Bucket::UnverifiedQuarantined => "unverified_quarantined",
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Bucket {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Bucket::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown bucket {s:?}")))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketCounts {
    pub denied: usize,
    pub whitelisted: usize,
    pub fast_path: usize,
    pub pending: usize,
    pub verified_hijack: usize,
    pub unverified_quarantined: usize,
}

impl BucketCounts {
    fn bump(&mut self, b: Bucket) {
        *match b {
            Bucket::Denied => &mut self.denied,
            Bucket::Whitelisted => &mut self.whitelisted,
            Bucket::FastPath => &mut self.fast_path,
            Bucket::Pending => &mut self.pending,
            Bucket::VerifiedHijack => &mut self.verified_hijack,
            Bucket::UnverifiedQuarantined => &mut self.unverified_quarantined,
        } += 1;
    }

    pub fn total(&self) -> usize {
        self.denied
            + self.whitelisted
            + self.fast_path
            + self.pending
            + self.verified_hijack
            + self.unverified_quarantined
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DailyReport {
    pub date: NaiveDate,
    pub vrp_snapshot: NaiveDate,
    pub model_fingerprint: String,
    /// Datasets with no snapshot on or before the day; their features
    /// fall back to defaults.
    pub missing_datasets: Vec<String>,
    /// Records skipped by the parsers, per input.
    pub rejected_records: BTreeMap<String, usize>,
    pub announcements: usize,
    pub bogon_routes: usize,
    pub unique_routes: usize,
    pub valid: usize,
    pub invalid: usize,
    pub unknown: usize,
    pub benign: usize,
    pub hijack: usize,
    /// Includes new-policy routes.
    pub verified: usize,
    pub unverified: usize,
    pub new_policy: usize,
    pub hijack_events: usize,
    pub buckets: BucketCounts,
    pub whitelist_added: usize,
    pub whitelist_purged: usize,
    pub quarantine_expired: usize,
    pub whitelist_size: usize,
    pub quarantine_pending: usize,
    pub causes: BTreeMap<Cause, usize>,
    /// Benign conflicts seen on this and earlier days.
    pub benign_occurrence: OccurrenceSummary,
    /// Origins of hijack-classified routes on this and earlier days.
    pub hijacker_occurrence: OccurrenceSummary,
}

impl DailyReport {
    /// The per-day accounting identities.
    pub fn check_conservation(&self) -> std::result::Result<(), String> {
        let checks = [
            (
                "valid + invalid + unknown == unique_routes",
                self.valid + self.invalid + self.unknown,
                self.unique_routes,
            ),
            (
                "benign + hijack == invalid",
                self.benign + self.hijack,
                self.invalid,
            ),
            (
                "verified + unverified == hijack",
                self.verified + self.unverified,
                self.hijack,
            ),
            (
                "bucket total == invalid",
                self.buckets.total(),
                self.invalid,
            ),
        ];
        for (what, lhs, rhs) in checks {
            if lhs != rhs {
                return Err(format!("{what}: {lhs} != {rhs}"));
            }
        }
        Ok(())
    }
}

/// One invalid route's path through the day.
#[derive(Clone, Debug, PartialEq)]
pub struct RouteOutcome {
    pub key: RouteKey,
    pub ts: i64,
    pub label: Label,
    pub score: f64,
    /// Benign routes only.
    pub tightness: Option<f64>,
    /// Hijack routes only.
    pub verdict: Option<VerdictKind>,
    pub bucket: Bucket,
    pub causes: BTreeSet<Cause>,
}

pub const ROUTES_CSV_HEADER: &str = "origin,prefix,ts,label,score,tightness,verdict,bucket,causes";

pub fn write_routes_csv(rows: &[RouteOutcome]) -> String {
    let mut out = String::from(ROUTES_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let causes: Vec<&str> = r.causes.iter().map(|c| c.as_str()).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.key.origin,
            r.key.prefix,
            r.ts,
            r.label,
            r.score,
            r.tightness.map(|t| t.to_string()).unwrap_or_default(),
            r.verdict.map(|v| v.to_string()).unwrap_or_default(),
            r.bucket,
            causes.join(";"),
        ));
    }
    out
}

pub fn parse_routes_csv(text: &str) -> Result<Vec<RouteOutcome>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (i == 0 && line == ROUTES_CSV_HEADER) {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::InvalidArgument(format!("routes line {}: {line:?}", i + 1));
        if f.len() != 9 {
            return Err(bad());
        }
        let verdict = match f[6] {
            "" => None,
            "verified" => Some(VerdictKind::Verified),
            "unverified" => Some(VerdictKind::Unverified),
            "new_policy" => Some(VerdictKind::NewPolicy),
            _ => return Err(bad()),
        };
        let causes = f[8]
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| {
                Cause::ALL
                    .into_iter()
                    .find(|c| c.as_str() == s)
                    .ok_or_else(bad)
            })
            .collect::<Result<_>>()?;
        out.push(RouteOutcome {
            key: RouteKey::new(f[0].parse()?, f[1].parse()?),
            ts: f[2].parse().map_err(|_| bad())?,
            label: f[3].parse()?,
            score: f[4].parse().map_err(|_| bad())?,
            tightness: if f[5].is_empty() {
                None
            } else {
                Some(f[5].parse().map_err(|_| bad())?)
            },
            verdict,
            bucket: f[7].parse()?,
            causes,
        });
    }
    Ok(out)
}

/// Day-by-day sightings of benign conflicts and of hijack-classified
/// origins, read from the route logs in `report_dir` dated up to `through`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OccurrenceHistory {
    pub benign: BTreeMap<RouteKey, BTreeSet<NaiveDate>>,
    pub hijackers: BTreeMap<Asn, BTreeSet<NaiveDate>>,
}

impl OccurrenceHistory {
    pub fn add_day(&mut self, date: NaiveDate, rows: &[RouteOutcome]) {
        for r in rows {
            match r.label {
                Label::BenignConflict => {
                    self.benign.entry(r.key).or_default().insert(date);
                }
                Label::Hijack => {
                    self.hijackers.entry(r.key.origin).or_default().insert(date);
                }
            }
        }
    }

    pub fn load(report_dir: &Path, through: Option<NaiveDate>) -> Result<Self> {
        let mut h = OccurrenceHistory::default();
        let entries = match fs::read_dir(report_dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(h),
            Err(e) => return Err(Error::io(report_dir, e)),
        };
        let mut days: Vec<(NaiveDate, PathBuf)> = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(report_dir, e))?;
            let name = entry.file_name();
            let Some(date) = name
                .to_str()
                .and_then(|n| n.strip_suffix(".routes.csv"))
                .and_then(|s| s.parse::<NaiveDate>().ok())
            else {
                continue;
            };
            if through.is_none_or(|t| date <= t) {
                days.push((date, entry.path()));
            }
        }
        days.sort();
        for (date, path) in days {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            h.add_day(date, &parse_routes_csv(&text)?);
        }
        Ok(h)
    }
}

/// Keeps the earliest announcement per (origin, prefix); ties go to the
/// one read first.
pub fn dedup_routes(anns: Vec<Announcement>) -> BTreeMap<RouteKey, Announcement> {
    let mut out: BTreeMap<RouteKey, Announcement> = BTreeMap::new();
    for a in anns {
        match out.entry(a.key()) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(a);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                if a.timestamp < o.get().timestamp {
                    o.insert(a);
                }
            }
        }
    }
    out
}

fn missing(what: impl Into<String>, date: NaiveDate) -> Error {
    Error::MissingInput {
        what: what.into(),
        date,
    }
}

/// Runs the four stages for `date` over the announcements in `announcements`
/// and advances the store. Inputs are checked before anything is written.
pub fn run_day(cfg: &PipelineConfig, announcements: &Path, date: NaiveDate) -> Result<DailyReport> {
    cfg.validate()?;
    if !cfg.model_path.is_file() {
        return Err(missing(format!("model {}", cfg.model_path.display()), date));
    }
    let (model, importance) = TrainedModel::load(&cfg.model_path)?;
    let weights = TightnessWeights::from(importance.ok_or_else(|| {
        missing(
            format!("tightness weights in {}", cfg.model_path.display()),
            date,
        )
    })?);
    if !cfg.snapshot_dir.is_dir() {
        return Err(missing(
            format!("snapshot store {}", cfg.snapshot_dir.display()),
            date,
        ));
    }
    let snapshots = SnapshotStore::open(&cfg.snapshot_dir)?;
    let (vrp_date, vrp_text) = snapshots
        .read_latest_at(DatasetKind::Vrps, date)?
        .ok_or_else(|| missing("VRP snapshot", date))?;
    let ann_text = fs::read_to_string(announcements).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            missing(format!("announcements {}", announcements.display()), date)
        }
        _ => Error::io(announcements, e),
    })?;

    let store_layout = StoreLayout::new(&cfg.store_dir);
    let report_layout = ReportLayout::new(&cfg.report_dir);
    let _lock = WriterLock::acquire(&store_layout.lock())?;

    let mut rejected: BTreeMap<String, usize> = BTreeMap::new();
    let mut missing_datasets = Vec::new();
    let mut dataset = |kind: DatasetKind| -> Result<Option<String>> {
        let text = snapshots.read_latest_at(kind, date)?.map(|(_, t)| t);
        if text.is_none() {
            missing_datasets.push(kind.to_string());
        }
        Ok(text)
    };
    let rel = dataset(DatasetKind::AsRel)?.map(|t| parse_as_rel(&t));
    let orgs = dataset(DatasetKind::As2Org)?.map(|t| parse_as2org(&t));
    let heg = dataset(DatasetKind::Hegemony)?.map(|t| parse_hegemony(&t));
    let irr = dataset(DatasetKind::Irr)?.map(|t| parse_irr(&t));
    let geo = dataset(DatasetKind::Geo)?.map(|t| parse_geo(&t));
    let vrps = parse_vrp_csv(&vrp_text);
    let anns = parse_announcements(&ann_text);

    let mut note = |kind: &str, n: usize| {
        if n > 0 {
            rejected.insert(kind.to_string(), n);
        }
    };
    note("vrps", vrps.diagnostics.len());
    note("announcements", anns.diagnostics.len());
    note("as-rel", rel.as_ref().map_or(0, |p| p.diagnostics.len()));
    note("as2org", orgs.as_ref().map_or(0, |p| p.diagnostics.len()));
    note("hegemony", heg.as_ref().map_or(0, |p| p.diagnostics.len()));
    note("irr", irr.as_ref().map_or(0, |p| p.diagnostics.len()));
    note("geo", geo.as_ref().map_or(0, |p| p.diagnostics.len()));

    let index = RoaIndex::build(vrps.value.into_iter().map(|r| r.vrp));
    let announcement_count = anns.value.len();
    let bogons = BogonFilter::default();
    let mut routes = dedup_routes(anns.value);
    let before = routes.len();
    routes.retain(|k, _| !bogons.is_bogon(k.origin));
    let bogon_routes = before - routes.len();

    let rel = rel.map(|p| p.value);
    let orgs = orgs.map(|p| p.value);
    let heg = heg.map(|p| p.value);
    let irr = irr.map(|p| p.value);
    // origin attribution comes from what is announced today
    let geo: Option<GeoIndex> = geo.map(|p| {
        let mut g = p.value;
        for k in routes.keys() {
            g.attach_prefix(k.origin, k.prefix);
        }
        g
    });
    let ctx = FeatureContext {
        index: &index,
        rel: rel.as_ref(),
        orgs: orgs.as_ref(),
        hegemony: heg.as_ref(),
        irr: irr.as_ref(),
        geo: geo.as_ref(),
    };

    // stage 1: validation
    let statuses: BTreeMap<RouteKey, Validity> = routes
        .iter()
        .map(|(k, a)| (*k, index.validate(a).validity))
        .collect();
    let count = |v: Validity| statuses.values().filter(|s| **s == v).count();
    let invalid: Vec<&Announcement> = routes
        .iter()
        .filter(|(k, _)| statuses[*k] == Validity::Invalid)
        .map(|(_, a)| a)
        .collect();

    // stages 2 and 3: features, classification, verification
    struct Judged {
        pair: ConflictPair,
        fv: FeatureVector,
        label: Label,
        score: f64,
        verdict: Option<crate::post_analyzer::Verdict>,
    }
    let judged: Vec<Judged> = invalid
        .par_iter()
        .map(|a| -> Result<Judged> {
            let pair = ConflictPair::new(&index, (*a).clone())?;
            let fv = compute_features(&pair, &ctx, cfg.seed);
            let pred = model.predict(&fv);
            let verdict = (pred.label == Label::Hijack).then(|| {
                analyze(
                    heg.as_ref().and_then(|h| h.global(a.origin)),
                    a.timestamp,
                    cfg.alpha,
                    PERSISTENCE_HORIZON_SECS,
                )
            });
            Ok(Judged {
                pair,
                fv,
                label: pred.label,
                score: pred.score,
                verdict,
            })
        })
        .collect::<Result<_>>()?;

    // stage 4: whitelist, quarantine, maintenance
    let mut store = latest_generation(&store_layout, Some(date))?.unwrap_or_default();
    store.quarantine_days = cfg.quarantine_days;
    apply_journal(&mut store, &read_journal(&store_layout.journal())?);

    let mut buckets = BucketCounts::default();
    let mut causes: BTreeMap<Cause, usize> = Cause::ALL.into_iter().map(|c| (c, 0)).collect();
    let mut outcomes = Vec::with_capacity(judged.len());
    let mut fast_path_added = 0;
    for j in &judged {
        let key = j.pair.announcement.key();
        let mut t = None;
        let mut route_causes = BTreeSet::new();
        if j.label == Label::BenignConflict {
            t = Some(tightness(&j.fv, &weights));
            route_causes = categorize_cause(&j.fv, &j.pair);
            for c in &route_causes {
                *causes.entry(*c).or_default() += 1;
            }
        }
        let bucket = if store.is_denied(&key) {
            Bucket::Denied
        } else if store.whitelist_check(key.origin, &key.prefix) {
            Bucket::Whitelisted
        } else {
            match (j.label, j.verdict.map(|v| v.kind)) {
                (Label::BenignConflict, _) => {
                    match store.fast_path_whitelist(key, &j.fv, &weights, cfg.t_thr, date) {
                        FastPathDecision::Whitelisted => {
                            fast_path_added += 1;
                            Bucket::FastPath
                        }
                        FastPathDecision::Pending => Bucket::Pending,
                        FastPathDecision::Blocked => Bucket::Denied,
                    }
                }
                (Label::Hijack, Some(VerdictKind::Verified)) => Bucket::VerifiedHijack,
                (Label::Hijack, kind) => {
                    let reason = if kind == Some(VerdictKind::NewPolicy) {
                        QuarantineReason::NewPolicy
                    } else {
                        QuarantineReason::UnverifiedHijack
                    };
                    store.enter_quarantine(key, date, reason, Some(j.fv.clone()));
                    Bucket::UnverifiedQuarantined
                }
            }
        };
        buckets.bump(bucket);
        outcomes.push(RouteOutcome {
            key,
            ts: j.pair.announcement.timestamp,
            label: j.label,
            score: j.score,
            tightness: t,
            verdict: j.verdict.map(|v| v.kind),
            bucket,
            causes: route_causes,
        });
    }

    let sightings: BTreeSet<RouteKey> = routes.keys().copied().collect();
    let change = store.daily_update(date, &statuses, &sightings, cfg.purge_days);
    store.generation = Some(date);

    let mut history = OccurrenceHistory::load(&cfg.report_dir, date.pred_opt())?;
    history.add_day(date, &outcomes);

    let kind_count = |k: VerdictKind| {
        judged
            .iter()
            .filter(|j| j.verdict.map(|v| v.kind) == Some(k))
            .count()
    };
    let hijack_routes: Vec<(&RouteKey, i64)> = outcomes
        .iter()
        .filter(|o| o.label == Label::Hijack)
        .map(|o| (&o.key, o.ts))
        .collect();
    let report = DailyReport {
        date,
        vrp_snapshot: vrp_date,
        model_fingerprint: model.fingerprint.clone(),
        missing_datasets,
        rejected_records: rejected,
        announcements: announcement_count,
        bogon_routes,
        unique_routes: routes.len(),
        valid: count(Validity::Valid),
        invalid: count(Validity::Invalid),
        unknown: count(Validity::Unknown),
        benign: judged
            .iter()
            .filter(|j| j.label == Label::BenignConflict)
            .count(),
        hijack: judged.iter().filter(|j| j.label == Label::Hijack).count(),
        verified: kind_count(VerdictKind::Verified) + kind_count(VerdictKind::NewPolicy),
        unverified: kind_count(VerdictKind::Unverified),
        new_policy: kind_count(VerdictKind::NewPolicy),
        hijack_events: group_events(hijack_routes).len(),
        buckets,
        whitelist_added: fast_path_added + change.added.len(),
        whitelist_purged: change.purged.len(),
        quarantine_expired: change.expired.len(),
        whitelist_size: store.whitelist_len(),
        quarantine_pending: store.pending().count(),
        causes,
        benign_occurrence: summarize(&occurrences(&history.benign)),
        hijacker_occurrence: summarize(&occurrences(&history.hijackers)),
    };
    report
        .check_conservation()
        .map_err(|m| Error::InvalidArgument(format!("accounting mismatch on {date}: {m}")))?;

    let verification: String = judged
        .iter()
        .filter_map(|j| {
            j.verdict.map(|v| VerificationRecord {
                origin: j.pair.bgp_origin,
                prefix: *j.pair.prefix(),
                ts: j.pair.announcement.timestamp,
                z: v.z,
                p_right: v.p_right,
                verdict: v.kind,
            })
        })
        .map(|r| serde_json::to_string(&r).map(|s| s + "\n"))
        .collect::<std::result::Result<_, _>>()?;
    let feature_rows: Vec<FeatureRow> = judged
        .iter()
        .map(|j| FeatureRow {
            key: j.pair.announcement.key(),
            ts: j.pair.announcement.timestamp,
            features: j.fv.clone(),
            label: Some(j.label),
        })
        .collect();

    write_atomic(
        &report_layout.routes(date),
        write_routes_csv(&outcomes).as_bytes(),
    )?;
    write_atomic(
        &report_layout.features(date),
        write_feature_csv(&feature_rows).as_bytes(),
    )?;
    write_atomic(&report_layout.verification(date), verification.as_bytes())?;
    write_atomic(
        &report_layout.report(date),
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    save_generation(&store_layout, &store)?;
    publish(&store_layout, &store)?;
    log::info!(
        "{date}: {} routes, {} invalid ({} benign, {} hijack), whitelist {}",
        report.unique_routes,
        report.invalid,
        report.benign,
        report.hijack,
        report.whitelist_size
    );
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quarantine::ManualVerdict;

    fn ann(origin: u32, prefix: &str, ts: i64) -> Announcement {
        Announcement::new(
            prefix.parse().unwrap(),
            vec![Asn(174), Asn(origin)],
            ts,
            None,
        )
        .unwrap()
    }

    #[test]
    fn dedup_keeps_earliest_then_first_read() {
        let mut a = ann(65000, "20.0.0.0/24", 50);
        a.as_path.insert(0, Asn(1));
        let routes = dedup_routes(vec![
            ann(65000, "20.0.0.0/24", 100),
            a.clone(),
            ann(65000, "20.0.0.0/24", 50),
            ann(65001, "20.0.0.0/24", 70),
        ]);
        assert_eq!(routes.len(), 2);
        assert_eq!(routes.values().next().unwrap(), &a);
    }

    #[test]
    fn routes_csv_round_trips() {
        let rows = vec![
            RouteOutcome {
                key: RouteKey::new(Asn(64500), "20.0.0.0/24".parse().unwrap()),
                ts: 7,
                label: Label::BenignConflict,
                score: 0.25,
                tightness: Some(-0.125),
                verdict: None,
                bucket: Bucket::Pending,
                causes: [Cause::Deaggregation, Cause::DelayedRoas].into(),
            },
            RouteOutcome {
                key: RouteKey::new(Asn(7), "2001:db8::/48".parse().unwrap()),
                ts: 9,
                label: Label::Hijack,
                score: 1.0,
                tightness: None,
                verdict: Some(VerdictKind::NewPolicy),
                bucket: Bucket::UnverifiedQuarantined,
                causes: BTreeSet::new(),
            },
        ];
        assert_eq!(parse_routes_csv(&write_routes_csv(&rows)).unwrap(), rows);
        assert!(parse_routes_csv("1,20.0.0.0/24,0,benign,0,,,nowhere,\n").is_err());
    }

    #[test]
    fn journal_applies_once() {
        let key = RouteKey::new(Asn(5), "20.0.0.0/24".parse().unwrap());
        let date = NaiveDate::from_ymd_opt(2022, 10, 1).unwrap();
        let journal = vec![ManualDecision {
            key,
            verdict: ManualVerdict::Allow,
            note: String::new(),
            date,
        }];
        let mut store = WhitelistStore::new();
        assert_eq!(
            apply_journal(&mut store, &journal),
            vec![InsertOutcome::Added]
        );
        let snapshot = store.clone();
        assert!(apply_journal(&mut store, &journal).is_empty());
        assert_eq!(store, snapshot);
    }

    #[test]
    fn bucket_names_round_trip() {
        for b in Bucket::ALL {
            assert_eq!(b.as_str().parse::<Bucket>().unwrap(), b);
        }
        let mut c = BucketCounts::default();
        for b in Bucket::ALL {
            c.bump(b);
        }
        assert_eq!(c.total(), Bucket::ALL.len());
    }
}
