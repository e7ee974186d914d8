//! Route origin validation against validated ROA payloads.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::ingest::{Diagnostic, Parsed};
use crate::prefix::{Asn, Prefix};
use crate::trie::PrefixTrie;

/// A validated ROA payload.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Vrp {
    pub asn: Asn,
    pub prefix: Prefix,
    pub max_length: u8,
}

impl Vrp {
    pub fn new(asn: Asn, prefix: Prefix, max_length: u8) -> Result<Self, Error> {
        if max_length < prefix.len() || max_length > prefix.family().max_len() {
            return Err(Error::InvalidVrp(format!(
                "max length {max_length} out of range for {prefix}"
            )));
        }
        Ok(Vrp {
            asn,
            prefix,
            max_length,
        })
    }

    /// Whether this VRP authorizes `origin` to announce `prefix`.
    pub fn matches(&self, origin: Asn, prefix: &Prefix) -> bool {
        self.asn == origin && self.prefix.covers(prefix) && self.max_length >= prefix.len()
    }
}

/// A VRP as it appears in a CSV export, with its trust anchor.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct VrpRow {
    pub vrp: Vrp,
    pub trust_anchor: String,
}

/// Immutable covering-prefix index over VRPs.
#[derive(Clone, Debug, Default)]
pub struct RoaIndex {
    trie: PrefixTrie<Vec<Vrp>>,
    all: Vec<Vrp>,
}

impl RoaIndex {
    /// Builds the index. Exact duplicates collapse; VRPs that differ only in
    /// max length are kept side by side.
    pub fn build<I: IntoIterator<Item = Vrp>>(vrps: I) -> Self {
        let unique: BTreeSet<Vrp> = vrps.into_iter().collect();
        let mut trie: PrefixTrie<Vec<Vrp>> = PrefixTrie::new();
        for vrp in &unique {
            trie.entry_or_insert_with(&vrp.prefix, Vec::new).push(*vrp);
        }
        RoaIndex {
            trie,
            all: unique.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.all.len()
    }

    pub fn is_empty(&self) -> bool {
        self.all.is_empty()
    }

    /// VRPs whose prefix is equal to or less specific than `prefix`, most
    /// specific first.
    pub fn covering_vrps(&self, prefix: &Prefix) -> Vec<Vrp> {
        self.trie
            .covering(prefix)
            .into_iter()
            .rev()
            .flat_map(|(_, v)| v.iter().copied())
            .collect()
    }

    pub fn validate(&self, ann: &Announcement) -> RpkiStatus {
        self.validate_route(ann.origin, &ann.prefix)
    }

    pub fn validate_route(&self, origin: Asn, prefix: &Prefix) -> RpkiStatus {
        let matched_vrps = self.covering_vrps(prefix);
        let validity = if matched_vrps.is_empty() {
            Validity::Unknown
        } else if matched_vrps.iter().any(|v| v.matches(origin, prefix)) {
            Validity::Valid
        } else {
            Validity::Invalid
        };
        RpkiStatus {
            validity,
            matched_vrps,
        }
    }

    /// All VRPs held by `asn` that strictly cover `prefix`.
    pub fn less_specific_for(&self, asn: Asn, prefix: &Prefix) -> impl Iterator<Item = Vrp> + '_ {
        let target = *prefix;
        self.covering_vrps(prefix)
            .into_iter()
            .filter(move |v| v.asn == asn && v.prefix.strictly_covers(&target))
    }

    /// All distinct VRPs in sorted order.
    pub fn iter(&self) -> impl Iterator<Item = &Vrp> {
        self.all.iter()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Validity {
    Valid,
    Invalid,
    Unknown,
}

impl fmt::Display for Validity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Validity::Valid => "valid",
            Validity::Invalid => "invalid",
            Validity::Unknown => "unknown",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RpkiStatus {
    pub validity: Validity,
    pub matched_vrps: Vec<Vrp>,
}

/// Deduplication key of a route: origin and prefix.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RouteKey {
    pub origin: Asn,
    pub prefix: Prefix,
}

impl RouteKey {
    pub fn new(origin: Asn, prefix: Prefix) -> Self {
        RouteKey { origin, prefix }
    }
}

impl fmt::Display for RouteKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AS{} {}", self.origin, self.prefix)
    }
}

impl fmt::Debug for RouteKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// A BGP route observed at a collector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Announcement {
    pub origin: Asn,
    pub prefix: Prefix,
    /// Plain AS sequence, origin last.
    pub as_path: Vec<Asn>,
    pub timestamp: i64,
    pub peer: Option<Asn>,
}

impl Announcement {
    pub fn new(
        prefix: Prefix,
        as_path: Vec<Asn>,
        timestamp: i64,
        peer: Option<Asn>,
    ) -> Result<Self, Error> {
        let origin = *as_path
            .last()
            .ok_or_else(|| Error::InvalidAnnouncement("empty AS path".into()))?;
        if origin.0 == 0 {
            return Err(Error::InvalidAnnouncement("origin AS 0".into()));
        }
        Ok(Announcement {
            origin,
            prefix,
            as_path,
            timestamp,
            peer,
        })
    }

    pub fn key(&self) -> RouteKey {
        RouteKey::new(self.origin, self.prefix)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PathElem {
    Asn(u32),
    Set(Vec<u32>),
}

#[derive(Deserialize)]
struct RawAnnouncement {
    ts: i64,
    #[serde(default)]
    peer_asn: Option<u32>,
    prefix: String,
    as_path: Vec<PathElem>,
}

#[derive(Serialize)]
struct OutAnnouncement<'a> {
    ts: i64,
    #[serde(skip_serializing_if = "Option::is_none")]
    peer_asn: Option<u32>,
    prefix: String,
    as_path: &'a [Asn],
}

fn announcement_from_line(line: &str) -> Result<Announcement, String> {
    let raw: RawAnnouncement = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let prefix: Prefix = raw.prefix.parse().map_err(|e: Error| e.to_string())?;
    let mut path = Vec::with_capacity(raw.as_path.len());
    for elem in raw.as_path {
        match elem {
            PathElem::Asn(a) => path.push(Asn(a)),
            PathElem::Set(set) => return Err(format!("AS_SET {set:?} in path is not supported")),
        }
    }
    Announcement::new(prefix, path, raw.ts, raw.peer_asn.map(Asn)).map_err(|e| e.to_string())
}

/// Parses JSON-lines announcements; blank lines are skipped.
pub fn parse_announcements(text: &str) -> Parsed<Vec<Announcement>> {
    let mut out = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match announcement_from_line(line) {
            Ok(a) => out.push(a),
            Err(reason) => diagnostics.push(Diagnostic::new(i + 1, reason)),
        }
    }
    Parsed::new(out, diagnostics)
}

pub fn write_announcement(ann: &Announcement) -> String {
    serde_json::to_string(&OutAnnouncement {
        ts: ann.timestamp,
        peer_asn: ann.peer.map(|a| a.0),
        prefix: ann.prefix.to_string(),
        as_path: &ann.as_path,
    })
    .expect("announcement serializes")
}

pub const VRP_CSV_HEADER: &str = "ASN,IP Prefix,Max Length,Trust Anchor";

fn vrp_from_record(rec: &csv::StringRecord) -> Result<VrpRow, String> {
    if rec.len() < 3 {
        return Err(format!("expected at least 3 fields, found {}", rec.len()));
    }
    let asn = Asn::from_str(&rec[0]).map_err(|e| e.to_string())?;
    let prefix = Prefix::from_str(&rec[1]).map_err(|e| e.to_string())?;
    let max_length: u8 = rec[2]
        .trim()
        .parse()
        .map_err(|_| format!("bad max length {:?}", &rec[2]))?;
    let vrp = Vrp::new(asn, prefix, max_length).map_err(|e| e.to_string())?;
    let trust_anchor = rec.get(3).map(|s| s.trim().to_string()).unwrap_or_default();
    Ok(VrpRow { vrp, trust_anchor })
}

/// Parses a VRP CSV export. Malformed rows are reported and skipped.
pub fn parse_vrp_csv(text: &str) -> Parsed<Vec<VrpRow>> {
    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    for (i, rec) in reader.records().enumerate() {
        let line = rec
            .as_ref()
            .ok()
            .and_then(|r| r.position().map(|p| p.line() as usize))
            .unwrap_or(i + 1);
        match rec {
            Ok(rec) => {
                if i == 0 && rec.get(0).map(str::trim) == Some("ASN") {
                    continue;
                }
                if rec.iter().all(|f| f.trim().is_empty()) {
                    continue;
                }
                match vrp_from_record(&rec) {
                    Ok(row) => rows.push(row),
                    Err(reason) => diagnostics.push(Diagnostic::new(line, reason)),
                }
            }
            Err(e) => diagnostics.push(Diagnostic::new(line, e.to_string())),
        }
    }
    Parsed::new(rows, diagnostics)
}

pub fn write_vrp_csv(rows: &[VrpRow]) -> String {
    let mut out = String::from(VRP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.vrp.asn, r.vrp.prefix, r.vrp.max_length, r.trust_anchor
        ));
    }
    out
}
