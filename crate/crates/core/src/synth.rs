//! Deterministic synthetic data: a labeled feature-level ground truth for
//! training, and a small routed world with dated datasets and daily
//! announcement files for end-to-end replays.
//!
//! # Ground truth
//!
//! Benign conflicts draw one of four root causes and set relational
//! features with the chances below (depen draws U(0.1, 1) when set):
//!
//! | cause          | share | origin_match | pc   | moas | parent | depen | alt_sources | near |
//! |----------------|-------|--------------|------|------|--------|-------|-------------|------|
//! | deaggregation  | 46%   | 1            | 0.5  | 1    | 1      | 0     | 0.9         | 0.75 |
//! | dependency     | 30%   | 0            | 1    | 0.1  | 0      | 0.95  | 0.65        | 0.6  |
//! | multi-origin   | 18%   | 0            | 0.25 | 1    | 0      | 0.75  | 0.95        | 0.75 |
//! | delayed ROA    | 6%    | 0            | 0.1  | 0    | 0      | 0.1   | 1           | 0.35 |
//!
//! Parent always equals origin_match: on an invalid route, any covering
//! VRP held by the BGP origin is strictly less specific.
//!
//! "Near" routes sit within 300 m of the origin's other space; the rest are
//! 50 to 5000 km away. Hijacks set no relational feature except
//! alt_sources (5%); 8% have no location (as_dist 1), 20% are within 3 km
//! and the rest 20 to 15000 km away. After drawing, 5% of labels are
//! flipped and the hijack class is oversampled to the requested total.

use std::collections::{BTreeMap, BTreeSet};
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{oversample, Label, LabeledSample};
use crate::error::{Error, Result};
use crate::features::{f_as_dist, FeatureRow, NUM_FEATURES};
use crate::ingest::{
    write_as2org, write_as_rel, write_atomic, write_geo, write_hegemony, write_irr, DatasetKind,
    GeoIndex, GeoPoint, HegemonyScope, HegemonySeries, HegemonyStore, IrrIndex, OrgMap, RelGraph,
    RouteObject, SnapshotStore,
};
use crate::prefix::{Asn, Prefix};
use crate::rov::{write_announcement, write_vrp_csv, Announcement, RouteKey, Vrp, VrpRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenignShape {
    Deaggregation,
    Dependency,
    MultiOrigin,
    DelayedRoa,
}

impl BenignShape {
    pub const ALL: [BenignShape; 4] = [
        BenignShape::Deaggregation,
        BenignShape::Dependency,
        BenignShape::MultiOrigin,
        BenignShape::DelayedRoa,
    ];
}

/// How one benign cause fills in the relational features.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeProfile {
    pub share: f64,
    /// Chance each of the six relational features is set; depen draws
    /// U(0.1, 1) when set.
    pub set: [f64; 6],
    /// Chance the route sits within 300 m of the origin's other space.
    pub near: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HijackProfile {
    pub alt_sources: f64,
    /// Chance of no location at all.
    pub missing: f64,
    /// Chance of a hijacker within 3 km.
    pub near: f64,
}

fn draw_shape(profiles: &[ShapeProfile; 4], rng: &mut ChaCha8Rng) -> BenignShape {
    let total: f64 = profiles.iter().map(|p| p.share).sum();
    let mut x = rng.gen_range(0.0..total);
    for (shape, p) in BenignShape::ALL.into_iter().zip(profiles) {
        if x < p.share {
            return shape;
        }
        x -= p.share;
    }
    BenignShape::DelayedRoa
}

/// One benign-shaped vector drawn from `profile`.
pub fn benign_vector(profile: &ShapeProfile, rng: &mut ChaCha8Rng) -> [f64; NUM_FEATURES] {
    let mut v = [0.0; NUM_FEATURES];
    for (i, p) in profile.set.iter().enumerate() {
        if rng.gen_bool(*p) {
            v[i] = if i == 4 { rng.gen_range(0.1..1.0) } else { 1.0 };
        }
    }
    v[6] = if rng.gen_bool(profile.near) {
        f_as_dist(Some(rng.gen_range(0.0..0.3)))
    } else {
        f_as_dist(Some(rng.gen_range(50.0..5000.0)))
    };
    v
}

/// One hijack-shaped vector: no relations, mostly far away.
pub fn hijack_vector(profile: &HijackProfile, rng: &mut ChaCha8Rng) -> [f64; NUM_FEATURES] {
    let mut v = [0.0; NUM_FEATURES];
    v[5] = f64::from(u8::from(rng.gen_bool(profile.alt_sources)));
    let x: f64 = rng.gen();
    v[6] = if x < profile.missing {
        1.0
    } else if x < profile.missing + profile.near {
        f_as_dist(Some(rng.gen_range(0.0..3.0)))
    } else {
        f_as_dist(Some(rng.gen_range(20.0..15000.0)))
    };
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthParams {
    pub benign: usize,
    pub hijack: usize,
    pub label_noise: f64,
    /// Size after oversampling the minority class; `None` skips it.
    pub total: Option<usize>,
    /// In [`BenignShape::ALL`] order.
    pub shapes: [ShapeProfile; 4],
    pub hijacks: HijackProfile,
}

impl Default for GroundTruthParams {
    fn default() -> Self {
        let profile = |share, set, near| ShapeProfile { share, set, near };
        GroundTruthParams {
            benign: 2000,
            hijack: 415,
            label_noise: 0.05,
            total: Some(4000),
            shapes: [
                profile(0.46, [1.0, 0.5, 1.0, 1.0, 0.0, 0.9], 0.75),
                profile(0.30, [0.0, 1.0, 0.1, 0.0, 0.95, 0.65], 0.6),
                profile(0.18, [0.0, 0.25, 1.0, 0.0, 0.75, 0.95], 0.75),
                profile(0.06, [0.0, 0.1, 0.0, 0.0, 0.1, 1.0], 0.35),
            ],
            hijacks: HijackProfile {
                alt_sources: 0.05,
                missing: 0.08,
                near: 0.2,
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct GroundTruth {
    /// Noisy, oversampled training samples.
    pub samples: Vec<LabeledSample>,
    /// Clean draws by true shape.
    pub benign: Vec<[f64; NUM_FEATURES]>,
    pub hijack: Vec<[f64; NUM_FEATURES]>,
}

pub fn ground_truth(params: &GroundTruthParams, seed: u64) -> Result<GroundTruth> {
    if !(0.0..=0.5).contains(&params.label_noise) {
        return Err(Error::InvalidArgument(format!(
            "label noise {} outside [0, 0.5]",
            params.label_noise
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let benign: Vec<_> = (0..params.benign)
        .map(|_| {
            let shape = draw_shape(&params.shapes, &mut rng);
            benign_vector(&params.shapes[shape as usize], &mut rng)
        })
        .collect();
    let hijack: Vec<_> = (0..params.hijack)
        .map(|_| hijack_vector(&params.hijacks, &mut rng))
        .collect();
    let mut samples = Vec::with_capacity(benign.len() + hijack.len());
    let shaped = benign
        .iter()
        .map(|v| (v, Label::BenignConflict))
        .chain(hijack.iter().map(|v| (v, Label::Hijack)));
    for (v, label) in shaped {
        let label = if rng.gen_bool(params.label_noise) {
            match label {
                Label::BenignConflict => Label::Hijack,
                Label::Hijack => Label::BenignConflict,
            }
        } else {
            label
        };
        samples.push(LabeledSample::new(*v, label));
    }
    if let Some(total) = params.total {
        let benign_n = samples
            .iter()
            .filter(|s| s.label == Label::BenignConflict)
            .count();
        let hijack_n = samples.len() - benign_n;
        let majority = benign_n.max(hijack_n);
        if total < samples.len() || total - majority < benign_n.min(hijack_n) {
            return Err(Error::InvalidArgument(format!(
                "cannot oversample {} samples to {total}",
                samples.len()
            )));
        }
        samples = oversample(&samples, total - majority, rng.gen())?;
    }
    Ok(GroundTruth {
        samples,
        benign,
        hijack,
    })
}

/// Placeholder keys so ground truth can travel as a feature CSV.
pub fn ground_truth_rows(samples: &[LabeledSample]) -> Vec<FeatureRow> {
    let doc: Prefix = "192.0.2.0/24".parse().expect("static prefix");
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| FeatureRow {
            key: RouteKey::new(Asn(1_000_000 + i as u32), doc),
            ts: 0,
            features: s.features.clone(),
            label: Some(s.label),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// world corpus

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusParams {
    pub start: NaiveDate,
    pub days: usize,
    pub announcements_per_day: usize,
    pub ases: usize,
    pub benign_routes: usize,
    pub hijack_events: usize,
    pub seed: u64,
}

impl Default for CorpusParams {
    fn default() -> Self {
        CorpusParams {
            start: NaiveDate::from_ymd_opt(2022, 10, 1).expect("static date"),
            days: 14,
            announcements_per_day: 100_000,
            ases: 4000,
            benign_routes: 1500,
            hijack_events: 60,
            seed: 7,
        }
    }
}

/// Hand labels for every invalid route the world generates.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusLabels {
    /// Seen from the first day through the last week, never resolved.
    pub persistent_benign: BTreeSet<RouteKey>,
    pub transient_benign: BTreeSet<RouteKey>,
    /// Benign routes that become valid partway through.
    pub resolved_benign: BTreeSet<RouteKey>,
    pub hijacks: BTreeSet<RouteKey>,
    #[serde(with = "shape_pairs")]
    pub shapes: BTreeMap<RouteKey, BenignShape>,
}

// JSON object keys must be strings, so the map travels as a list of pairs.
mod shape_pairs {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        m: &BTreeMap<RouteKey, BenignShape>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<RouteKey, BenignShape>, D::Error> {
        Ok(Vec::<(RouteKey, BenignShape)>::deserialize(d)?
            .into_iter()
            .collect())
    }
}

/// Paths written by [`write_corpus`].
#[derive(Clone, Debug)]
pub struct CorpusLayout {
    pub root: PathBuf,
}

impl CorpusLayout {
    pub fn snapshots(&self) -> PathBuf {
        self.root.join("snapshots")
    }

    pub fn announcements(&self, date: NaiveDate) -> PathBuf {
        self.root
            .join("announcements")
            .join(format!("{date}.jsonl"))
    }

    pub fn labels(&self) -> PathBuf {
        self.root.join("labels.json")
    }

    pub fn training(&self) -> PathBuf {
        self.root.join("training.csv")
    }
}

struct AsInfo {
    asn: Asn,
    site: GeoPoint,
    blocks: Vec<Prefix>,
    v6: Option<Prefix>,
    has_roa: bool,
    providers: Vec<usize>,
}

#[derive(Clone, Copy)]
enum Presence {
    Always,
    /// Seen on every day in `[from, to]`.
    Span(usize, usize),
    /// Present most days, always on the first and the last two.
    Mostly,
}

struct RouteSpec {
    key: RouteKey,
    presence: Presence,
    /// Seconds into the day of the first sighting, fixed per route.
    offset: i64,
}

fn v4_block(i: usize) -> Prefix {
    // /20 blocks from 20.0.0.0 up, well clear of the special-purpose ranges
    let base = (20u32 << 24) + (i as u32) * 4096;
    Prefix::new(IpAddr::V4(Ipv4Addr::from(base)), 20).expect("aligned block")
}

fn v4_sub(block: &Prefix, idx: u32) -> Prefix {
    let base = (block.bits() >> 96) as u32 + idx * 256;
    Prefix::new(IpAddr::V4(Ipv4Addr::from(base)), 24).expect("aligned /24")
}

fn v6_block(i: usize) -> Prefix {
    let base: u128 = (0x2a00u128 << 112) + ((i as u128) << 96);
    Prefix::new(IpAddr::V6(Ipv6Addr::from(base)), 32).expect("aligned /32")
}

fn v6_sub(block: &Prefix, idx: u32) -> Prefix {
    let base = block.bits() + (u128::from(idx) << 80);
    Prefix::new(IpAddr::V6(Ipv6Addr::from(base)), 48).expect("aligned /48")
}

fn random_site(rng: &mut ChaCha8Rng) -> GeoPoint {
    GeoPoint::new(rng.gen_range(-55.0..70.0), rng.gen_range(-180.0..180.0)).expect("in range")
}

/// Rounds so values survive a text round trip unchanged.
fn q(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Daily samples of a steady local dependency between two ASes.
fn local_series(
    origin: Asn,
    dependent: Asn,
    level: f64,
    start: i64,
    days: usize,
) -> HegemonySeries {
    HegemonySeries::new(
        HegemonyScope::Local { origin, dependent },
        (0..days as i64 + 5)
            .map(|d| (start + d * DAY, level))
            .collect(),
    )
}

const TRANSIT: usize = 40;
const HOUR: i64 = 3600;
const DAY: i64 = 86_400;

fn day_start(date: NaiveDate) -> i64 {
    date.and_hms_opt(0, 0, 0)
        .expect("midnight")
        .and_utc()
        .timestamp()
}

/// Generates the world, writes datasets, announcements, labels and a
/// training set under `root`, and returns the labels.
pub fn write_corpus(root: &Path, params: &CorpusParams) -> Result<CorpusLabels> {
    if params.ases <= TRANSIT * 2 || params.days == 0 {
        return Err(Error::InvalidArgument(
            "corpus needs more ASes and at least one day".into(),
        ));
    }
    let layout = CorpusLayout {
        root: root.to_path_buf(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut ases: Vec<AsInfo> = Vec::with_capacity(params.ases);
    let mut next_block = 0usize;
    for i in 0..params.ases {
        let n_blocks = if i < TRANSIT { 6 } else { rng.gen_range(1..=4) };
        let blocks = (0..n_blocks)
            .map(|_| {
                next_block += 1;
                v4_block(next_block - 1)
            })
            .collect();
        let providers = if i < TRANSIT {
            Vec::new()
        } else {
            let mut p = vec![rng.gen_range(0..TRANSIT)];
            if rng.gen_bool(0.4) {
                let second = rng.gen_range(0..TRANSIT);
                if second != p[0] {
                    p.push(second);
                }
            }
            p
        };
        ases.push(AsInfo {
            asn: Asn(1000 + i as u32),
            site: random_site(&mut rng),
            blocks,
            v6: rng.gen_bool(0.3).then(|| v6_block(i)),
            has_roa: i < TRANSIT || rng.gen_bool(0.6),
            providers,
        });
    }

    let mut rel = RelGraph::new();
    for (c, info) in ases.iter().enumerate() {
        for p in &info.providers {
            rel.add_provider_customer(ases[*p].asn, ases[c].asn)
                .map_err(Error::InvalidArgument)?;
        }
    }
    for a in 0..TRANSIT {
        let b = (a + 1) % TRANSIT;
        rel.add_peer(ases[a].asn, ases[b].asn)
            .map_err(Error::InvalidArgument)?;
    }

    let mut orgs = OrgMap::new();
    for info in &ases {
        orgs.insert(info.asn, format!("ORG-{}", info.asn.0));
    }
    // sibling pairs share an organization and a site
    let mut sibling_of: BTreeMap<usize, usize> = BTreeMap::new();
    let mut candidates: Vec<usize> = (TRANSIT..params.ases).collect();
    candidates.shuffle(&mut rng);
    for pair in candidates.chunks(2).take(params.ases / 20) {
        if let [a, b] = *pair {
            orgs.insert(ases[b].asn, format!("ORG-{}", ases[a].asn.0));
            ases[b].site = ases[a].site;
            sibling_of.insert(a, b);
            sibling_of.insert(b, a);
        }
    }

    let mut irr = IrrIndex::new();
    for info in &ases {
        if rng.gen_bool(0.7) {
            for b in info.blocks.iter().chain(info.v6.iter()) {
                irr.insert(RouteObject {
                    prefix: *b,
                    origin: info.asn,
                    source: "RADB".into(),
                });
            }
        }
    }

    let mut geo = GeoIndex::new();
    for info in &ases {
        for b in info.blocks.iter().chain(info.v6.iter()) {
            geo.insert(*b, info.site);
        }
    }

    let mut vrps: Vec<Vrp> = Vec::new();
    for info in ases.iter().filter(|a| a.has_roa) {
        for b in info.blocks.iter().chain(info.v6.iter()) {
            vrps.push(Vrp::new(info.asn, *b, b.len())?);
        }
    }
    let mut late_vrps: Vec<Vrp> = Vec::new();

    let mut labels = CorpusLabels::default();
    let mut routes: Vec<RouteSpec> = Vec::new();
    let mut used: BTreeSet<RouteKey> = BTreeSet::new();
    let mut withdrawn: BTreeSet<Prefix> = BTreeSet::new();
    let mut hegemony: Vec<HegemonySeries> = Vec::new();
    let mut invalid_origins: BTreeSet<usize> = BTreeSet::new();
    let series_start = day_start(params.start) - 3 * DAY;
    let series_end = day_start(params.start) + (params.days as i64 + 2) * DAY;
    let last = params.days - 1;

    let roa_holders: Vec<usize> = (TRANSIT..params.ases)
        .filter(|i| ases[*i].has_roa)
        .collect();
    // the world follows the ground-truth profiles where it draws relations
    let profiles = GroundTruthParams::default().shapes;
    let mut local_pairs: BTreeSet<(Asn, Asn)> = BTreeSet::new();
    let mut attempts = 0;
    while labels.shapes.len() < params.benign_routes && attempts < params.benign_routes * 20 {
        attempts += 1;
        let shape = draw_shape(&profiles, &mut rng);
        let (origin, prefix) = match shape {
            BenignShape::Deaggregation => {
                let a = *roa_holders.choose(&mut rng).expect("roa holders");
                let info = &ases[a];
                let prefix = match (info.v6, rng.gen_bool(0.2)) {
                    (Some(v6), true) => v6_sub(&v6, rng.gen_range(0..65536)),
                    _ => v4_sub(
                        info.blocks.choose(&mut rng).expect("block"),
                        rng.gen_range(0..16),
                    ),
                };
                (a, prefix)
            }
            BenignShape::Dependency => {
                let c = rng.gen_range(TRANSIT..params.ases);
                let p = ases[c].providers[0];
                let prefix = v4_sub(
                    ases[p].blocks.choose(&mut rng).expect("block"),
                    rng.gen_range(0..16),
                );
                if rng.gen_bool(0.8) {
                    // geolocation databases place reassigned space at the user
                    geo.insert(prefix, ases[c].site);
                }
                if rng.gen_bool(profiles[BenignShape::Dependency as usize].set[4])
                    && local_pairs.insert((ases[c].asn, ases[p].asn))
                {
                    let level = q(rng.gen_range(0.1..0.9));
                    hegemony.push(local_series(
                        ases[c].asn,
                        ases[p].asn,
                        level,
                        series_start,
                        params.days,
                    ));
                }
                (c, prefix)
            }
            BenignShape::MultiOrigin => {
                let Some((&a, &b)) = sibling_of
                    .iter()
                    .nth(rng.gen_range(0..sibling_of.len().max(1)))
                else {
                    continue;
                };
                if !ases[a].has_roa {
                    continue;
                }
                let block = *ases[a].blocks.choose(&mut rng).expect("block");
                let prefix = if rng.gen_bool(0.5) {
                    block
                } else {
                    v4_sub(&block, rng.gen_range(0..16))
                };
                if rng.gen_bool(profiles[BenignShape::MultiOrigin as usize].set[4])
                    && local_pairs.insert((ases[b].asn, ases[a].asn))
                {
                    let level = q(rng.gen_range(0.1..0.9));
                    hegemony.push(local_series(
                        ases[b].asn,
                        ases[a].asn,
                        level,
                        series_start,
                        params.days,
                    ));
                }
                (b, prefix)
            }
            BenignShape::DelayedRoa => {
                let y = *roa_holders.choose(&mut rng).expect("roa holders");
                if ases[y].blocks.len() < 2 {
                    continue;
                }
                let block = *ases[y].blocks.last().expect("block");
                if withdrawn.contains(&block) {
                    continue;
                }
                let x = rng.gen_range(TRANSIT..params.ases);
                if x == y || sibling_of.get(&x) == Some(&y) || ases[x].providers.contains(&y) {
                    continue;
                }
                withdrawn.insert(block);
                irr.insert(RouteObject {
                    prefix: block,
                    origin: ases[x].asn,
                    source: "RIPE".into(),
                });
                if rng.gen_bool(0.5) {
                    geo.insert(block, ases[x].site);
                }
                (x, block)
            }
        };
        let key = RouteKey::new(ases[origin].asn, prefix);
        if !used.insert(key) {
            continue;
        }
        invalid_origins.insert(origin);
        labels.shapes.insert(key, shape);
        let roll = rng.gen_range(0..100);
        let presence = if shape == BenignShape::DelayedRoa && roll < 15 {
            late_vrps.push(Vrp::new(key.origin, key.prefix, key.prefix.len())?);
            labels.resolved_benign.insert(key);
            Presence::Always
        } else if roll < 75 {
            labels.persistent_benign.insert(key);
            if roll < 50 {
                Presence::Always
            } else {
                Presence::Mostly
            }
        } else {
            labels.transient_benign.insert(key);
            let from = rng.gen_range(0..params.days);
            Presence::Span(from, (from + rng.gen_range(0..3)).min(last))
        };
        routes.push(RouteSpec {
            key,
            presence,
            offset: rng.gen_range(0..DAY - 2 * HOUR),
        });
    }

    // hijackers are ordinary stubs unrelated to their victims
    let mut hijackers: BTreeSet<usize> = BTreeSet::new();
    let mut events = 0;
    while events < params.hijack_events {
        let h = rng.gen_range(TRANSIT..params.ases);
        let v = *roa_holders.choose(&mut rng).expect("roa holders");
        if h == v
            || hijackers.contains(&h)
            || invalid_origins.contains(&h)
            || sibling_of.get(&h) == Some(&v)
            || ases[h].providers.contains(&v)
            || ases[v].providers.contains(&h)
            || great_circle(ases[h].site, ases[v].site) < 100.0
        {
            continue;
        }
        let start = rng.gen_range(0..params.days);
        let end = (start + rng.gen_range(0..3)).min(last);
        let offset = rng.gen_range(2 * HOUR..DAY - 2 * HOUR);
        let n = rng.gen_range(1..=3);
        let mut keys = Vec::new();
        for _ in 0..n {
            let block = *ases[v].blocks.choose(&mut rng).expect("block");
            let prefix = if rng.gen_bool(0.5) {
                block
            } else {
                v4_sub(&block, rng.gen_range(0..16))
            };
            let key = RouteKey::new(ases[h].asn, prefix);
            if used.insert(key) {
                keys.push(key);
            }
        }
        if keys.is_empty() {
            continue;
        }
        hijackers.insert(h);
        events += 1;
        for key in keys {
            labels.hijacks.insert(key);
            routes.push(RouteSpec {
                key,
                presence: Presence::Span(start, end),
                offset,
            });
        }
        // most hijacks show up as a jump in the hijacker's visibility
        let t = day_start(params.start) + start as i64 * DAY + offset;
        let base = q(rng.gen_range(0.001..0.02));
        let spike = rng.gen_bool(0.7).then(|| {
            let len = rng.gen_range(2..48) * HOUR;
            (
                t - t.rem_euclid(HOUR),
                t + len,
                q(base + rng.gen_range(0.05..0.2)),
            )
        });
        let samples = (series_start..=series_end)
            .step_by(HOUR as usize)
            .map(|ts| match spike {
                Some((from, to, level)) if ts >= from && ts <= to => (ts, level),
                _ => (ts, base),
            })
            .collect();
        hegemony.push(HegemonySeries::new(
            HegemonyScope::Global { asn: ases[h].asn },
            samples,
        ));
    }
    // a share of benign invalid origins carries steady visibility data
    for o in invalid_origins.iter().step_by(5) {
        let level = q(rng.gen_range(0.001..0.05));
        hegemony.push(HegemonySeries::new(
            HegemonyScope::Global { asn: ases[*o].asn },
            (series_start..=series_end)
                .step_by(HOUR as usize)
                .map(|ts| (ts, level))
                .collect(),
        ));
    }

    // everyone announces their own space every day
    for info in &ases {
        for b in info.blocks.iter().chain(info.v6.iter()) {
            if withdrawn.contains(b) {
                continue;
            }
            let key = RouteKey::new(info.asn, *b);
            if used.insert(key) {
                routes.push(RouteSpec {
                    key,
                    presence: Presence::Always,
                    offset: rng.gen_range(0..DAY - 2 * HOUR),
                });
            }
        }
    }

    let day0 = params.start - Duration::days(1);
    let mut store = SnapshotStore::open(layout.snapshots())?;
    let rows = |v: &[Vrp]| {
        v.iter()
            .map(|vrp| VrpRow {
                vrp: *vrp,
                trust_anchor: "ripe".into(),
            })
            .collect::<Vec<_>>()
    };
    store.put(DatasetKind::Vrps, day0, &write_vrp_csv(&rows(&vrps)))?;
    if !late_vrps.is_empty() && params.days > 7 {
        let mut all = vrps.clone();
        all.extend(late_vrps.iter().copied());
        store.put(
            DatasetKind::Vrps,
            params.start + Duration::days(7),
            &write_vrp_csv(&rows(&all)),
        )?;
    }
    store.put(DatasetKind::AsRel, day0, &write_as_rel(&rel))?;
    store.put(DatasetKind::As2Org, day0, &write_as2org(&orgs))?;
    store.put(DatasetKind::Irr, day0, &write_irr(&irr))?;
    store.put(DatasetKind::Geo, day0, &write_geo(&geo))?;
    store.put(
        DatasetKind::Hegemony,
        day0,
        &write_hegemony(&HegemonyStore::from_series(hegemony)),
    )?;

    let index_of: BTreeMap<Asn, usize> = ases.iter().enumerate().map(|(i, a)| (a.asn, i)).collect();
    for d in 0..params.days {
        let date = params.start + Duration::days(d as i64);
        let active: Vec<&RouteSpec> = routes
            .iter()
            .filter(|r| match r.presence {
                Presence::Always => true,
                Presence::Span(a, b) => d >= a && d <= b,
                Presence::Mostly => d == 0 || d + 2 > last || rng.gen_bool(0.85),
            })
            .collect();
        let mut anns: Vec<Announcement> = Vec::with_capacity(params.announcements_per_day);
        let copies = params.announcements_per_day / active.len().max(1);
        let extra = params.announcements_per_day % active.len().max(1);
        for (i, r) in active.iter().enumerate() {
            let origin = index_of[&r.key.origin];
            let n = copies + usize::from(i < extra);
            for c in 0..n {
                let peer = ases[rng.gen_range(0..TRANSIT)].asn;
                let mut path = vec![peer];
                if let Some(p) = ases[origin].providers.first() {
                    if ases[*p].asn != peer {
                        path.push(ases[*p].asn);
                    }
                }
                if r.key.origin != peer {
                    path.push(r.key.origin);
                }
                let ts = day_start(date) + r.offset + (c as i64) * 60;
                anns.push(Announcement::new(r.key.prefix, path, ts, Some(peer))?);
            }
        }
        anns.shuffle(&mut rng);
        let mut text = String::with_capacity(anns.len() * 80);
        for a in &anns {
            text.push_str(&write_announcement(a));
            text.push('\n');
        }
        write_atomic(&layout.announcements(date), text.as_bytes())?;
    }

    let gt = ground_truth(&GroundTruthParams::default(), params.seed)?;
    let csv = crate::features::write_feature_csv(&ground_truth_rows(&gt.samples));
    write_atomic(&layout.training(), csv.as_bytes())?;
    write_atomic(
        &layout.labels(),
        serde_json::to_string_pretty(&labels)?.as_bytes(),
    )?;
    Ok(labels)
}

fn great_circle(a: GeoPoint, b: GeoPoint) -> f64 {
    crate::features::great_circle_km(a, b)
}

pub fn read_labels(path: &Path) -> Result<CorpusLabels> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
