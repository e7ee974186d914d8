use std::collections::{BTreeMap, BTreeSet};
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use super::{Diagnostic, Parsed};
use crate::prefix::{Asn, Prefix};
use crate::trie::PrefixTrie;

/// A location in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Option<Self> {
        ((-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon))
            .then_some(GeoPoint { lat, lon })
    }
}

/// Prefix geolocation with longest-prefix-match lookup, plus the prefixes
/// attributed to each AS.
#[derive(Clone, Debug, Default)]
pub struct GeoIndex {
    trie: PrefixTrie<GeoPoint>,
    rows: BTreeMap<Prefix, GeoPoint>,
    asn_prefixes: BTreeMap<Asn, BTreeSet<Prefix>>,
}

impl PartialEq for GeoIndex {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows && self.asn_prefixes == other.asn_prefixes
    }
}

impl GeoIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, network: Prefix, point: GeoPoint) {
        self.trie.insert(&network, point);
        self.rows.insert(network, point);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Location of the most specific network containing `addr`.
    pub fn lookup(&self, addr: IpAddr) -> Option<GeoPoint> {
        self.trie
            .longest_match(&Prefix::host(addr))
            .map(|(_, p)| *p)
    }

    /// Location of a prefix, taken at its network address.
    pub fn locate(&self, prefix: &Prefix) -> Option<GeoPoint> {
        self.lookup(prefix.addr())
    }

    pub fn rows(&self) -> impl Iterator<Item = (&Prefix, &GeoPoint)> {
        self.rows.iter()
    }

    /// Records that `asn` originates `prefix`.
    pub fn attach_prefix(&mut self, asn: Asn, prefix: Prefix) {
        self.asn_prefixes.entry(asn).or_default().insert(prefix);
    }

    /// Prefixes attributed to `asn`, in sorted order.
    pub fn prefixes_of(&self, asn: Asn) -> Vec<Prefix> {
        self.asn_prefixes
            .get(&asn)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default()
    }
}

/// Parses `network,latitude,longitude` rows.
pub fn parse_geo(text: &str) -> Parsed<GeoIndex> {
    let mut index = GeoIndex::new();
    let mut diagnostics = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("network")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 3 {
            diagnostics.push(Diagnostic::new(
                i + 1,
                "expected network,latitude,longitude",
            ));
            continue;
        }
        let network = match fields[0].parse::<Prefix>() {
            Ok(p) => p,
            Err(e) => {
                diagnostics.push(Diagnostic::new(i + 1, e.to_string()));
                continue;
            }
        };
        let point = match (fields[1].parse::<f64>(), fields[2].parse::<f64>()) {
            (Ok(lat), Ok(lon)) => GeoPoint::new(lat, lon),
            _ => None,
        };
        match point {
            Some(p) => index.insert(network, p),
            None => diagnostics.push(Diagnostic::new(i + 1, "coordinates out of range")),
        }
    }
    Parsed::new(index, diagnostics)
}

pub fn write_geo(index: &GeoIndex) -> String {
    let mut out = String::from("network,latitude,longitude\n");
    for (net, p) in index.rows() {
        out.push_str(&format!("{net},{},{}\n", p.lat, p.lon));
    }
    out
}
