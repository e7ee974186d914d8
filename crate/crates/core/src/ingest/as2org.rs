use std::collections::BTreeMap;

use log::warn;
use serde_json::Value;

use super::{Diagnostic, Parsed};
use crate::prefix::Asn;

/// ASN to organization id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OrgMap {
    orgs: BTreeMap<Asn, String>,
}

impl OrgMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, asn: Asn, org: impl Into<String>) -> Option<String> {
        self.orgs.insert(asn, org.into())
    }

    pub fn org_of(&self, asn: Asn) -> Option<&str> {
        self.orgs.get(&asn).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.orgs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orgs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Asn, &str)> {
        self.orgs.iter().map(|(a, o)| (*a, o.as_str()))
    }
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, names: &[&str]) -> Option<&'a Value> {
    names.iter().find_map(|n| obj.get(*n))
}

fn asn_value(v: &Value) -> Option<Asn> {
    match v {
        Value::Number(n) => n.as_u64().and_then(|n| u32::try_from(n).ok()).map(Asn),
        Value::String(s) => s.parse().ok(),
        _ => None,
    }
}

/// Parses CAIDA as2org JSON-lines. Only ASN records are used; organization
/// and other record types are ignored. A repeated ASN keeps its last org.
pub fn parse_as2org(text: &str) -> Parsed<OrgMap> {
    let mut map = OrgMap::new();
    let mut diagnostics = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let obj = match serde_json::from_str::<Value>(line) {
            Ok(Value::Object(o)) => o,
            Ok(_) => {
                diagnostics.push(Diagnostic::new(i + 1, "record is not an object"));
                continue;
            }
            Err(e) => {
                diagnostics.push(Diagnostic::new(i + 1, e.to_string()));
                continue;
            }
        };
        let kind = obj.get("type").and_then(Value::as_str).unwrap_or("ASN");
        if !kind.eq_ignore_ascii_case("asn") {
            continue;
        }
        let Some(asn) = field(&obj, &["asn", "aut"]).and_then(asn_value) else {
            diagnostics.push(Diagnostic::new(i + 1, "missing or bad asn"));
            continue;
        };
        let org = match field(&obj, &["organizationId", "org_id"]) {
            Some(Value::String(s)) if !s.is_empty() => s.clone(),
            _ => {
                diagnostics.push(Diagnostic::new(i + 1, "missing org_id"));
                continue;
            }
        };
        if let Some(prev) = map.insert(asn, org.clone()) {
            if prev != org {
                warn!("as2org: AS{asn} moved from {prev} to {org}");
                diagnostics.push(Diagnostic::new(
                    i + 1,
                    format!("AS{asn} repeated with org {org} (was {prev}); last record wins"),
                ));
            }
        }
    }
    Parsed::new(map, diagnostics)
}

pub fn write_as2org(map: &OrgMap) -> String {
    let mut out = String::new();
    for (asn, org) in map.iter() {
        let rec = serde_json::json!({
            "type": "ASN",
            "asn": asn.to_string(),
            "organizationId": org,
        });
        out.push_str(&rec.to_string());
        out.push('\n');
    }
    out
}
