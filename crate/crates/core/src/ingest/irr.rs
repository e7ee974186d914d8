use std::collections::BTreeSet;

use super::{Diagnostic, Parsed};
use crate::prefix::{Asn, Prefix};
use crate::trie::PrefixTrie;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct RouteObject {
    pub prefix: Prefix,
    pub origin: Asn,
    pub source: String,
}

/// IRR route objects indexed by prefix.
#[derive(Clone, Debug, Default)]
pub struct IrrIndex {
    trie: PrefixTrie<BTreeSet<(Asn, String)>>,
    objects: BTreeSet<RouteObject>,
}

impl PartialEq for IrrIndex {
    fn eq(&self, other: &Self) -> bool {
        self.objects == other.objects
    }
}

impl IrrIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, obj: RouteObject) {
        self.trie
            .entry_or_insert_with(&obj.prefix, BTreeSet::new)
            .insert((obj.origin, obj.source.clone()));
        self.objects.insert(obj);
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn objects(&self) -> impl Iterator<Item = &RouteObject> {
        self.objects.iter()
    }

    /// Whether some registry holds a route object for `origin` equal to or
    /// covering `prefix`.
    pub fn has_covering(&self, origin: Asn, prefix: &Prefix) -> bool {
        self.trie
            .covering(prefix)
            .into_iter()
            .any(|(_, objs)| objs.iter().any(|(o, _)| *o == origin))
    }
}

fn flush(
    attrs: &mut Vec<(String, String)>,
    start: usize,
    index: &mut IrrIndex,
    diagnostics: &mut Vec<Diagnostic>,
) {
    if attrs.is_empty() {
        return;
    }
    let get = |key: &str| {
        attrs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    };
    let route = get("route").or_else(|| get("route6"));
    let result = match (route, get("origin")) {
        (None, _) => {
            // not a route object (e.g. aut-num); ignore silently
            attrs.clear();
            return;
        }
        (Some(_), None) => Err("route object without origin".to_string()),
        (Some(r), Some(o)) => match (r.parse::<Prefix>(), o.parse::<Asn>()) {
            (Ok(prefix), Ok(origin)) => Ok(RouteObject {
                prefix,
                origin,
                source: get("source").unwrap_or("UNKNOWN").to_string(),
            }),
            (Err(e), _) => Err(e.to_string()),
            (_, Err(e)) => Err(e.to_string()),
        },
    };
    match result {
        Ok(obj) => index.insert(obj),
        Err(reason) => diagnostics.push(Diagnostic::new(start, reason)),
    }
    attrs.clear();
}

/// Parses RPSL text: blank-line separated paragraphs of `key: value` lines.
pub fn parse_irr(text: &str) -> Parsed<IrrIndex> {
    let mut index = IrrIndex::new();
    let mut diagnostics = Vec::new();
    let mut attrs: Vec<(String, String)> = Vec::new();
    let mut start = 0;
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            flush(&mut attrs, start, &mut index, &mut diagnostics);
            continue;
        }
        if raw.starts_with('%') || raw.starts_with('#') {
            continue;
        }
        if raw.starts_with([' ', '\t', '+']) {
            // continuation line
            if let Some(last) = attrs.last_mut() {
                let cont = raw.trim_start_matches('+').trim();
                if !cont.is_empty() {
                    last.1.push(' ');
                    last.1.push_str(cont);
                }
            }
            continue;
        }
        if attrs.is_empty() {
            start = i + 1;
        }
        match raw.split_once(':') {
            Some((k, v)) => {
                attrs.push((k.trim().to_ascii_lowercase(), strip_comment(v).to_string()))
            }
            None => diagnostics.push(Diagnostic::new(i + 1, "line is not key: value")),
        }
    }
    flush(&mut attrs, start, &mut index, &mut diagnostics);
    Parsed::new(index, diagnostics)
}

fn strip_comment(v: &str) -> &str {
    v.split('#').next().unwrap_or("").trim()
}

pub fn write_irr(index: &IrrIndex) -> String {
    let mut out = String::new();
    for obj in index.objects() {
        let key = match obj.prefix.family() {
            crate::prefix::Family::V4 => "route",
            crate::prefix::Family::V6 => "route6",
        };
        out.push_str(&format!(
            "{key}: {}\norigin: AS{}\nsource: {}\n\n",
            obj.prefix, obj.origin, obj.source
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_object() {
        let parsed = parse_irr("route: 193.2.0.0/15\norigin: AS3215\n");
        assert!(parsed.is_clean());
        assert_eq!(parsed.value.len(), 1);
        let p: Prefix = "193.2.0.0/15".parse().unwrap();
        assert!(parsed.value.has_covering(Asn(3215), &p));
        assert!(parsed
            .value
            .has_covering(Asn(3215), &"193.2.35.0/24".parse().unwrap()));
        assert!(!parsed.value.has_covering(Asn(1272), &p));
    }

    #[test]
    fn empty() {
        assert!(parse_irr("").value.is_empty());
    }

    #[test]
    fn one_malformed_of_three() {
        let text = "% comment\nroute: 10.0.0.0/8\ndescr: a\norigin: AS1\nsource: RIPE\n\nroute: 11.0.0.0/8\ndescr: missing origin\n\nroute6: 2001:db8::/32\norigin: AS2 # trailing\nsource: RADB\n";
        let parsed = parse_irr(text);
        assert_eq!(parsed.value.len(), 2);
        assert_eq!(parsed.diagnostics.len(), 1);
        assert_eq!(parsed.diagnostics[0].line, 7);
        assert_eq!(parse_irr(&write_irr(&parsed.value)).value, parsed.value);
    }

    #[test]
    fn non_route_objects_ignored() {
        let parsed = parse_irr("aut-num: AS1\nas-name: X\n\nroute: 10.0.0.0/8\norigin: AS1\n");
        assert!(parsed.is_clean());
        assert_eq!(parsed.value.len(), 1);
    }
}
