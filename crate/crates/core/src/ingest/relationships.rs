use std::collections::{BTreeMap, BTreeSet};

use super::{Diagnostic, Parsed};
use crate::prefix::Asn;

/// AS relationship graph in CAIDA serial-1/serial-2 form.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RelGraph {
    /// provider -> customers
    customers: BTreeMap<Asn, BTreeSet<Asn>>,
    /// customer -> providers
    providers: BTreeMap<Asn, BTreeSet<Asn>>,
    /// unordered peer pairs stored as (low, high)
    peers: BTreeSet<(Asn, Asn)>,
}

fn ordered(a: Asn, b: Asn) -> (Asn, Asn) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl RelGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_provider_of(&self, provider: Asn, customer: Asn) -> bool {
        self.customers
            .get(&provider)
            .is_some_and(|c| c.contains(&customer))
    }

    pub fn are_peers(&self, a: Asn, b: Asn) -> bool {
        self.peers.contains(&ordered(a, b))
    }

    /// Provider-customer edge in either direction.
    pub fn provider_customer(&self, a: Asn, b: Asn) -> bool {
        self.is_provider_of(a, b) || self.is_provider_of(b, a)
    }

    pub fn add_provider_customer(&mut self, provider: Asn, customer: Asn) -> Result<(), String> {
        if provider == customer {
            return Err(format!("self edge on AS{provider}"));
        }
        if self.is_provider_of(customer, provider) {
            return Err(format!(
                "AS{provider}->AS{customer} contradicts existing AS{customer}->AS{provider}"
            ));
        }
        self.customers.entry(provider).or_default().insert(customer);
        self.providers.entry(customer).or_default().insert(provider);
        Ok(())
    }

    pub fn add_peer(&mut self, a: Asn, b: Asn) -> Result<(), String> {
        if a == b {
            return Err(format!("self edge on AS{a}"));
        }
        self.peers.insert(ordered(a, b));
        Ok(())
    }

    pub fn provider_customer_edges(&self) -> impl Iterator<Item = (Asn, Asn)> + '_ {
        self.customers
            .iter()
            .flat_map(|(p, cs)| cs.iter().map(move |c| (*p, *c)))
    }

    pub fn peer_edges(&self) -> impl Iterator<Item = (Asn, Asn)> + '_ {
        self.peers.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.customers.values().map(BTreeSet::len).sum::<usize>() + self.peers.len()
    }
}

/// Parses `asn|asn|type[|source]` lines; type -1 is provider->customer, 0 is peer.
pub fn parse_as_rel(text: &str) -> Parsed<RelGraph> {
    let mut graph = RelGraph::new();
    let mut diagnostics = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('|');
        let (a, b, kind) = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), Some(k)) => (a, b, k),
            _ => {
                diagnostics.push(Diagnostic::new(i + 1, "expected asn|asn|type"));
                continue;
            }
        };
        let (a, b) = match (a.trim().parse::<u32>(), b.trim().parse::<u32>()) {
            (Ok(a), Ok(b)) => (Asn(a), Asn(b)),
            _ => {
                diagnostics.push(Diagnostic::new(i + 1, "non-integer AS number"));
                continue;
            }
        };
        let res = match kind.trim() {
            "-1" => graph.add_provider_customer(a, b),
            "0" => graph.add_peer(a, b),
            other => Err(format!("unknown relationship type {other:?}")),
        };
        if let Err(reason) = res {
            diagnostics.push(Diagnostic::new(i + 1, reason));
        }
    }
    Parsed::new(graph, diagnostics)
}

pub fn write_as_rel(graph: &RelGraph) -> String {
    let mut out = String::from("# provider|customer|-1 and peer|peer|0\n");
    for (p, c) in graph.provider_customer_edges() {
        out.push_str(&format!("{p}|{c}|-1\n"));
    }
    for (a, b) in graph.peer_edges() {
        out.push_str(&format!("{a}|{b}|0\n"));
    }
    out
}
