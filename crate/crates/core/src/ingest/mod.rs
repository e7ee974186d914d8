//! Parsers for the external datasets feature computation draws on, and the
//! dated snapshot store that holds them.
//!
//! Every parser is total: it returns whatever it could read together with a
//! list of [`Diagnostic`]s for the records it had to skip.

mod as2org;
mod geo;
mod hegemony;
mod irr;
mod relationships;
mod snapshot;

pub use as2org::{parse_as2org, write_as2org, OrgMap};
pub use geo::{parse_geo, write_geo, GeoIndex, GeoPoint};
pub use hegemony::{parse_hegemony, write_hegemony, HegemonyScope, HegemonySeries, HegemonyStore};
pub use irr::{parse_irr, write_irr, IrrIndex, RouteObject};
pub use relationships::{parse_as_rel, write_as_rel, RelGraph};
pub(crate) use snapshot::write_atomic;
pub use snapshot::{DatasetKind, SnapshotStore, Snapshots};

use serde::{Deserialize, Serialize};

/// A record rejected by a parser.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// 1-based line number of the offending record.
    pub line: usize,
    pub reason: String,
}

impl Diagnostic {
    pub fn new(line: usize, reason: impl Into<String>) -> Self {
        Diagnostic {
            line,
            reason: reason.into(),
        }
    }
}

/// A parsed artifact and the diagnostics collected along the way.
#[derive(Clone, Debug)]
pub struct Parsed<T> {
    pub value: T,
    pub diagnostics: Vec<Diagnostic>,
}

impl<T> Parsed<T> {
    pub fn new(value: T, diagnostics: Vec<Diagnostic>) -> Self {
        Parsed { value, diagnostics }
    }

    pub fn is_clean(&self) -> bool {
        self.diagnostics.is_empty()
    }
}
