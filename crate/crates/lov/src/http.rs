//! Read-only HTTP view of the published whitelist.
//!
//! The server never touches the store itself. It watches the published
//! `whitelist.json`, which the daily run replaces by atomic rename, and
//! reloads it when the file changes, so a reader only ever sees a complete
//! generation.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::SystemTime;

use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::NaiveDate;
use lov_core::prefix::{Asn, Prefix};
use lov_core::quarantine::{
    write_whitelist_csv, Provenance, WhitelistEntry, WHITELIST_FORMAT_VERSION,
};
use lov_core::rov::RouteKey;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub const GENERATION_HEADER: &str = "x-whitelist-generation";

/// One loaded generation of the published whitelist.
#[derive(Debug)]
pub struct Snapshot {
    pub generation: Option<NaiveDate>,
    pub entries: Vec<WhitelistEntry>,
    index: HashMap<RouteKey, usize>,
    json: Arc<str>,
    csv: Arc<str>,
}

#[derive(Deserialize)]
struct WhitelistFile {
    format_version: u32,
    generation: Option<NaiveDate>,
    entries: Vec<WhitelistEntry>,
}

impl Snapshot {
    pub fn parse(text: &str) -> Result<Self, String> {
        let f: WhitelistFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if f.format_version != WHITELIST_FORMAT_VERSION {
            return Err(format!(
                "unsupported whitelist format_version {}",
                f.format_version
            ));
        }
        let index = f
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.key(), i))
            .collect();
        let csv = write_whitelist_csv(&f.entries);
        Ok(Snapshot {
            generation: f.generation,
            index,
            json: text.into(),
            csv: csv.into(),
            entries: f.entries,
        })
    }

    pub fn lookup(&self, key: &RouteKey) -> Option<&WhitelistEntry> {
        self.index.get(key).map(|i| &self.entries[*i])
    }
}

/// File identity used to notice a replaced whitelist.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Stamp {
    modified: Option<SystemTime>,
    len: u64,
    #[cfg(unix)]
    ino: u64,
}

fn stamp(path: &Path) -> std::io::Result<Stamp> {
    let m = std::fs::metadata(path)?;
    #[cfg(unix)]
    let ino = std::os::unix::fs::MetadataExt::ino(&m);
    Ok(Stamp {
        modified: m.modified().ok(),
        len: m.len(),
        #[cfg(unix)]
        ino,
    })
}

/// The published whitelist file and the last generation read from it.
#[derive(Debug)]
pub struct WhitelistSource {
    path: PathBuf,
    cached: RwLock<Option<(Stamp, Arc<Snapshot>)>>,
}

#[derive(Debug, PartialEq, Eq)]
pub struct Unavailable(pub String);

impl WhitelistSource {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        WhitelistSource {
            path: path.into(),
            cached: RwLock::new(None),
        }
    }

    /// The current generation, reloading when the file has changed. A file
    /// that vanished or fails to parse leaves the last good generation in
    /// service; with none loaded yet the store is unavailable.
    pub fn current(&self) -> Result<Arc<Snapshot>, Unavailable> {
        let st = match stamp(&self.path) {
            Ok(s) => s,
            Err(e) => {
                return self
                    .cached()
                    .ok_or_else(|| Unavailable(format!("{}: {e}", self.path.display())))
            }
        };
        if let Some((s, snap)) = self.cached.read().expect("lock poisoned").as_ref() {
            if *s == st {
                return Ok(snap.clone());
            }
        }
        let loaded = std::fs::read_to_string(&self.path)
            .map_err(|e| e.to_string())
            .and_then(|t| Snapshot::parse(&t));
        match loaded {
            Ok(snap) => {
                let snap = Arc::new(snap);
                *self.cached.write().expect("lock poisoned") = Some((st, snap.clone()));
                Ok(snap)
            }
            Err(e) => {
                log::warn!("keeping previous whitelist: {e}");
                self.cached()
                    .ok_or_else(|| Unavailable(format!("{}: {e}", self.path.display())))
            }
        }
    }

    fn cached(&self) -> Option<Arc<Snapshot>> {
        self.cached
            .read()
            .expect("lock poisoned")
            .as_ref()
            .map(|(_, s)| s.clone())
    }
}

fn generation_header(snap: &Snapshot) -> (header::HeaderName, HeaderValue) {
    let v = snap.generation.map(|d| d.to_string()).unwrap_or_default();
    (
        header::HeaderName::from_static(GENERATION_HEADER),
        HeaderValue::from_str(&v).unwrap_or(HeaderValue::from_static("")),
    )
}

fn unavailable(e: Unavailable) -> Response {
    (
        StatusCode::SERVICE_UNAVAILABLE,
        Json(json!({ "error": "whitelist unavailable", "reason": e.0 })),
    )
        .into_response()
}

fn bad_request(reason: String) -> Response {
    (
        StatusCode::BAD_REQUEST,
        Json(json!({ "error": "bad request", "reason": reason })),
    )
        .into_response()
}

fn wants_csv(headers: &HeaderMap) -> bool {
    headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|a| a.split(',').any(|m| m.trim().starts_with("text/csv")))
}

async fn whitelist(State(src): State<Arc<WhitelistSource>>, headers: HeaderMap) -> Response {
    let snap = match src.current() {
        Ok(s) => s,
        Err(e) => return unavailable(e),
    };
    let gen = generation_header(&snap);
    if wants_csv(&headers) {
        let ct = (
            header::CONTENT_TYPE,
            HeaderValue::from_static("text/csv; charset=utf-8"),
        );
        ([ct, gen], snap.csv.to_string()).into_response()
    } else {
        let ct = (
            header::CONTENT_TYPE,
            HeaderValue::from_static("application/json"),
        );
        ([ct, gen], snap.json.to_string()).into_response()
    }
}

#[derive(Deserialize)]
struct CheckParams {
    origin: Option<String>,
    prefix: Option<String>,
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResponse {
    pub origin: Asn,
    pub prefix: Prefix,
    pub listed: bool,
    pub provenance: Option<Provenance>,
    pub generation: Option<NaiveDate>,
}

async fn check(State(src): State<Arc<WhitelistSource>>, Query(q): Query<CheckParams>) -> Response {
    let origin = match q.origin.as_deref().map(str::parse::<Asn>) {
        None => return bad_request("missing origin".into()),
        Some(Err(e)) => return bad_request(e.to_string()),
        Some(Ok(a)) => a,
    };
    let prefix = match q.prefix.as_deref().map(str::parse::<Prefix>) {
        None => return bad_request("missing prefix".into()),
        Some(Err(e)) => return bad_request(e.to_string()),
        Some(Ok(p)) => p,
    };
    let snap = match src.current() {
        Ok(s) => s,
        Err(e) => return unavailable(e),
    };
    let entry = snap.lookup(&RouteKey::new(origin, prefix));
    let body = CheckResponse {
        origin,
        prefix,
        listed: entry.is_some(),
        provenance: entry.map(|e| e.provenance),
        generation: snap.generation,
    };
    ([generation_header(&snap)], Json(body)).into_response()
}

async fn health(State(src): State<Arc<WhitelistSource>>) -> Response {
    match src.current() {
        Ok(snap) => Json(json!({
            "status": "ok",
            "generation": snap.generation,
            "entries": snap.entries.len(),
        }))
        .into_response(),
        Err(e) => unavailable(e),
    }
}

/// All endpoints; only GET is routed.
pub fn router(source: Arc<WhitelistSource>) -> Router {
    Router::new()
        .route("/whitelist", get(whitelist))
        .route("/whitelist/check", get(check))
        .route("/health", get(health))
        .with_state(source)
}

/// Serves until the listener fails or the future is dropped.
pub async fn serve(
    listener: tokio::net::TcpListener,
    whitelist_json: PathBuf,
) -> std::io::Result<()> {
    let source = Arc::new(WhitelistSource::new(whitelist_json));
    axum::serve(listener, router(source)).await
}
