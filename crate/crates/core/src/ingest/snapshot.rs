use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dated in-memory snapshots of one artifact type.
#[derive(Clone, Debug)]
pub struct Snapshots<T> {
    by_date: BTreeMap<NaiveDate, T>,
}

impl<T> Default for Snapshots<T> {
    fn default() -> Self {
        Snapshots {
            by_date: BTreeMap::new(),
        }
    }
}

impl<T> Snapshots<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `artifact` for `date`, replacing any earlier one for that day.
    pub fn put(&mut self, date: NaiveDate, artifact: T) -> Option<T> {
        self.by_date.insert(date, artifact)
    }

    /// Newest snapshot dated on or before `date`.
    pub fn latest_at(&self, date: NaiveDate) -> Option<(NaiveDate, &T)> {
        self.by_date
            .range(..=date)
            .next_back()
            .map(|(d, t)| (*d, t))
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.by_date.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.by_date.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_date.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Vrps,
    AsRel,
    As2Org,
    Hegemony,
    Irr,
    Geo,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 6] = [
        DatasetKind::Vrps,
        DatasetKind::AsRel,
        DatasetKind::As2Org,
        DatasetKind::Hegemony,
        DatasetKind::Irr,
        DatasetKind::Geo,
    ];

    pub fn dir_name(self) -> &'static str {
        match self {
            DatasetKind::Vrps => "vrps",
            DatasetKind::AsRel => "as-rel",
            DatasetKind::As2Org => "as2org",
            DatasetKind::Hegemony => "hegemony",
            DatasetKind::Irr => "irr",
            DatasetKind::Geo => "geo",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            DatasetKind::Vrps | DatasetKind::Hegemony | DatasetKind::Geo => "csv",
            DatasetKind::AsRel => "txt",
            DatasetKind::As2Org => "jsonl",
            DatasetKind::Irr => "rpsl",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DatasetKind::ALL
            .into_iter()
            .find(|k| k.dir_name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown dataset kind {s:?}")))
    }
}

const MANIFEST: &str = "manifest.json";

#[derive(Debug, Default, Serialize, Deserialize)]
struct Manifest {
    snapshots: BTreeMap<DatasetKind, Vec<NaiveDate>>,
}

/// On-disk store of raw dataset files: one directory per kind holding
/// `YYYY-MM-DD.<ext>` files, and a `manifest.json` listing them.
#[derive(Debug)]
pub struct SnapshotStore {
    root: PathBuf,
    index: BTreeMap<DatasetKind, Snapshots<PathBuf>>,
}

impl SnapshotStore {
    /// Opens (or creates) a store rooted at `root`.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let manifest_path = root.join(MANIFEST);
        let manifest: Manifest = match fs::read_to_string(&manifest_path) {
            Ok(text) => serde_json::from_str(&text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Manifest::default(),
            Err(e) => return Err(Error::io(manifest_path, e)),
        };
        let mut index: BTreeMap<DatasetKind, Snapshots<PathBuf>> = BTreeMap::new();
        for (kind, dates) in manifest.snapshots {
            let snaps = index.entry(kind).or_default();
            for d in dates {
                snaps.put(d, Self::file_path(&root, kind, d));
            }
        }
        Ok(SnapshotStore { root, index })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn file_path(root: &Path, kind: DatasetKind, date: NaiveDate) -> PathBuf {
        root.join(kind.dir_name())
            .join(format!("{}.{}", date.format("%Y-%m-%d"), kind.extension()))
    }

    /// Writes a snapshot file and records it in the manifest.
    pub fn put(&mut self, kind: DatasetKind, date: NaiveDate, contents: &str) -> Result<PathBuf> {
        let path = Self::file_path(&self.root, kind, date);
        write_atomic(&path, contents.as_bytes())?;
        self.index.entry(kind).or_default().put(date, path.clone());
        self.save_manifest()?;
        Ok(path)
    }

    /// Newest snapshot of `kind` dated on or before `date`.
    pub fn latest_at(&self, kind: DatasetKind, date: NaiveDate) -> Option<(NaiveDate, &Path)> {
        self.index
            .get(&kind)
            .and_then(|s| s.latest_at(date))
            .map(|(d, p)| (d, p.as_path()))
    }

    pub fn read_latest_at(
        &self,
        kind: DatasetKind,
        date: NaiveDate,
    ) -> Result<Option<(NaiveDate, String)>> {
        match self.latest_at(kind, date) {
            None => Ok(None),
            Some((d, path)) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                Ok(Some((d, text)))
            }
        }
    }

    pub fn dates(&self, kind: DatasetKind) -> Vec<NaiveDate> {
        self.index
            .get(&kind)
            .map(|s| s.dates().collect())
            .unwrap_or_default()
    }

    fn save_manifest(&self) -> Result<()> {
        let manifest = Manifest {
            snapshots: self
                .index
                .iter()
                .map(|(k, s)| (*k, s.dates().collect()))
                .collect(),
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        write_atomic(&self.root.join(MANIFEST), text.as_bytes())
    }
}

/// Writes through a temporary file in the same directory and renames it
/// into place, so readers see either the old or the new contents.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn latest_at_rules() {
        let mut s = Snapshots::new();
        assert!(s.latest_at(d("2022-10-01")).is_none());
        s.put(d("2022-10-01"), "a");
        assert_eq!(s.latest_at(d("2022-10-01")), Some((d("2022-10-01"), &"a")));
        assert_eq!(s.latest_at(d("2022-10-06")), Some((d("2022-10-01"), &"a")));
        assert!(s.latest_at(d("2022-09-30")).is_none());
        s.put(d("2022-10-01"), "b");
        assert_eq!(s.len(), 1);
        assert_eq!(s.latest_at(d("2022-10-02")).unwrap().1, &"b");
    }

    #[test]
    fn disk_store_persists_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = SnapshotStore::open(dir.path()).unwrap();
        store
            .put(DatasetKind::AsRel, d("2022-10-01"), "1|2|-1\n")
            .unwrap();
        store
            .put(DatasetKind::AsRel, d("2022-10-05"), "1|3|-1\n")
            .unwrap();
        let reopened = SnapshotStore::open(dir.path()).unwrap();
        let (date, text) = reopened
            .read_latest_at(DatasetKind::AsRel, d("2022-10-04"))
            .unwrap()
            .unwrap();
        assert_eq!(date, d("2022-10-01"));
        assert_eq!(text, "1|2|-1\n");
        assert!(reopened
            .latest_at(DatasetKind::Geo, d("2022-10-04"))
            .is_none());
        assert!(dir.path().join("as-rel/2022-10-05.txt").exists());
        assert_eq!(reopened.dates(DatasetKind::AsRel).len(), 2);
    }
}
