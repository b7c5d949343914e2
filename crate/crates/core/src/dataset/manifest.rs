//! CSV manifest (`id,path,label,view`) and the JSON ground-truth sidecar.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Label, ViewTag};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub label: Label,
    #[serde(rename = "view")]
    pub view_tag: ViewTag,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    id: String,
    path: String,
    label: i8,
    view: String,
}

/// Ground truth for one synthetic video. `patch` is the half-open pixel
/// rectangle `[x0, y0, x1, y1)` of the event; absent for negatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub id: String,
    pub event_start: usize,
    pub event_len: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch: Option<[usize; 4]>,
}

impl EventRecord {
    pub fn contains_frame(&self, frame: usize) -> bool {
        self.event_len > 0 && frame >= self.event_start && frame < self.event_start + self.event_len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub class_counts: BTreeMap<Label, usize>,
    /// Directory relative entry paths are resolved against.
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate sample id {:?}", e.id)));
            }
        }
        let mut class_counts = BTreeMap::from([(Label::Negative, 0), (Label::Positive, 0)]);
        for e in &entries {
            *class_counts.entry(e.label).or_default() += 1;
        }
        Ok(Self {
            entries,
            class_counts,
            base_dir: base_dir.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Sub-manifest holding the given ids in manifest order.
    pub fn subset(&self, ids: &HashSet<&str>) -> Result<Self> {
        let entries = self
            .entries
            .iter()
            .filter(|e| ids.contains(e.id.as_str()))
            .cloned()
            .collect();
        Self::new(entries, self.base_dir.clone())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Manifest(format!("{}: {other:?}", path.display())),
        })?;
        let headers = reader.headers()?.clone();
        let expected = ["id", "path", "label", "view"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Manifest(format!(
                "{}: header must be `id,path,label,view`, got `{}`",
                path.display(),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut entries = Vec::new();
        for row in reader.deserialize::<CsvRow>() {
            let row = row?;
            entries.push(ManifestEntry {
                id: row.id,
                path: PathBuf::from(row.path),
                label: Label::try_from(row.label)?,
                view_tag: row.view.parse()?,
            });
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(entries, base)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Manifest(format!("{other:?}")),
        })?;
        for e in &self.entries {
            writer.serialize(CsvRow {
                id: e.id.clone(),
                path: e.path.to_string_lossy().into_owned(),
                label: e.label.as_i8(),
                view: e.view_tag.as_str().to_string(),
            })?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn read_events(path: &Path) -> Result<Vec<EventRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_events(path: &Path, events: &[EventRecord]) -> Result<()> {
    let text = serde_json::to_string_pretty(events)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
