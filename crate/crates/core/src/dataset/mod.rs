//! Video ingestion, preprocessing, synthetic data generation and fold splitting.

pub mod avi;
mod cache;
mod folds;
mod manifest;
pub(crate) mod preprocess;
mod synthetic;

use std::fmt;
use std::path::{Path, PathBuf};

use ndarray::Array4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use folds::{make_fold_splits, FoldSplit};
pub use manifest::{read_events, write_events, DatasetManifest, EventRecord, ManifestEntry};
pub use preprocess::{preprocess_frames, Normalization};
pub use synthetic::{frame_has_event, generate_synthetic_dataset, PatchRegion, SyntheticSpec};

/// Binary bag label. Serialized as the literals `-1` and `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn as_i8(self) -> i8 {
        match self {
            Label::Negative => -1,
            Label::Positive => 1,
        }
    }

    /// Binary target in `{0, 1}` used by the logistic head.
    pub fn target(self) -> f32 {
        match self {
            Label::Negative => 0.0,
            Label::Positive => 1.0,
        }
    }

    pub fn from_score(score: f32, threshold: f32) -> Self {
        if score >= threshold {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

impl TryFrom<i8> for Label {
    type Error = Error;

    fn try_from(v: i8) -> Result<Self> {
        match v {
            -1 => Ok(Label::Negative),
            1 => Ok(Label::Positive),
            other => Err(Error::InvalidArgument(format!("label must be -1 or 1, got {other}"))),
        }
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        l.as_i8()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_i8())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViewTag {
    #[serde(rename = "subAS")]
    SubAS,
    #[serde(rename = "LPS4C")]
    Lps4c,
    #[serde(rename = "synthetic")]
    Synthetic,
}

impl ViewTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ViewTag::SubAS => "subAS",
            ViewTag::Lps4c => "LPS4C",
            ViewTag::Synthetic => "synthetic",
        }
    }
}

impl std::str::FromStr for ViewTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subAS" => Ok(ViewTag::SubAS),
            "LPS4C" => Ok(ViewTag::Lps4c),
            "synthetic" => Ok(ViewTag::Synthetic),
            other => Err(Error::Manifest(format!("unknown view tag {other:?}"))),
        }
    }
}

/// A decoded video with its bag label: `frames` is `T x H x W x 3`.
#[derive(Debug, Clone)]
pub struct VideoSample {
    pub id: String,
    frames: Array4<u8>,
    pub label: Label,
    pub view_tag: ViewTag,
    pub source_path: PathBuf,
}

impl VideoSample {
    pub fn new(
        id: impl Into<String>,
        frames: Array4<u8>,
        label: Label,
        view_tag: ViewTag,
        source_path: impl Into<PathBuf>,
    ) -> Result<Self> {
        let (t, h, w, c) = frames.dim();
        if t == 0 {
            return Err(Error::Shape("video must contain at least one frame".into()));
        }
        if c != 3 || h == 0 || w == 0 {
            return Err(Error::Shape(format!("frames must be T x H x W x 3, got {t}x{h}x{w}x{c}")));
        }
        Ok(Self {
            id: id.into(),
            frames,
            label,
            view_tag,
            source_path: source_path.into(),
        })
    }

    pub fn frames(&self) -> &Array4<u8> {
        &self.frames
    }

    pub fn num_frames(&self) -> usize {
        self.frames.dim().0
    }

    /// `(height, width)`.
    pub fn frame_size(&self) -> (usize, usize) {
        let (_, h, w, _) = self.frames.dim();
        (h, w)
    }
}

/// Decode a video file. Label and view come from the manifest entry.
///
/// When `ECHOMIL_CACHE` names a directory, decoded frames are cached there.
pub fn load_video(path: &Path, entry: &ManifestEntry) -> Result<VideoSample> {
    let frames = match cache::cache_dir() {
        Some(dir) => cache::load_cached(&dir, path)?,
        None => avi::read_avi(path)?,
    };
    VideoSample::new(entry.id.clone(), frames, entry.label, entry.view_tag, path)
}

/// Load every entry of a manifest, in manifest order. Decoding runs on the rayon pool.
pub fn load_all(manifest: &DatasetManifest) -> Result<Vec<VideoSample>> {
    use rayon::prelude::*;
    manifest
        .entries
        .par_iter()
        .map(|e| load_video(&manifest.resolve(&e.path), e))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_literals() {
        assert_eq!(Label::try_from(-1).unwrap(), Label::Negative);
        assert_eq!(Label::try_from(1).unwrap(), Label::Positive);
        assert!(Label::try_from(0).is_err());
        assert_eq!(serde_json::to_string(&Label::Negative).unwrap(), "-1");
        assert_eq!(serde_json::from_str::<Label>("1").unwrap(), Label::Positive);
        assert!(serde_json::from_str::<Label>("2").is_err());
    }

    #[test]
    fn sample_rejects_empty_and_bad_channels() {
        let empty = Array4::<u8>::zeros((0, 4, 4, 3));
        assert!(VideoSample::new("a", empty, Label::Positive, ViewTag::Synthetic, "x").is_err());
        let gray = Array4::<u8>::zeros((2, 4, 4, 1));
        assert!(VideoSample::new("a", gray, Label::Positive, ViewTag::Synthetic, "x").is_err());
    }

    #[test]
    fn load_single_frame_video() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.avi");
        let frames = Array4::<u8>::from_elem((1, 6, 5, 3), 42);
        avi::write_avi(&path, &frames, 25).unwrap();
        let entry = ManifestEntry {
            id: "one".into(),
            path: path.clone(),
            label: Label::Negative,
            view_tag: ViewTag::Lps4c,
        };
        let v = load_video(&path, &entry).unwrap();
        assert_eq!(v.num_frames(), 1);
        assert_eq!(v.frame_size(), (6, 5));
        assert_eq!(v.view_tag, ViewTag::Lps4c);
        assert_eq!(v.label, Label::Negative);
    }

    #[test]
    fn load_missing_path_names_path() {
        let entry = ManifestEntry {
            id: "x".into(),
            path: "nope.avi".into(),
            label: Label::Positive,
            view_tag: ViewTag::SubAS,
        };
        let err = load_video(Path::new("/no/such/nope.avi"), &entry).unwrap_err();
        assert!(err.to_string().contains("/no/such/nope.avi"), "{err}");
    }
}
