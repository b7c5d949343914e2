//! Deterministic synthetic videos with a transient colored event.
//!
//! Every video shows a grayscale blob whose radius and position oscillate
//! like a beating chamber, plus gray speckle noise. Positive videos add a
//! saturated colored rectangle for one contiguous window of frames. Gray
//! pixels always have equal channels, so the event is detectable exactly by
//! a channel-spread scan.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use ndarray::{Array4, ArrayView3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::manifest::{write_events, EventRecord};
use super::{avi, DatasetManifest, Label, ManifestEntry, ViewTag};
use crate::error::{Error, Result};

/// Normalized rectangle `[x0, y0, x1, y1]` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchRegion(pub [f64; 4]);

impl Default for PatchRegion {
    fn default() -> Self {
        PatchRegion([0.2, 0.2, 0.8, 0.8])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_positive: usize,
    pub num_negative: usize,
    pub frames_per_video: usize,
    pub frame_size: usize,
    /// Inclusive `(min_len, max_len)` of the event window in frames.
    pub event_window: (usize, usize),
    pub patch_region: PatchRegion,
    /// Side of the square event patch as a fraction of the frame side.
    pub patch_size: f64,
    pub noise_level: f64,
    pub seed: u64,
    pub fps: u32,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_positive: 30,
            num_negative: 30,
            frames_per_video: 48,
            frame_size: 112,
            event_window: (8, 16),
            patch_region: PatchRegion::default(),
            patch_size: 0.2,
            noise_level: 0.1,
            seed: 0,
            fps: 25,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.event_window;
        if !(1 <= lo && lo <= hi && hi <= self.frames_per_video) {
            return Err(Error::Config(format!(
                "event window ({lo}, {hi}) must satisfy 1 <= min <= max <= frames_per_video ({})",
                self.frames_per_video
            )));
        }
        if self.frame_size < 4 {
            return Err(Error::Config(format!("frame_size must be >= 4, got {}", self.frame_size)));
        }
        if !(0.0..=1.0).contains(&self.noise_level) {
            return Err(Error::Config(format!("noise_level must be in [0, 1], got {}", self.noise_level)));
        }
        let [x0, y0, x1, y1] = self.patch_region.0;
        if !(0.0 <= x0 && x0 < x1 && x1 <= 1.0 && 0.0 <= y0 && y0 < y1 && y1 <= 1.0) {
            return Err(Error::Config(format!("patch_region {:?} is not a valid unit rectangle", self.patch_region.0)));
        }
        if !(self.patch_size > 0.0 && self.patch_size <= (x1 - x0).min(y1 - y0)) {
            return Err(Error::Config(format!(
                "patch_size {} must be positive and fit inside patch_region",
                self.patch_size
            )));
        }
        Ok(())
    }

    pub fn num_videos(&self) -> usize {
        self.num_positive + self.num_negative
    }

    pub fn video_id(index: usize) -> String {
        format!("syn_{index:04}")
    }

    /// Render video `index` in memory. Indices below `num_positive` are positives.
    pub fn render(&self, index: usize) -> (Array4<u8>, EventRecord) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64 + 1);
        render_video(self, index < self.num_positive, Self::video_id(index), &mut rng)
    }
}

fn render_video(spec: &SyntheticSpec, positive: bool, id: String, rng: &mut ChaCha8Rng) -> (Array4<u8>, EventRecord) {
    let t_len = spec.frames_per_video;
    let s = spec.frame_size;
    let sf = s as f64;

    let period = rng.random_range(12.0..24.0);
    let phase = rng.random_range(0.0..TAU);
    let base_radius = rng.random_range(0.18..0.28) * sf;
    let (cx, cy) = (rng.random_range(0.4..0.6) * sf, rng.random_range(0.4..0.6) * sf);
    let sway = rng.random_range(0.02..0.06) * sf;
    let aspect = rng.random_range(0.7..1.0);
    let background = rng.random_range(20.0..45.0);
    let noise = Normal::new(0.0, 64.0 * spec.noise_level).expect("finite std");

    let event = positive.then(|| {
        let len = rng.random_range(spec.event_window.0..=spec.event_window.1);
        let start = rng.random_range(0..=t_len - len);
        let side = ((spec.patch_size * sf).round() as usize).clamp(1, s);
        let [rx0, ry0, rx1, ry1] = spec.patch_region.0;
        let x_lo = (rx0 * sf).floor() as usize;
        let y_lo = (ry0 * sf).floor() as usize;
        let x_hi = ((rx1 * sf).floor() as usize).min(s).saturating_sub(side).max(x_lo);
        let y_hi = ((ry1 * sf).floor() as usize).min(s).saturating_sub(side).max(y_lo);
        let x0 = rng.random_range(x_lo..=x_hi);
        let y0 = rng.random_range(y_lo..=y_hi);
        let color: [u8; 3] = if rng.random_bool(0.5) {
            [230, 40, 40]
        } else {
            [40, 70, 230]
        };
        (start, len, [x0, y0, (x0 + side).min(s), (y0 + side).min(s)], color)
    });

    let mut frames = Array4::<u8>::zeros((t_len, s, s, 3));
    for t in 0..t_len {
        let beat = (TAU * t as f64 / period + phase).sin();
        let radius = base_radius * (1.0 + 0.25 * beat);
        let (bx, by) = (cx + sway * beat, cy + sway * (TAU * t as f64 / period + phase).cos());
        for y in 0..s {
            for x in 0..s {
                let dx = (x as f64 + 0.5 - bx) / radius;
                let dy = (y as f64 + 0.5 - by) / (radius * aspect);
                let blob = (-(dx * dx + dy * dy)).exp();
                let v = background + 170.0 * blob + noise.sample(rng);
                let v = v.round().clamp(0.0, 255.0) as u8;
                for c in 0..3 {
                    frames[[t, y, x, c]] = v;
                }
            }
        }
        if let Some((start, len, [x0, y0, x1, y1], color)) = event {
            if t >= start && t < start + len {
                for y in y0..y1 {
                    for x in x0..x1 {
                        for c in 0..3 {
                            frames[[t, y, x, c]] = color[c];
                        }
                    }
                }
            }
        }
    }

    let record = match event {
        Some((start, len, patch, _)) => EventRecord {
            id,
            event_start: start,
            event_len: len,
            patch: Some(patch),
        },
        None => EventRecord {
            id,
            event_start: 0,
            event_len: 0,
            patch: None,
        },
    };
    (frames, record)
}

/// Channel-spread scan: true iff some pixel is saturated color rather than gray.
pub fn frame_has_event(frame: ArrayView3<'_, u8>) -> bool {
    frame.outer_iter().any(|row| {
        row.outer_iter().any(|px| {
            let (lo, hi) = px.iter().fold((u8::MAX, 0u8), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            hi - lo > 64
        })
    })
}

/// Write `syn_XXXX.avi` files, `manifest.csv` and `events.json` into `out_dir`.
pub fn generate_synthetic_dataset(spec: &SyntheticSpec, out_dir: &Path) -> Result<(DatasetManifest, Vec<EventRecord>)> {
    spec.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(spec.num_videos());
    let mut events = Vec::with_capacity(spec.num_videos());
    for index in 0..spec.num_videos() {
        let (frames, record) = spec.render(index);
        let file = format!("{}.avi", record.id);
        avi::write_avi(&out_dir.join(&file), &frames, spec.fps)?;
        entries.push(ManifestEntry {
            id: record.id.clone(),
            path: file.into(),
            label: if index < spec.num_positive {
                Label::Positive
            } else {
                Label::Negative
            },
            view_tag: ViewTag::Synthetic,
        });
        events.push(record);
    }
    let manifest = DatasetManifest::new(entries, out_dir)?;
    manifest.write_csv(&out_dir.join("manifest.csv"))?;
    write_events(&out_dir.join("events.json"), &events)?;
    Ok((manifest, events))
}
