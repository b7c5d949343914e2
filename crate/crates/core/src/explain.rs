//! Gradient-weighted class activation maps over the input frames.
//!
//! For each frame of the scored collection, the final spatial stage's channel
//! maps `A_c` are weighted by the spatial mean of `d logit / d A_c`; the map
//! `relu(sum_c w_c A_c)` is upsampled bilinearly to the frame size. All maps
//! of a video share one normalization so the hottest pixel of the video is 1.

use std::path::{Path, PathBuf};

use ndarray::{s, Array2, Array3, Array4, ArrayView2, Axis};

use crate::dataset::avi::write_avi;
use crate::dataset::preprocess::sample_grid;
use crate::dataset::{Label, VideoSample};
use crate::error::{Error, Result};
use crate::model::{PreparedVideo, VideoClassifier};
use crate::sampling::{middle_collection, partition_blocks, FrameIndexCollection};

/// Opacity of the heat colors over the frame.
pub const OVERLAY_ALPHA: f32 = 0.4;
/// Below this maximum a video's maps are reported as all zeros.
pub const ZERO_GUARD: f32 = 1e-12;

#[derive(Debug, Clone)]
pub struct HeatmapResult {
    pub video_id: String,
    /// `N x H x W`, in `[0, 1]`.
    pub maps: Array3<f32>,
    /// `N x H x W x 3` frames with the colored heat blended in.
    pub overlays: Array4<u8>,
    pub collection: FrameIndexCollection,
    pub probability: f32,
    pub predicted: Label,
}

/// Heat maps for the video's middle-offset collection.
pub fn generate_heatmap(model: &VideoClassifier, video: &VideoSample) -> Result<HeatmapResult> {
    let partition = partition_blocks(video.num_frames(), model.config().num_frames)?;
    generate_heatmap_for(model, video, &middle_collection(&partition))
}

/// Heat maps for an explicit collection of `video`.
pub fn generate_heatmap_for(
    model: &VideoClassifier,
    video: &VideoSample,
    collection: &FrameIndexCollection,
) -> Result<HeatmapResult> {
    let prepared = PreparedVideo::new(video, model.config())?;
    let x = prepared.gather(collection)?;
    let (bundle, cache) = model.forward_volume(&x)?;
    let grad = model.top_map_gradient(&bundle, &cache);

    let (frame_h, frame_w) = video.frame_size();
    let n = collection.len();
    let mut maps = Array3::<f32>::zeros((n, frame_h, frame_w));
    for t in 0..n {
        let acts = bundle.top_maps.slice(s![.., t, .., ..]);
        let g = grad.slice(s![.., t, .., ..]);
        let mut cam = Array2::<f32>::zeros((acts.dim().1, acts.dim().2));
        for (a, gc) in acts.axis_iter(Axis(0)).zip(g.axis_iter(Axis(0))) {
            let weight = gc.mean().unwrap_or(0.0);
            cam.scaled_add(weight, &a);
        }
        cam.mapv_inplace(|v| v.max(0.0));
        maps.slice_mut(s![t, .., ..]).assign(&upsample(cam.view(), frame_h, frame_w));
    }
    normalize_video(&mut maps);

    let frames: Vec<usize> = collection.frame_indices();
    let mut overlays = Array4::<u8>::zeros((n, frame_h, frame_w, 3));
    for (t, &f) in frames.iter().enumerate() {
        for y in 0..frame_h {
            for x in 0..frame_w {
                let color = jet(maps[[t, y, x]]);
                for c in 0..3 {
                    let base = video.frames()[[f, y, x, c]] as f32;
                    let v = (1.0 - OVERLAY_ALPHA) * base + OVERLAY_ALPHA * color[c];
                    overlays[[t, y, x, c]] = v.round().clamp(0.0, 255.0) as u8;
                }
            }
        }
    }

    Ok(HeatmapResult {
        video_id: video.id.clone(),
        maps,
        overlays,
        collection: collection.clone(),
        probability: bundle.probability,
        predicted: Label::from_score(bundle.probability, model.config().vote_threshold),
    })
}

/// Scale so the video's maximum is 1, or zero everything if it is ~0.
pub fn normalize_video(maps: &mut Array3<f32>) {
    let max = maps.iter().copied().fold(0.0f32, f32::max);
    if max < ZERO_GUARD {
        maps.fill(0.0);
    } else {
        maps.mapv_inplace(|v| (v / max).clamp(0.0, 1.0));
    }
}

/// Bilinear resize with half-pixel centers.
pub fn upsample(map: ArrayView2<'_, f32>, height: usize, width: usize) -> Array2<f32> {
    let ys = sample_grid(map.nrows(), height);
    let xs = sample_grid(map.ncols(), width);
    Array2::from_shape_fn((height, width), |(oy, ox)| {
        let (y0, y1, fy) = ys[oy];
        let (x0, x1, fx) = xs[ox];
        let top = map[[y0, x0]] * (1.0 - fx) + map[[y0, x1]] * fx;
        let bottom = map[[y1, x0]] * (1.0 - fx) + map[[y1, x1]] * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

/// Blue → cyan → yellow → red color ramp on `[0, 1]`, as 0–255 RGB.
pub fn jet(v: f32) -> [f32; 3] {
    let v = v.clamp(0.0, 1.0);
    let channel = |center: f32| (1.5 - (4.0 * v - center).abs()).clamp(0.0, 1.0) * 255.0;
    [channel(3.0), channel(2.0), channel(1.0)]
}

impl HeatmapResult {
    /// Write `<video_id>_frame<j>.png` for every overlay frame plus
    /// `<video_id>_heatmap.avi`; returns the written paths.
    pub fn write(&self, out_dir: &Path, fps: u32) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let (n, h, w, _) = self.overlays.dim();
        let mut written = Vec::with_capacity(n + 1);
        for j in 0..n {
            let path = out_dir.join(format!("{}_frame{j}.png", self.video_id));
            let raw: Vec<u8> = self.overlays.slice(s![j, .., .., ..]).iter().copied().collect();
            let img = image::RgbImage::from_raw(w as u32, h as u32, raw).expect("buffer matches dimensions");
            img.save(&path)?;
            written.push(path);
        }
        let avi = out_dir.join(format!("{}_heatmap.avi", self.video_id));
        write_avi(&avi, &self.overlays, fps)?;
        written.push(avi);
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_guard() {
        let mut m = Array3::<f32>::from_elem((2, 3, 3), 1e-14);
        normalize_video(&mut m);
        assert!(m.iter().all(|&v| v == 0.0));
        let mut m = Array3::<f32>::from_elem((2, 3, 3), 0.5);
        m[[1, 2, 2]] = 2.0;
        normalize_video(&mut m);
        assert_eq!(m[[1, 2, 2]], 1.0);
        assert_eq!(m[[0, 0, 0]], 0.25);
    }

    #[test]
    fn upsample_constant_and_corners() {
        let m = Array2::<f32>::from_elem((2, 2), 0.7);
        assert!(upsample(m.view(), 5, 7).iter().all(|&v| (v - 0.7).abs() < 1e-6));
        let m = array![[0.0f32, 1.0], [0.0, 1.0]];
        let u = upsample(m.view(), 4, 4);
        assert_eq!(u[[0, 0]], 0.0);
        assert_eq!(u[[3, 3]], 1.0);
        assert!((u[[0, 1]] - 0.25).abs() < 1e-6);
    }

    #[test]
    fn colormap_ends() {
        let lo = jet(0.0);
        let hi = jet(1.0);
        assert!(lo[2] > lo[0] && hi[0] > hi[2]);
    }
}
