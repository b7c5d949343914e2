use ndarray::{Array4, ArrayView4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-channel standardization constants applied after scaling to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for Normalization {
    fn default() -> Self {
        // ImageNet statistics
        Self {
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
        }
    }
}

/// Pixel types accepted by [`preprocess_frames`].
pub trait Pixel: Copy {
    /// Value on the unit scale: bytes are divided by 255, floats pass through.
    fn unit(self) -> f32;
}

impl Pixel for u8 {
    fn unit(self) -> f32 {
        self as f32 / 255.0
    }
}

impl Pixel for f32 {
    fn unit(self) -> f32 {
        self
    }
}

/// Resize a `T x H x W x 3` stack to `T x S x S x 3` with bilinear
/// interpolation (half-pixel centers), scale to `[0, 1]` and standardize.
///
/// Float input is assumed to be on the unit scale already, so running this
/// twice standardizes twice.
pub fn preprocess_frames<P: Pixel>(
    frames: ArrayView4<'_, P>,
    target_size: usize,
    norm: &Normalization,
) -> Result<Array4<f32>> {
    if target_size < 8 {
        return Err(Error::InvalidArgument(format!("target size must be >= 8, got {target_size}")));
    }
    let (t, h, w, c) = frames.dim();
    if t == 0 || h == 0 || w == 0 || c != 3 {
        return Err(Error::Shape(format!("expected T x H x W x 3 frames, got {t}x{h}x{w}x{c}")));
    }
    let ys = sample_grid(h, target_size);
    let xs = sample_grid(w, target_size);
    let mut out = Array4::<f32>::zeros((t, target_size, target_size, 3));
    for f in 0..t {
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                for ch in 0..3 {
                    let p = |y: usize, x: usize| frames[[f, y, x, ch]].unit();
                    let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                    let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                    let v = top * (1.0 - fy) + bottom * fy;
                    out[[f, oy, ox, ch]] = (v - norm.mean[ch]) / norm.std[ch];
                }
            }
        }
    }
    Ok(out)
}

/// Source taps `(lo, hi, frac)` for each output coordinate.
pub(crate) fn sample_grid(src: usize, dst: usize) -> Vec<(usize, usize, f32)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let pos = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (pos.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            (lo, hi, (pos - lo as f64) as f32)
        })
        .collect()
}
