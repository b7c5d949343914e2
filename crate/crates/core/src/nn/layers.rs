use ndarray::{Array1, Array2, Array4, ArrayD, Axis, IxDyn, Zip};
use rand::Rng;

use super::{Gradients, ParamId, ParamStore};

/// Learnable per-channel scale and shift (a normalization layer in its folded
/// inference form).
#[derive(Debug, Clone)]
pub struct ChannelAffine {
    pub scale: ParamId,
    pub shift: ParamId,
}

impl ChannelAffine {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, init_scale: f32) -> Self {
        Self {
            scale: store.add(format!("{name}.scale"), ArrayD::from_elem(IxDyn(&[channels]), init_scale)),
            shift: store.add(format!("{name}.shift"), ArrayD::zeros(IxDyn(&[channels]))),
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Array4<f32>) -> Array4<f32> {
        let scale = store.get(self.scale);
        let shift = store.get(self.shift);
        let mut y = x.clone();
        for (c, mut plane) in y.outer_iter_mut().enumerate() {
            let (a, b) = (scale[c], shift[c]);
            plane.mapv_inplace(|v| v * a + b);
        }
        y
    }

    pub fn backward(&self, store: &ParamStore, x: &Array4<f32>, grad: &Array4<f32>, grads: &mut Gradients) -> Array4<f32> {
        let scale = store.get(self.scale);
        let mut gx = grad.clone();
        for (c, ((mut gplane, xplane), gout)) in gx
            .outer_iter_mut()
            .zip(x.outer_iter())
            .zip(grad.outer_iter())
            .enumerate()
        {
            let dscale: f32 = Zip::from(&xplane).and(&gout).fold(0.0, |acc, &a, &b| acc + a * b);
            grads.get_mut(self.scale)[c] += dscale;
            grads.get_mut(self.shift)[c] += gout.sum();
            gplane.mapv_inplace(|v| v * scale[c]);
        }
        gx
    }
}

pub fn relu(x: &Array4<f32>) -> Array4<f32> {
    x.mapv(|v| v.max(0.0))
}

/// Gradient through a ReLU given its output (or input; the masks agree).
pub fn relu_backward(activated: &Array4<f32>, grad: &Array4<f32>) -> Array4<f32> {
    let mut g = grad.clone();
    Zip::from(&mut g).and(activated).for_each(|g, &a| {
        if a <= 0.0 {
            *g = 0.0;
        }
    });
    g
}

/// Spatial max pooling applied to every `(channel, time)` plane.
#[derive(Debug, Clone, Copy)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl MaxPool2d {
    fn out_len(&self, n: usize) -> usize {
        (n + 2 * self.padding - self.kernel) / self.stride + 1
    }

    /// Pooled output plus the flat input index of every selected maximum.
    pub fn forward(&self, x: &Array4<f32>) -> (Array4<f32>, Vec<usize>) {
        let (c, t, h, w) = x.dim();
        let (ho, wo) = (self.out_len(h), self.out_len(w));
        let x = x.as_standard_layout();
        let xs = x.as_slice().unwrap();
        let mut out = Array4::<f32>::zeros((c, t, ho, wo));
        let mut argmax = Vec::with_capacity(out.len());
        for (o, v) in out.iter_mut().enumerate() {
            let ox = o % wo;
            let oy = (o / wo) % ho;
            let plane = o / (wo * ho);
            let mut best = f32::NEG_INFINITY;
            let mut best_idx = plane * h * w;
            for dy in 0..self.kernel {
                let iy = (oy * self.stride + dy) as isize - self.padding as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for dx in 0..self.kernel {
                    let ix = (ox * self.stride + dx) as isize - self.padding as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let idx = plane * h * w + iy as usize * w + ix as usize;
                    if xs[idx] > best {
                        best = xs[idx];
                        best_idx = idx;
                    }
                }
            }
            *v = best;
            argmax.push(best_idx);
        }
        (out, argmax)
    }

    pub fn backward(&self, input_dim: (usize, usize, usize, usize), argmax: &[usize], grad: &Array4<f32>) -> Array4<f32> {
        let mut gx = Array4::<f32>::zeros(input_dim);
        let gxs = gx.as_slice_mut().unwrap();
        for (&idx, &g) in argmax.iter().zip(grad.iter()) {
            gxs[idx] += g;
        }
        gx
    }
}

/// Per-frame global average pooling: `C x T x H x W` to `T x C`.
pub fn avg_pool_frames(x: &Array4<f32>) -> Array2<f32> {
    let (c, t, h, w) = x.dim();
    let area = (h * w) as f32;
    Array2::from_shape_fn((t, c), |(ti, ci)| x.slice(ndarray::s![ci, ti, .., ..]).sum() / area)
}

pub fn avg_pool_frames_backward(dims: (usize, usize, usize, usize), grad: &Array2<f32>) -> Array4<f32> {
    let (_, _, h, w) = dims;
    let area = (h * w) as f32;
    Array4::from_shape_fn(dims, |(ci, ti, _, _)| grad[[ti, ci]] / area)
}

/// Global average pooling over time and space: `C x T x H x W` to `C`.
pub fn avg_pool_volume(x: &Array4<f32>) -> Array1<f32> {
    let (_, t, h, w) = x.dim();
    let n = (t * h * w) as f32;
    x.outer_iter().map(|v| v.sum() / n).collect()
}

pub fn avg_pool_volume_backward(dims: (usize, usize, usize, usize), grad: &Array1<f32>) -> Array4<f32> {
    let (_, t, h, w) = dims;
    let n = (t * h * w) as f32;
    Array4::from_shape_fn(dims, |(ci, _, _, _)| grad[ci] / n)
}

/// Dense layer `y = W x + b` with `W: out x in`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, in_features: usize, out_features: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_features as f32).sqrt();
        let weight = ArrayD::from_shape_simple_fn(IxDyn(&[out_features, in_features]), || rng.random_range(-bound..bound));
        Self {
            weight: store.add(format!("{name}.weight"), weight),
            bias: store.add(format!("{name}.bias"), ArrayD::zeros(IxDyn(&[out_features]))),
            in_features,
            out_features,
        }
    }

    fn weight_matrix<'a>(&self, store: &'a ParamStore) -> ndarray::ArrayView2<'a, f32> {
        store
            .get(self.weight)
            .view()
            .into_dimensionality()
            .expect("2D linear weight")
    }

    pub fn forward(&self, store: &ParamStore, x: &Array1<f32>) -> Array1<f32> {
        let b = store.get(self.bias).view().into_dimensionality::<ndarray::Ix1>().unwrap();
        self.weight_matrix(store).dot(x) + b
    }

    pub fn backward(&self, store: &ParamStore, x: &Array1<f32>, grad: &Array1<f32>, grads: &mut Gradients) -> Array1<f32> {
        {
            let gw = grads.get_mut(self.weight);
            let mut gw = gw.view_mut().into_dimensionality::<ndarray::Ix2>().unwrap();
            for (o, mut row) in gw.axis_iter_mut(Axis(0)).enumerate() {
                row.scaled_add(grad[o], x);
            }
        }
        {
            let gb = grads.get_mut(self.bias);
            for (o, &g) in grad.iter().enumerate() {
                gb[o] += g;
            }
        }
        self.weight_matrix(store).t().dot(grad)
    }
}
