use ndarray::{linalg::general_mat_mul, s, Array2, Array4, ArrayD, ArrayView2, IxDyn};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{Gradients, ParamId, ParamStore};

/// 3D convolution over `C x T x H x W` volumes, computed one output time
/// slice at a time as an im2col matrix product.
#[derive(Debug, Clone)]
pub struct Conv3d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl Conv3d {
    /// He-normal initialized convolution registered under `name`.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        padding: [usize; 3],
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_channels * kernel.iter().product::<usize>();
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
        let shape = [out_channels, in_channels, kernel[0], kernel[1], kernel[2]];
        let weight = ArrayD::from_shape_simple_fn(IxDyn(&shape), || normal.sample(rng) as f32);
        let weight = store.add(format!("{name}.weight"), weight);
        let bias = bias.then(|| store.add(format!("{name}.bias"), ArrayD::zeros(IxDyn(&[out_channels]))));
        Self {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    /// Frame-wise 2D convolution: square `k x k` kernel, temporal extent 1.
    #[allow(clippy::too_many_arguments)]
    pub fn new_2d<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        k: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        Self::new(
            store,
            name,
            in_channels,
            out_channels,
            [1, k, k],
            [1, stride, stride],
            [0, padding, padding],
            false,
            rng,
        )
    }

    pub fn output_dims(&self, t: usize, h: usize, w: usize) -> (usize, usize, usize) {
        let out = |n: usize, i: usize| (n + 2 * self.padding[i] - self.kernel[i]) / self.stride[i] + 1;
        (out(t, 0), out(h, 1), out(w, 2))
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel.iter().product::<usize>()
    }

    fn weight_matrix<'a>(&self, store: &'a ParamStore) -> ArrayView2<'a, f32> {
        store
            .get(self.weight)
            .view()
            .into_shape_with_order((self.out_channels, self.patch_len()))
            .expect("contiguous conv weight")
    }

    /// Gather the receptive fields of output time slice `to` into `cols`
    /// (`patch_len x ho*wo`).
    fn im2col(&self, x: &[f32], dims: (usize, usize, usize), to: usize, out_hw: (usize, usize), cols: &mut [f32]) {
        let (t, h, w) = dims;
        let (ho, wo) = out_hw;
        let [kt, kh, kw] = self.kernel;
        let [st, sh, sw] = self.stride;
        let [pt, ph, pw] = self.padding;
        let plane = ho * wo;
        let mut row = 0;
        for c in 0..self.in_channels {
            for dt in 0..kt {
                let it = (to * st + dt) as isize - pt as isize;
                for dy in 0..kh {
                    for dx in 0..kw {
                        let dst = &mut cols[row * plane..(row + 1) * plane];
                        row += 1;
                        if it < 0 || it >= t as isize {
                            dst.fill(0.0);
                            continue;
                        }
                        let base = (c * t + it as usize) * h * w;
                        for oy in 0..ho {
                            let iy = (oy * sh + dy) as isize - ph as isize;
                            let out_row = &mut dst[oy * wo..(oy + 1) * wo];
                            if iy < 0 || iy >= h as isize {
                                out_row.fill(0.0);
                                continue;
                            }
                            let src = &x[base + iy as usize * w..base + (iy as usize + 1) * w];
                            for (ox, v) in out_row.iter_mut().enumerate() {
                                let ix = (ox * sw + dx) as isize - pw as isize;
                                *v = if ix < 0 || ix >= w as isize { 0.0 } else { src[ix as usize] };
                            }
                        }
                    }
                }
            }
        }
    }

    /// Scatter-add `cols` back into the input gradient for time slice `to`.
    fn col2im(&self, cols: &[f32], dims: (usize, usize, usize), to: usize, out_hw: (usize, usize), gx: &mut [f32]) {
        let (t, h, w) = dims;
        let (ho, wo) = out_hw;
        let [kt, kh, kw] = self.kernel;
        let [st, sh, sw] = self.stride;
        let [pt, ph, pw] = self.padding;
        let plane = ho * wo;
        let mut row = 0;
        for c in 0..self.in_channels {
            for dt in 0..kt {
                let it = (to * st + dt) as isize - pt as isize;
                for dy in 0..kh {
                    for dx in 0..kw {
                        let src = &cols[row * plane..(row + 1) * plane];
                        row += 1;
                        if it < 0 || it >= t as isize {
                            continue;
                        }
                        let base = (c * t + it as usize) * h * w;
                        for oy in 0..ho {
                            let iy = (oy * sh + dy) as isize - ph as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let dst = &mut gx[base + iy as usize * w..base + (iy as usize + 1) * w];
                            for (ox, &g) in src[oy * wo..(oy + 1) * wo].iter().enumerate() {
                                let ix = (ox * sw + dx) as isize - pw as isize;
                                if ix >= 0 && ix < w as isize {
                                    dst[ix as usize] += g;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Array4<f32>) -> Array4<f32> {
        let (c, t, h, w) = x.dim();
        assert_eq!(c, self.in_channels, "conv input channels");
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let (to, ho, wo) = self.output_dims(t, h, w);
        let wmat = self.weight_matrix(store);
        let k = self.patch_len();
        let slices: Vec<Array2<f32>> = (0..to)
            .into_par_iter()
            .map(|ti| {
                let mut cols = Array2::<f32>::zeros((k, ho * wo));
                self.im2col(xs, (t, h, w), ti, (ho, wo), cols.as_slice_mut().unwrap());
                let mut out = Array2::<f32>::zeros((self.out_channels, ho * wo));
                general_mat_mul(1.0, &wmat, &cols, 0.0, &mut out);
                out
            })
            .collect();
        let mut out = Array4::<f32>::zeros((self.out_channels, to, ho, wo));
        for (ti, slice) in slices.into_iter().enumerate() {
            let slice = slice.into_shape_with_order((self.out_channels, ho, wo)).unwrap();
            out.slice_mut(s![.., ti, .., ..]).assign(&slice);
        }
        if let Some(b) = self.bias {
            let b = store.get(b);
            for (co, mut plane) in out.outer_iter_mut().enumerate() {
                plane += b[co];
            }
        }
        out
    }

    /// Accumulate parameter gradients and return the input gradient.
    pub fn backward(
        &self,
        store: &ParamStore,
        x: &Array4<f32>,
        grad_out: &Array4<f32>,
        grads: &mut Gradients,
    ) -> Array4<f32> {
        let (_, t, h, w) = x.dim();
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let (to, ho, wo) = self.output_dims(t, h, w);
        assert_eq!(grad_out.dim(), (self.out_channels, to, ho, wo), "conv grad shape");
        let wmat = self.weight_matrix(store);
        let k = self.patch_len();

        let parts: Vec<(Array2<f32>, Array2<f32>)> = (0..to)
            .into_par_iter()
            .map(|ti| {
                let mut cols = Array2::<f32>::zeros((k, ho * wo));
                self.im2col(xs, (t, h, w), ti, (ho, wo), cols.as_slice_mut().unwrap());
                let g = grad_out
                    .slice(s![.., ti, .., ..])
                    .to_owned()
                    .into_shape_with_order((self.out_channels, ho * wo))
                    .unwrap();
                let gw = g.dot(&cols.t());
                let gcols = wmat.t().dot(&g);
                (gw, gcols)
            })
            .collect();

        let mut gx = Array4::<f32>::zeros((self.in_channels, t, h, w));
        {
            let gw_total = grads.get_mut(self.weight);
            let mut gw_mat = gw_total
                .view_mut()
                .into_shape_with_order((self.out_channels, k))
                .expect("contiguous conv weight grad");
            let gxs = gx.as_slice_mut().unwrap();
            for (ti, (gw, gcols)) in parts.iter().enumerate() {
                gw_mat += gw;
                self.col2im(gcols.as_slice().unwrap(), (t, h, w), ti, (ho, wo), gxs);
            }
        }
        if let Some(b) = self.bias {
            let gb = grads.get_mut(b);
            for (co, plane) in grad_out.outer_iter().enumerate() {
                gb[co] += plane.sum();
            }
        }
        gx
    }
}
