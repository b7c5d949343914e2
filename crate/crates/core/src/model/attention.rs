//! Attention pooling over frame features.
//!
//! For frame features `h_j` (rows of `J x D`), attention parameters
//! `V: M x D` and `w: M`, each frame gets the score `s_j = w . tanh(V h_j)`;
//! the weights are `alpha = softmax(s)` and the bag feature is
//! `z = sum_j alpha_j h_j`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, NdFloat};

/// Forward intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct AttentionCache<F> {
    /// `tanh(V h_j)` stacked as `J x M`.
    pub hidden: Array2<F>,
    pub weights: Array1<F>,
}

#[derive(Debug, Clone)]
pub struct AttentionGrads<F> {
    pub features: Array2<F>,
    pub v: Array2<F>,
    pub w: Array1<F>,
}

/// Numerically stable softmax.
pub fn softmax<F: NdFloat>(scores: ArrayView1<'_, F>) -> Array1<F> {
    let max = scores.fold(F::neg_infinity(), |m, &s| m.max(s));
    let exp = scores.mapv(|s| (s - max).exp());
    let total = exp.sum();
    exp / total
}

pub fn attention_scores<F: NdFloat>(features: ArrayView2<'_, F>, v: ArrayView2<'_, F>, w: ArrayView1<'_, F>) -> (Array1<F>, Array2<F>) {
    let hidden = features.dot(&v.t()).mapv(F::tanh);
    (hidden.dot(&w), hidden)
}

/// Returns `(z, alpha, cache)`.
pub fn attention_aggregate<F: NdFloat>(
    features: ArrayView2<'_, F>,
    v: ArrayView2<'_, F>,
    w: ArrayView1<'_, F>,
) -> (Array1<F>, Array1<F>, AttentionCache<F>) {
    assert!(features.nrows() >= 1, "attention needs at least one frame");
    let (scores, hidden) = attention_scores(features, v, w);
    let weights = softmax(scores.view());
    let z = weights.dot(&features);
    let cache = AttentionCache {
        hidden,
        weights: weights.clone(),
    };
    (z, weights, cache)
}

/// Uniform weights `1/J`: the mean-pooling fallback.
pub fn mean_aggregate<F: NdFloat>(features: ArrayView2<'_, F>) -> (Array1<F>, Array1<F>) {
    let j = features.nrows();
    let weights = Array1::from_elem(j, F::one() / F::from(j).unwrap());
    (weights.dot(&features), weights)
}

pub fn mean_aggregate_backward<F: NdFloat>(num_frames: usize, grad_z: ArrayView1<'_, F>) -> Array2<F> {
    let scale = F::one() / F::from(num_frames).unwrap();
    let row = grad_z.mapv(|g| g * scale);
    let mut out = Array2::zeros((num_frames, row.len()));
    for mut r in out.axis_iter_mut(Axis(0)) {
        r.assign(&row);
    }
    out
}

/// Gradients of a scalar loss with respect to features, `V` and `w`, given
/// `grad_z = dL/dz`.
pub fn attention_backward<F: NdFloat>(
    features: ArrayView2<'_, F>,
    v: ArrayView2<'_, F>,
    w: ArrayView1<'_, F>,
    cache: &AttentionCache<F>,
    grad_z: ArrayView1<'_, F>,
) -> AttentionGrads<F> {
    let alpha = &cache.weights;
    // dL/dalpha_j = grad_z . h_j
    let g_alpha = features.dot(&grad_z);
    let mean = alpha.dot(&g_alpha);
    let g_scores = alpha * &(g_alpha - mean);
    let g_w = cache.hidden.t().dot(&g_scores);
    // J x M pre-activation gradient
    let mut g_pre = Array2::zeros(cache.hidden.raw_dim());
    for ((mut row, hidden), &gs) in g_pre.axis_iter_mut(Axis(0)).zip(cache.hidden.axis_iter(Axis(0))).zip(g_scores.iter()) {
        for ((g, &u), &wm) in row.iter_mut().zip(hidden.iter()).zip(w.iter()) {
            *g = gs * wm * (F::one() - u * u);
        }
    }
    let g_v = g_pre.t().dot(&features);
    let mut g_features = g_pre.dot(&v);
    for (mut row, &a) in g_features.axis_iter_mut(Axis(0)).zip(alpha.iter()) {
        row.scaled_add(a, &grad_z);
    }
    AttentionGrads {
        features: g_features,
        v: g_v,
        w: g_w,
    }
}
