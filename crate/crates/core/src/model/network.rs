//! Dual-branch classifier: a frame-wise 2D residual backbone with attention
//! pooling, plus a 3D residual branch over the stacked stage-2 maps.

use ndarray::{concatenate, s, Array1, Array2, Array4, ArrayView2, Axis, Ix1, Ix2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::attention::{self, AttentionCache};
use super::config::{Aggregation, Fusion, ModelConfig};
use crate::error::{Error, Result};
use crate::nn::{
    avg_pool_frames, avg_pool_frames_backward, avg_pool_volume, avg_pool_volume_backward, relu, relu_backward,
    ChannelAffine, Conv3d, Gradients, Linear, MaxPool2d, ParamId, ParamStore,
};

/// Initial scale of the last affine layer in each residual branch.
const RESIDUAL_BRANCH_SCALE: f32 = 0.2;

#[derive(Debug, Clone)]
struct Shortcut {
    conv: Conv3d,
    affine: ChannelAffine,
}

#[derive(Debug, Clone)]
struct BasicBlock {
    conv1: Conv3d,
    affine1: ChannelAffine,
    conv2: Conv3d,
    affine2: ChannelAffine,
    shortcut: Option<Shortcut>,
}

type BackboneRun = (Vec<Vec<BlockCache>>, Array4<f32>, Array4<f32>, Option<Vec<usize>>);

#[derive(Debug, Clone)]
struct BlockCache {
    input: Array4<f32>,
    conv1: Array4<f32>,
    hidden: Array4<f32>,
    conv2: Array4<f32>,
    shortcut_conv: Option<Array4<f32>>,
    output: Array4<f32>,
}

impl BasicBlock {
    /// `temporal` selects 3x3x3 kernels with temporal striding instead of
    /// frame-wise 3x3 kernels.
    fn new(
        store: &mut ParamStore,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        stride: usize,
        temporal: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let (kernel, padding, stride3) = if temporal {
            ([3, 3, 3], [1, 1, 1], [stride, stride, stride])
        } else {
            ([1, 3, 3], [0, 1, 1], [1, stride, stride])
        };
        let conv1 = Conv3d::new(store, &format!("{name}.conv1"), in_ch, out_ch, kernel, stride3, padding, false, rng);
        let affine1 = ChannelAffine::new(store, &format!("{name}.affine1"), out_ch, 1.0);
        let conv2 = Conv3d::new(store, &format!("{name}.conv2"), out_ch, out_ch, kernel, [1, 1, 1], padding, false, rng);
        let affine2 = ChannelAffine::new(store, &format!("{name}.affine2"), out_ch, RESIDUAL_BRANCH_SCALE);
        let shortcut = (stride != 1 || in_ch != out_ch).then(|| Shortcut {
            conv: Conv3d::new(store, &format!("{name}.shortcut.conv"), in_ch, out_ch, [1, 1, 1], stride3, [0, 0, 0], false, rng),
            affine: ChannelAffine::new(store, &format!("{name}.shortcut.affine"), out_ch, 1.0),
        });
        Self {
            conv1,
            affine1,
            conv2,
            affine2,
            shortcut,
        }
    }

    fn forward(&self, store: &ParamStore, x: Array4<f32>) -> BlockCache {
        let conv1 = self.conv1.forward(store, &x);
        let hidden = relu(&self.affine1.forward(store, &conv1));
        let conv2 = self.conv2.forward(store, &hidden);
        let mut pre = self.affine2.forward(store, &conv2);
        let shortcut_conv = match &self.shortcut {
            Some(sc) => {
                let c = sc.conv.forward(store, &x);
                pre += &sc.affine.forward(store, &c);
                Some(c)
            }
            None => {
                pre += &x;
                None
            }
        };
        BlockCache {
            input: x,
            conv1,
            hidden,
            conv2,
            shortcut_conv,
            output: relu(&pre),
        }
    }

    fn backward(&self, store: &ParamStore, cache: &BlockCache, grad: &Array4<f32>, grads: &mut Gradients) -> Array4<f32> {
        let g_pre = relu_backward(&cache.output, grad);
        let g_conv2 = self.affine2.backward(store, &cache.conv2, &g_pre, grads);
        let g_hidden = self.conv2.backward(store, &cache.hidden, &g_conv2, grads);
        let g_aff1 = relu_backward(&cache.hidden, &g_hidden);
        let g_conv1 = self.affine1.backward(store, &cache.conv1, &g_aff1, grads);
        let mut g_x = self.conv1.backward(store, &cache.input, &g_conv1, grads);
        match (&self.shortcut, &cache.shortcut_conv) {
            (Some(sc), Some(c)) => {
                let g_c = sc.affine.backward(store, c, &g_pre, grads);
                g_x += &sc.conv.backward(store, &cache.input, &g_c, grads);
            }
            _ => g_x += &g_pre,
        }
        g_x
    }
}

/// Everything computed by one forward pass over a frame collection.
#[derive(Debug, Clone)]
pub struct FeatureBundle {
    /// `N x D` per-frame features `h_j`.
    pub frame_features: Array2<f32>,
    /// Stage-2 activations stacked along time: `C x N x h x w`.
    pub stage2_maps: Array4<f32>,
    /// Final spatial-stage activations `C x N x h x w` (class-activation source).
    pub top_maps: Array4<f32>,
    pub attention_weights: Array1<f32>,
    pub spatial_feature: Array1<f32>,
    pub temporal_feature: Option<Array1<f32>>,
    pub fused: Array1<f32>,
    pub logit: f32,
    pub probability: f32,
}

/// Intermediates for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Array4<f32>,
    stem_conv: Array4<f32>,
    stem_act: Array4<f32>,
    pool_argmax: Option<Vec<usize>>,
    stages: Vec<Vec<BlockCache>>,
    temporal: Vec<Vec<BlockCache>>,
    attention: Option<AttentionCache<f32>>,
}

#[derive(Debug, Clone)]
pub struct VideoClassifier {
    config: ModelConfig,
    store: ParamStore,
    stem: Conv3d,
    stem_affine: ChannelAffine,
    pool: Option<MaxPool2d>,
    stages: Vec<Vec<BasicBlock>>,
    temporal: Vec<Vec<BasicBlock>>,
    attention_v: ParamId,
    attention_w: ParamId,
    head: Linear,
}

pub fn logistic(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl VideoClassifier {
    /// Randomly initialized model seeded by `config.init_seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let arch = config.architecture();
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut store = ParamStore::new();

        let stem = Conv3d::new_2d(
            &mut store,
            "spatial.stem.conv",
            3,
            arch.stem_width,
            arch.stem_kernel,
            arch.stem_stride,
            arch.stem_kernel / 2,
            &mut rng,
        );
        let stem_affine = ChannelAffine::new(&mut store, "spatial.stem.affine", arch.stem_width, 1.0);
        let pool = arch.max_pool.then_some(MaxPool2d {
            kernel: 3,
            stride: 2,
            padding: 1,
        });

        let mut stages = Vec::new();
        let mut in_ch = arch.stem_width;
        for (si, ((&width, &stride), &blocks)) in arch.widths.iter().zip(&arch.strides).zip(&arch.blocks).enumerate() {
            let mut stage = Vec::new();
            for b in 0..blocks {
                let name = format!("spatial.stage{}.block{b}", si + 1);
                let st = if b == 0 { stride } else { 1 };
                stage.push(BasicBlock::new(&mut store, &name, in_ch, width, st, false, &mut rng));
                in_ch = width;
            }
            stages.push(stage);
        }

        let mut temporal = Vec::new();
        if config.temporal_branch {
            let mut in_ch = arch.widths[1];
            for (si, (&width, &stride)) in arch.temporal_widths.iter().zip(&arch.temporal_strides).enumerate() {
                let mut stage = Vec::new();
                for b in 0..arch.blocks[si + 1] {
                    let name = format!("temporal.stage{}.block{b}", si + 2);
                    let st = if b == 0 { stride } else { 1 };
                    stage.push(BasicBlock::new(&mut store, &name, in_ch, width, st, true, &mut rng));
                    in_ch = width;
                }
                temporal.push(stage);
            }
        }

        let (m, d) = (config.attention_hidden_dim, config.spatial_feature_dim);
        let v_bound = 1.0 / (d as f32).sqrt();
        let w_bound = 1.0 / (m as f32).sqrt();
        let attention_v = store.add(
            "attention.v",
            ndarray::ArrayD::from_shape_simple_fn(ndarray::IxDyn(&[m, d]), || rand::Rng::random_range(&mut rng, -v_bound..v_bound)),
        );
        let attention_w = store.add(
            "attention.w",
            ndarray::ArrayD::from_shape_simple_fn(ndarray::IxDyn(&[m]), || rand::Rng::random_range(&mut rng, -w_bound..w_bound)),
        );
        let head = Linear::new(&mut store, "head", config.fused_dim(), 1, &mut rng);

        Ok(Self {
            config,
            store,
            stem,
            stem_affine,
            pool,
            stages,
            temporal,
            attention_v,
            attention_w,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn zero_grads(&self) -> Gradients {
        self.store.zero_grads()
    }

    /// Replace parameters with `store`, which must match names and shapes.
    pub fn load_params(&mut self, store: ParamStore) -> Result<()> {
        if store.len() != self.store.len() {
            return Err(Error::State(format!(
                "checkpoint has {} tensors, model expects {}",
                store.len(),
                self.store.len()
            )));
        }
        for ((name_a, a), (name_b, b)) in self.store.iter().zip(store.iter()) {
            if name_a != name_b || a.shape() != b.shape() {
                return Err(Error::State(format!(
                    "checkpoint tensor {name_b} {:?} does not match model tensor {name_a} {:?}",
                    b.shape(),
                    a.shape()
                )));
            }
        }
        self.store = store;
        Ok(())
    }

    /// Copy every `spatial.*` tensor present in `source` with a matching shape.
    pub fn load_backbone_from(&mut self, source: &ParamStore) -> usize {
        let mut copied = 0;
        let updates: Vec<(ParamId, ndarray::ArrayD<f32>)> = self
            .store
            .iter()
            .enumerate()
            .filter(|(_, (name, _))| name.starts_with("spatial."))
            .filter_map(|(i, (name, value))| {
                let src = source.find(name).map(|id| source.get(id))?;
                (src.shape() == value.shape()).then(|| (ParamId(i), src.clone()))
            })
            .collect();
        for (id, value) in updates {
            *self.store.get_mut(id) = value;
            copied += 1;
        }
        copied
    }

    fn attention_params(&self) -> (ArrayView2<'_, f32>, ndarray::ArrayView1<'_, f32>) {
        (
            self.store.get(self.attention_v).view().into_dimensionality::<Ix2>().unwrap(),
            self.store.get(self.attention_w).view().into_dimensionality::<Ix1>().unwrap(),
        )
    }

    /// Check an input volume `3 x N x S x S`.
    pub fn check_input(&self, x: &Array4<f32>) -> Result<()> {
        let (c, n, h, w) = x.dim();
        let s = self.config.input_size;
        if c != 3 || h != s || w != s || n == 0 {
            return Err(Error::Config(format!(
                "model expects 3 x N x {s} x {s} input, got {c} x {n} x {h} x {w}"
            )));
        }
        if self.config.temporal_branch && n < 2 {
            return Err(Error::InsufficientFrames(n));
        }
        Ok(())
    }

    /// Per-frame backbone: returns `(frame_features N x D, stage2_maps, top_maps)`.
    pub fn extract_frame_features(&self, x: &Array4<f32>) -> Result<(Array2<f32>, Array4<f32>, Array4<f32>)> {
        let (c, n, h, w) = x.dim();
        let s = self.config.input_size;
        if c != 3 || h != s || w != s || n == 0 {
            return Err(Error::Config(format!(
                "model expects 3 x N x {s} x {s} input, got {c} x {n} x {h} x {w}"
            )));
        }
        let (stages, _, _, _) = self.run_backbone(x.clone());
        let top = stages.last().unwrap().last().unwrap().output.clone();
        let stage2 = stages[1].last().unwrap().output.clone();
        Ok((avg_pool_frames(&top), stage2, top))
    }

    /// Returns `(stage caches, stem conv output, stem activation, pool argmax)`.
    fn run_backbone(&self, x: Array4<f32>) -> BackboneRun {
        let stem_conv = self.stem.forward(&self.store, &x);
        let stem_act = relu(&self.stem_affine.forward(&self.store, &stem_conv));
        let (mut h, argmax) = match &self.pool {
            Some(pool) => {
                let (p, arg) = pool.forward(&stem_act);
                (p, Some(arg))
            }
            None => (stem_act.clone(), None),
        };
        let mut caches = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            let mut stage_cache = Vec::with_capacity(stage.len());
            for block in stage {
                let c = block.forward(&self.store, h);
                h = c.output.clone();
                stage_cache.push(c);
            }
            caches.push(stage_cache);
        }
        (caches, stem_conv, stem_act, argmax)
    }

    fn run_temporal(&self, stage2: &Array4<f32>) -> Result<(Vec<Vec<BlockCache>>, Array1<f32>)> {
        let n = stage2.dim().1;
        if n < 2 {
            return Err(Error::InsufficientFrames(n));
        }
        let mut h = stage2.clone();
        let mut caches = Vec::with_capacity(self.temporal.len());
        for stage in &self.temporal {
            let mut stage_cache = Vec::with_capacity(stage.len());
            for block in stage {
                let c = block.forward(&self.store, h);
                h = c.output.clone();
                stage_cache.push(c);
            }
            caches.push(stage_cache);
        }
        Ok((caches, avg_pool_volume(&h)))
    }

    /// 3D residual stages over stacked stage-2 maps (`C x N x h x w`), globally pooled.
    pub fn temporal_branch(&self, stage2_maps: &Array4<f32>) -> Result<Array1<f32>> {
        if !self.config.temporal_branch {
            return Err(Error::Config("model was built without the temporal branch".into()));
        }
        Ok(self.run_temporal(stage2_maps)?.1)
    }

    pub fn aggregate(&self, frame_features: &Array2<f32>) -> (Array1<f32>, Array1<f32>, Option<AttentionCache<f32>>) {
        match self.config.aggregation {
            Aggregation::Attention => {
                let (v, w) = self.attention_params();
                let (z, alpha, cache) = attention::attention_aggregate(frame_features.view(), v, w);
                (z, alpha, Some(cache))
            }
            Aggregation::Mean => {
                let (z, alpha) = attention::mean_aggregate(frame_features.view());
                (z, alpha, None)
            }
        }
    }

    pub fn fuse(&self, spatial: &Array1<f32>, temporal: Option<&Array1<f32>>) -> Result<Array1<f32>> {
        match (temporal, self.config.fusion) {
            (None, _) => Ok(spatial.clone()),
            (Some(t), Fusion::Concat) => Ok(concatenate![Axis(0), spatial.view(), t.view()]),
            (Some(t), Fusion::Sum) => {
                if t.len() != spatial.len() {
                    return Err(Error::Config(format!(
                        "sum fusion needs equal dims, got {} and {}",
                        spatial.len(),
                        t.len()
                    )));
                }
                Ok(spatial + t)
            }
        }
    }

    /// `(fused, logit, probability)`.
    pub fn fuse_and_classify(&self, spatial: &Array1<f32>, temporal: Option<&Array1<f32>>) -> Result<(Array1<f32>, f32, f32)> {
        let fused = self.fuse(spatial, temporal)?;
        if fused.len() != self.head.in_features {
            return Err(Error::Config(format!(
                "head expects a {}-d fused vector, got {}",
                self.head.in_features,
                fused.len()
            )));
        }
        let logit = self.head.forward(&self.store, &fused)[0];
        Ok((fused, logit, logistic(logit)))
    }

    /// Full forward pass over a `3 x N x S x S` input volume.
    pub fn forward_volume(&self, x: &Array4<f32>) -> Result<(FeatureBundle, ForwardCache)> {
        self.check_input(x)?;
        let (stages, stem_conv, stem_act, pool_argmax) = self.run_backbone(x.clone());
        let top_maps = stages.last().unwrap().last().unwrap().output.clone();
        let stage2_maps = stages[1].last().unwrap().output.clone();
        let frame_features = avg_pool_frames(&top_maps);
        let (spatial_feature, attention_weights, attention) = self.aggregate(&frame_features);
        let (temporal, temporal_feature) = if self.config.temporal_branch {
            let (caches, feature) = self.run_temporal(&stage2_maps)?;
            (caches, Some(feature))
        } else {
            (Vec::new(), None)
        };
        let (fused, logit, probability) = self.fuse_and_classify(&spatial_feature, temporal_feature.as_ref())?;
        let bundle = FeatureBundle {
            frame_features,
            stage2_maps,
            top_maps,
            attention_weights,
            spatial_feature,
            temporal_feature,
            fused,
            logit,
            probability,
        };
        let cache = ForwardCache {
            input: x.clone(),
            stem_conv,
            stem_act,
            pool_argmax,
            stages,
            temporal,
            attention,
        };
        Ok((bundle, cache))
    }

    /// Gradients of the head and aggregation for `dL/dlogit`: returns the
    /// gradient at the top spatial maps and at the pooled temporal feature.
    fn backward_head(
        &self,
        bundle: &FeatureBundle,
        cache: &ForwardCache,
        grad_logit: f32,
        grads: &mut Gradients,
    ) -> (Array4<f32>, Option<Array1<f32>>) {
        let g_fused = self.head.backward(&self.store, &bundle.fused, &Array1::from_elem(1, grad_logit), grads);
        let d = self.config.spatial_feature_dim;
        let (g_spatial, g_temporal) = match (bundle.temporal_feature.is_some(), self.config.fusion) {
            (false, _) => (g_fused, None),
            (true, Fusion::Concat) => (g_fused.slice(s![..d]).to_owned(), Some(g_fused.slice(s![d..]).to_owned())),
            (true, Fusion::Sum) => (g_fused.clone(), Some(g_fused)),
        };
        let g_features = match &cache.attention {
            Some(att) => {
                let (v, w) = self.attention_params();
                let g = attention::attention_backward(bundle.frame_features.view(), v, w, att, g_spatial.view());
                *grads.get_mut(self.attention_v) += &g.v.into_dyn();
                *grads.get_mut(self.attention_w) += &g.w.into_dyn();
                g.features
            }
            None => attention::mean_aggregate_backward(bundle.frame_features.nrows(), g_spatial.view()),
        };
        (avg_pool_frames_backward(bundle.top_maps.dim(), &g_features), g_temporal)
    }

    /// Gradient of the logit with respect to the top spatial maps.
    pub fn top_map_gradient(&self, bundle: &FeatureBundle, cache: &ForwardCache) -> Array4<f32> {
        let mut scratch = self.store.zero_grads();
        self.backward_head(bundle, cache, 1.0, &mut scratch).0
    }

    /// Accumulate parameter gradients of a loss with `dL/dlogit = grad_logit`.
    pub fn backward(&self, bundle: &FeatureBundle, cache: &ForwardCache, grad_logit: f32, grads: &mut Gradients) {
        let (mut g, g_temporal) = self.backward_head(bundle, cache, grad_logit, grads);

        let mut g_stage2_from_temporal = None;
        if let Some(g_t) = g_temporal {
            let last = cache.temporal.last().and_then(|s| s.last()).expect("temporal caches");
            let mut gt = avg_pool_volume_backward(last.output.dim(), &g_t);
            for (stage, stage_cache) in self.temporal.iter().zip(&cache.temporal).rev() {
                for (block, block_cache) in stage.iter().zip(stage_cache).rev() {
                    gt = block.backward(&self.store, block_cache, &gt, grads);
                }
            }
            g_stage2_from_temporal = Some(gt);
        }

        for (si, (stage, stage_cache)) in self.stages.iter().zip(&cache.stages).enumerate().rev() {
            if si == 1 {
                if let Some(gt) = &g_stage2_from_temporal {
                    g += gt;
                }
            }
            for (block, block_cache) in stage.iter().zip(stage_cache).rev() {
                g = block.backward(&self.store, block_cache, &g, grads);
            }
        }

        if let (Some(pool), Some(argmax)) = (&self.pool, &cache.pool_argmax) {
            g = pool.backward(cache.stem_act.dim(), argmax, &g);
        }
        let g = relu_backward(&cache.stem_act, &g);
        let g = self.stem_affine.backward(&self.store, &cache.stem_conv, &g, grads);
        self.stem.backward(&self.store, &cache.input, &g, grads);
    }
}

/// Stack `N` preprocessed `S x S x 3` frames into a `3 x N x S x S` volume.
pub fn frames_to_volume(frames: &[ndarray::ArrayView3<'_, f32>]) -> Array4<f32> {
    let n = frames.len();
    let (h, w, _) = frames[0].dim();
    let mut out = Array4::<f32>::zeros((3, n, h, w));
    for (t, f) in frames.iter().enumerate() {
        for c in 0..3 {
            out.slice_mut(s![c, t, .., ..]).assign(&f.slice(s![.., .., c]));
        }
    }
    out
}
