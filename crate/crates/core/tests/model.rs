//! Model contracts: an independent nested-loop forward pass, shapes,
//! determinism, invariances, fusion and checkpoint round trips.

use echomil::dataset::{Label, VideoSample, ViewTag};
use echomil::model::{
    frames_to_volume, Aggregation, Checkpoint, DecisionRule, Fusion, ModelConfig, PreparedVideo, VideoClassifier,
};
use echomil::nn::ParamStore;
use echomil::sampling::{partition_blocks, offset_collection};
use ndarray::{s, Array1, Array4, ArrayD, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny(temporal: bool, fusion: Fusion) -> ModelConfig {
    ModelConfig {
        num_frames: 4,
        input_size: 8,
        spatial_feature_dim: 8,
        attention_hidden_dim: 6,
        temporal_feature_dim: 8,
        temporal_branch: temporal,
        fusion,
        init_seed: 3,
        ..ModelConfig::toy()
    }
}

/// A model whose every tensor, including affine shifts and the head bias, is
/// perturbed away from its structured initialization.
fn randomized(config: ModelConfig, seed: u64) -> VideoClassifier {
    let mut model = VideoClassifier::new(config).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for (name, value) in model.params().iter() {
        let noisy = value.mapv(|v| v + rng.random_range(-0.1f32..0.1));
        store.add(name, noisy);
    }
    model.load_params(store).unwrap();
    model
}

fn random_volume(config: &ModelConfig, seed: u64) -> Array4<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = config.input_size;
    Array4::from_shape_simple_fn((3, config.num_frames, s, s), || rng.random_range(-2.0f32..2.0))
}

// ---------------------------------------------------------------------------
// Nested-loop oracle in f64, reading parameters by name.

type Vol = ndarray::Array4<f64>;

fn param(store: &ParamStore, name: &str) -> ArrayD<f64> {
    let id = store.find(name).unwrap_or_else(|| panic!("missing {name}"));
    store.get(id).mapv(|v| v as f64)
}

fn conv(store: &ParamStore, name: &str, x: &Vol, stride: [usize; 3], pad: [usize; 3]) -> Vol {
    let w = param(store, &format!("{name}.weight"));
    let bias = store.find(&format!("{name}.bias")).map(|id| store.get(id).mapv(|v| v as f64));
    let (cout, cin, kt, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3], w.shape()[4]);
    let (_, t, h, wd) = x.dim();
    let out_len = |n: usize, k: usize, i: usize| (n + 2 * pad[i] - k) / stride[i] + 1;
    let (to, ho, wo) = (out_len(t, kt, 0), out_len(h, kh, 1), out_len(wd, kw, 2));
    let mut y = Vol::zeros((cout, to, ho, wo));
    for o in 0..cout {
        for ot in 0..to {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = bias.as_ref().map_or(0.0, |b| b[o]);
                    for i in 0..cin {
                        for dt in 0..kt {
                            for dy in 0..kh {
                                for dx in 0..kw {
                                    let it = (ot * stride[0] + dt) as isize - pad[0] as isize;
                                    let iy = (oy * stride[1] + dy) as isize - pad[1] as isize;
                                    let ix = (ox * stride[2] + dx) as isize - pad[2] as isize;
                                    if it < 0 || iy < 0 || ix < 0 || it >= t as isize || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    acc += w[[o, i, dt, dy, dx]] * x[[i, it as usize, iy as usize, ix as usize]];
                                }
                            }
                        }
                    }
                    y[[o, ot, oy, ox]] = acc;
                }
            }
        }
    }
    y
}

fn affine(store: &ParamStore, name: &str, x: &Vol) -> Vol {
    let a = param(store, &format!("{name}.scale"));
    let b = param(store, &format!("{name}.shift"));
    let mut y = x.clone();
    for (c, mut plane) in y.outer_iter_mut().enumerate() {
        plane.mapv_inplace(|v| a[c] * v + b[c]);
    }
    y
}

fn relu(x: Vol) -> Vol {
    x.mapv(|v| v.max(0.0))
}

fn block(store: &ParamStore, name: &str, x: &Vol, stride: usize, temporal: bool) -> Vol {
    let (st, pad) = if temporal {
        ([stride; 3], [1, 1, 1])
    } else {
        ([1, stride, stride], [0, 1, 1])
    };
    let h = relu(affine(store, &format!("{name}.affine1"), &conv(store, &format!("{name}.conv1"), x, st, pad)));
    let mut pre = affine(store, &format!("{name}.affine2"), &conv(store, &format!("{name}.conv2"), &h, [1, 1, 1], pad));
    if store.find(&format!("{name}.shortcut.conv.weight")).is_some() {
        let sc = conv(store, &format!("{name}.shortcut.conv"), x, st, [0, 0, 0]);
        pre += &affine(store, &format!("{name}.shortcut.affine"), &sc);
    } else {
        pre += x;
    }
    relu(pre)
}

struct OracleOutput {
    frame_features: ndarray::Array2<f64>,
    temporal: Option<Array1<f64>>,
    logit: f64,
}

fn oracle(model: &VideoClassifier, x: &Array4<f32>) -> OracleOutput {
    let config = model.config();
    let arch = config.architecture();
    assert!(!arch.max_pool, "oracle covers the toy backbone");
    let store = model.params();
    let x = x.mapv(|v| v as f64);
    let k = arch.stem_kernel;
    let mut h = relu(affine(
        store,
        "spatial.stem.affine",
        &conv(store, "spatial.stem.conv", &x, [1, arch.stem_stride, arch.stem_stride], [0, k / 2, k / 2]),
    ));
    let mut stage2 = None;
    for (si, &stride) in arch.strides.iter().enumerate() {
        for b in 0..arch.blocks[si] {
            let st = if b == 0 { stride } else { 1 };
            h = block(store, &format!("spatial.stage{}.block{b}", si + 1), &h, st, false);
        }
        if si == 1 {
            stage2 = Some(h.clone());
        }
    }
    // Spatial mean per frame: N x D.
    let frame_features = h.mean_axis(Axis(3)).unwrap().mean_axis(Axis(2)).unwrap().reversed_axes();

    let spatial = match config.aggregation {
        Aggregation::Mean => frame_features.mean_axis(Axis(0)).unwrap(),
        Aggregation::Attention => {
            let v = param(store, "attention.v");
            let w = param(store, "attention.w");
            let (m, d) = (v.shape()[0], v.shape()[1]);
            let scores: Vec<f64> = frame_features
                .outer_iter()
                .map(|row| (0..m).map(|i| w[[i]] * (0..d).map(|j| v[[i, j]] * row[j]).sum::<f64>().tanh()).sum())
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let total: f64 = e.iter().sum();
            let mut z = Array1::<f64>::zeros(d);
            for (row, ei) in frame_features.outer_iter().zip(&e) {
                z.scaled_add(ei / total, &row);
            }
            z
        }
    };

    let temporal = config.temporal_branch.then(|| {
        let mut t = stage2.unwrap();
        for (si, &stride) in arch.temporal_strides.iter().enumerate() {
            for b in 0..arch.blocks[si + 1] {
                let st = if b == 0 { stride } else { 1 };
                t = block(store, &format!("temporal.stage{}.block{b}", si + 2), &t, st, true);
            }
        }
        t.mean_axis(Axis(3)).unwrap().mean_axis(Axis(2)).unwrap().mean_axis(Axis(1)).unwrap()
    });

    let fused: Vec<f64> = match (&temporal, config.fusion) {
        (None, _) => spatial.to_vec(),
        (Some(t), Fusion::Concat) => spatial.iter().chain(t.iter()).copied().collect(),
        (Some(t), Fusion::Sum) => (&spatial + t).to_vec(),
    };
    let hw = param(store, "head.weight");
    let hb = param(store, "head.bias");
    let logit = hb[[0]] + fused.iter().enumerate().map(|(i, f)| hw[[0, i]] * f).sum::<f64>();
    OracleOutput {
        frame_features,
        temporal,
        logit,
    }
}

fn rel_err<'a>(a: impl IntoIterator<Item = &'a f32>, b: impl IntoIterator<Item = &'a f64>) -> f64 {
    let (mut diff, mut scale) = (0.0f64, 0.0f64);
    for (&x, &y) in a.into_iter().zip(b) {
        diff = diff.max((x as f64 - y).abs());
        scale = scale.max(y.abs());
    }
    diff / scale.max(1e-12)
}

#[test]
fn forward_matches_nested_loop_oracle() {
    for (temporal, fusion, aggregation) in [
        (true, Fusion::Concat, Aggregation::Attention),
        (true, Fusion::Sum, Aggregation::Mean),
        (false, Fusion::Concat, Aggregation::Attention),
    ] {
        let config = ModelConfig {
            aggregation,
            ..tiny(temporal, fusion)
        };
        let model = randomized(config.clone(), 17);
        let x = random_volume(&config, 23);
        let (bundle, _) = model.forward_volume(&x).unwrap();
        let want = oracle(&model, &x);
        let e = rel_err(bundle.frame_features.iter(), want.frame_features.iter());
        assert!(e < 1e-5, "frame features rel err {e}");
        if let (Some(got), Some(want)) = (&bundle.temporal_feature, &want.temporal) {
            let e = rel_err(got.iter(), want.iter());
            assert!(e < 1e-5, "temporal feature rel err {e}");
        }
        let e = (bundle.logit as f64 - want.logit).abs() / want.logit.abs().max(1.0);
        assert!(e < 1e-5, "logit {} vs oracle {}", bundle.logit, want.logit);
    }
}

#[test]
fn toy_shapes() {
    let config = ModelConfig {
        num_frames: 6,
        ..ModelConfig::toy()
    };
    let model = VideoClassifier::new(config.clone()).unwrap();
    let (bundle, _) = model.forward_volume(&random_volume(&config, 1)).unwrap();
    assert_eq!(bundle.frame_features.dim(), (6, 32));
    assert_eq!(bundle.attention_weights.len(), 6);
    assert!((bundle.attention_weights.sum() - 1.0).abs() < 1e-6);
    assert_eq!(bundle.spatial_feature.len(), 32);
    assert_eq!(bundle.temporal_feature.as_ref().unwrap().len(), 32);
    assert_eq!(bundle.fused.len(), 64);
    assert_eq!(bundle.stage2_maps.dim().1, 6);
    assert!((0.0..=1.0).contains(&bundle.probability));
}

#[test]
fn same_seed_same_bits() {
    let config = tiny(true, Fusion::Concat);
    let x = random_volume(&config, 2);
    let a = VideoClassifier::new(config.clone()).unwrap().forward_volume(&x).unwrap().0;
    let b = VideoClassifier::new(config.clone()).unwrap().forward_volume(&x).unwrap().0;
    assert_eq!(a.logit.to_bits(), b.logit.to_bits());
    assert_eq!(a.fused, b.fused);
    let other = VideoClassifier::new(ModelConfig {
        init_seed: 4,
        ..config
    })
    .unwrap()
    .forward_volume(&x)
    .unwrap()
    .0;
    assert_ne!(a.logit, other.logit);
}

#[test]
fn duplicated_frames_give_identical_rows_and_uniform_attention() {
    let config = tiny(true, Fusion::Concat);
    let model = randomized(config.clone(), 5);
    let mut x = random_volume(&config, 6);
    let first = x.slice(s![.., 0, .., ..]).to_owned();
    for t in 1..config.num_frames {
        x.slice_mut(s![.., t, .., ..]).assign(&first);
    }
    let (bundle, _) = model.forward_volume(&x).unwrap();
    for row in bundle.frame_features.outer_iter().skip(1) {
        assert_eq!(row, bundle.frame_features.row(0));
    }
    for &a in &bundle.attention_weights {
        assert!((a - 0.25).abs() < 1e-6);
    }
}

#[test]
fn frame_order_matters_only_through_the_temporal_branch() {
    for temporal in [true, false] {
        let config = tiny(temporal, Fusion::Concat);
        let model = randomized(config.clone(), 8);
        let x = random_volume(&config, 9);
        let mut reversed = x.clone();
        reversed.invert_axis(Axis(1));
        let a = model.forward_volume(&x).unwrap().0.logit;
        let b = model.forward_volume(&reversed).unwrap().0.logit;
        if temporal {
            assert!((a - b).abs() > 1e-6, "temporal branch ignores order: {a} vs {b}");
        } else {
            assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0), "{a} vs {b}");
        }
    }
}

#[test]
fn zero_input_is_finite_and_repeatable() {
    let config = tiny(true, Fusion::Concat);
    let model = randomized(config.clone(), 10);
    let x = Array4::<f32>::zeros((3, 4, 8, 8));
    let a = model.forward_volume(&x).unwrap().0;
    let b = model.forward_volume(&x).unwrap().0;
    assert!(a.logit.is_finite());
    assert_eq!(a.logit.to_bits(), b.logit.to_bits());
}

#[test]
fn fusion_modes() {
    let x = random_volume(&tiny(true, Fusion::Concat), 12);
    let concat = VideoClassifier::new(tiny(true, Fusion::Concat)).unwrap().forward_volume(&x).unwrap().0;
    let t = concat.temporal_feature.clone().unwrap();
    assert_eq!(concat.fused.slice(s![..8]), concat.spatial_feature);
    assert_eq!(concat.fused.slice(s![8..]), t);

    let sum = VideoClassifier::new(tiny(true, Fusion::Sum)).unwrap().forward_volume(&x).unwrap().0;
    assert_eq!(sum.fused.len(), 8);
    assert_eq!(sum.fused, &sum.spatial_feature + sum.temporal_feature.as_ref().unwrap());

    let model = VideoClassifier::new(tiny(true, Fusion::Concat)).unwrap();
    let s = Array1::from(vec![1.0f32, 2.0]);
    let t = Array1::from(vec![3.0f32]);
    assert_eq!(model.fuse(&s, Some(&t)).unwrap().to_vec(), vec![1.0, 2.0, 3.0]);
}

#[test]
fn input_shape_is_checked() {
    let model = VideoClassifier::new(tiny(true, Fusion::Concat)).unwrap();
    assert!(model.forward_volume(&Array4::zeros((3, 4, 9, 9))).is_err());
    assert!(model.forward_volume(&Array4::zeros((1, 4, 8, 8))).is_err());
    assert!(model.forward_volume(&Array4::zeros((3, 1, 8, 8))).is_err());
}

fn video(frames: usize, seed: u64) -> VideoSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = Array4::from_shape_simple_fn((frames, 12, 12, 3), || rng.random::<u8>());
    VideoSample::new(format!("v{seed}"), data, Label::Positive, ViewTag::Synthetic, "").unwrap()
}

#[test]
fn vote_counts_follow_the_decision_rule() {
    let config = ModelConfig {
        num_frames: 4,
        ..tiny(true, Fusion::Concat)
    };
    let model = VideoClassifier::new(config.clone()).unwrap();
    assert_eq!(model.predict_video(&video(4, 1)).unwrap().collection_votes.len(), 1);
    assert_eq!(model.predict_video(&video(8, 1)).unwrap().collection_votes.len(), 2);
    assert_eq!(model.predict_video(&video(13, 1)).unwrap().collection_votes.len(), 4);
    let middle = VideoClassifier::new(ModelConfig {
        decision: DecisionRule::MiddleCollection,
        ..config
    })
    .unwrap();
    assert_eq!(middle.predict_video(&video(13, 1)).unwrap().collection_votes.len(), 1);
}

#[test]
fn collection_scores_match_direct_forward() {
    let config = tiny(true, Fusion::Concat);
    let model = randomized(config.clone(), 14);
    let sample = video(8, 3);
    let prepared = PreparedVideo::new(&sample, &config).unwrap();
    let prediction = model.predict_prepared(&prepared).unwrap();
    let partition = partition_blocks(8, 4).unwrap();
    for (offset, &score) in prediction.collection_scores.iter().enumerate() {
        let c = offset_collection(&partition, offset).unwrap();
        let frames: Vec<_> = c.frame_indices().iter().map(|&i| prepared.frames.slice(s![i, .., .., ..])).collect();
        let p = model.forward_volume(&frames_to_volume(&frames)).unwrap().0.probability;
        assert_eq!(p.to_bits(), score.to_bits());
    }
}

#[test]
fn checkpoint_reload_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny(true, Fusion::Concat);
    let model = randomized(config, 15);
    let blob = dir.path().join("m.ckpt");
    Checkpoint::from_model(&model, None, 42, 7).save(&blob).unwrap();

    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(Checkpoint::sidecar_path(&blob)).unwrap()).unwrap();
    let keys: Vec<&str> = sidecar.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["config", "epoch", "seed"]);
    assert_eq!(sidecar["seed"], 42);

    let loaded = Checkpoint::load(&blob).unwrap();
    assert_eq!((loaded.seed, loaded.epoch, loaded.next_epoch), (42, 7, 8));
    let reloaded = loaded.to_model().unwrap();
    let sample = video(9, 4);
    let a = model.predict_video(&sample).unwrap();
    let b = reloaded.predict_video(&sample).unwrap();
    assert_eq!(a, b);
    for (x, y) in a.collection_scores.iter().zip(&b.collection_scores) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}

#[test]
fn missing_or_corrupt_checkpoint_fails() {
    let dir = tempfile::tempdir().unwrap();
    assert!(Checkpoint::load(&dir.path().join("absent.ckpt")).is_err());
    let blob = dir.path().join("m.ckpt");
    let model = VideoClassifier::new(tiny(false, Fusion::Concat)).unwrap();
    Checkpoint::from_model(&model, None, 0, 1).save(&blob).unwrap();
    let bytes = std::fs::read(&blob).unwrap();
    std::fs::write(&blob, &bytes[..bytes.len() - 4]).unwrap();
    assert!(Checkpoint::load(&blob).is_err());
}

#[test]
fn backbone_transfer_copies_spatial_tensors_only() {
    let dir = tempfile::tempdir().unwrap();
    let source = randomized(tiny(true, Fusion::Concat), 20);
    let blob = dir.path().join("backbone.ckpt");
    Checkpoint::from_model(&source, None, 0, 1).save(&blob).unwrap();
    let config = ModelConfig {
        pretrained_backbone: true,
        backbone_weights: Some(blob),
        ..tiny(true, Fusion::Concat)
    };
    let model = echomil::training::build_model(&config).unwrap();
    for (name, value) in model.params().iter() {
        let src = source.params().get(source.params().find(name).unwrap());
        assert_eq!(name.starts_with("spatial.") , value == src, "{name}");
    }
}
