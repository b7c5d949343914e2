//! Heat-map contracts: shapes, range, per-video normalization, the zero
//! guard, determinism and file output.

use echomil::dataset::{Label, SyntheticSpec, VideoSample, ViewTag};
use echomil::explain::{generate_heatmap, generate_heatmap_for};
use echomil::model::{ModelConfig, VideoClassifier};
use echomil::nn::ParamStore;
use echomil::sampling::{block_first_select, partition_blocks};

fn config() -> ModelConfig {
    ModelConfig {
        num_frames: 4,
        input_size: 16,
        spatial_feature_dim: 8,
        attention_hidden_dim: 8,
        temporal_feature_dim: 8,
        ..ModelConfig::toy()
    }
}

fn positive() -> VideoSample {
    let spec = SyntheticSpec {
        num_positive: 1,
        num_negative: 0,
        frames_per_video: 12,
        frame_size: 20,
        event_window: (3, 6),
        ..SyntheticSpec::default()
    };
    let (frames, event) = spec.render(0);
    VideoSample::new(event.id, frames, Label::Positive, ViewTag::Synthetic, "").unwrap()
}

#[test]
fn maps_are_normalized_per_video() {
    let model = VideoClassifier::new(config()).unwrap();
    let video = positive();
    let heat = generate_heatmap(&model, &video).unwrap();
    assert_eq!(heat.maps.dim(), (4, 20, 20));
    assert_eq!(heat.overlays.dim(), (4, 20, 20, 3));
    assert_eq!(heat.collection.len(), 4);
    assert!(heat.maps.iter().all(|v| (0.0..=1.0).contains(v)));
    let max = heat.maps.iter().copied().fold(0.0f32, f32::max);
    assert!(max == 1.0 || max == 0.0, "max {max}");

    let again = generate_heatmap(&model, &video).unwrap();
    assert_eq!(heat.maps, again.maps);
    assert_eq!(heat.overlays, again.overlays);
}

#[test]
fn zero_head_gives_zero_maps() {
    let mut model = VideoClassifier::new(config()).unwrap();
    let mut store = ParamStore::new();
    for (name, value) in model.params().iter() {
        let v = if name.starts_with("head.") { value.mapv(|_| 0.0) } else { value.clone() };
        store.add(name, v);
    }
    model.load_params(store).unwrap();
    let video = positive();
    let partition = partition_blocks(video.num_frames(), 4).unwrap();
    let heat = generate_heatmap_for(&model, &video, &block_first_select(&partition)).unwrap();
    assert!(heat.maps.iter().all(|&v| v == 0.0));
    assert_eq!(heat.probability, 0.5);
}

#[test]
fn writes_pngs_and_avi() {
    let dir = tempfile::tempdir().unwrap();
    let model = VideoClassifier::new(config()).unwrap();
    let heat = generate_heatmap(&model, &positive()).unwrap();
    let written = heat.write(dir.path(), 25).unwrap();
    assert_eq!(written.len(), 5);
    for j in 0..4 {
        let png = dir.path().join(format!("syn_0000_frame{j}.png"));
        let img = image::open(&png).unwrap().to_rgb8();
        assert_eq!(img.dimensions(), (20, 20));
    }
    let avi = echomil::dataset::avi::read_avi(&dir.path().join("syn_0000_heatmap.avi")).unwrap();
    assert_eq!(avi, heat.overlays);
}
