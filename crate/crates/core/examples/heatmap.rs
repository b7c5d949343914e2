//! Train the toy model, then explain unseen synthetic positives with
//! gradient-weighted class activation maps and check that the heat sits on
//! the event patch. Overlays for the first video are written to `./heatmaps`.
//!
//! `cargo run --release --example heatmap -- [epochs]`

use echomil::dataset::{generate_synthetic_dataset, load_all, Label, SyntheticSpec, VideoSample, ViewTag};
use echomil::explain::generate_heatmap;
use echomil::model::ModelConfig;
use echomil::training::{prepare_videos, train_fold, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let epochs = std::env::args().nth(1).map_or(40, |a| a.parse().expect("epochs"));

    let dir = tempfile::tempdir()?;
    let spec = SyntheticSpec {
        frame_size: 64,
        ..SyntheticSpec::default()
    };
    let (manifest, _) = generate_synthetic_dataset(&spec, dir.path())?;
    let model_config = ModelConfig::toy();
    let videos = prepare_videos(&load_all(&manifest)?, &model_config)?;
    let train_config = TrainConfig {
        epochs,
        ..TrainConfig::toy()
    };
    let (checkpoint, _) = train_fold(&videos, &[], &model_config, &train_config)?;
    let model = checkpoint.to_model()?;

    let unseen = SyntheticSpec {
        num_positive: 24,
        num_negative: 0,
        seed: 99,
        ..spec
    };
    let mut wins = 0;
    for index in 0..unseen.num_positive {
        let (frames, event) = unseen.render(index);
        let video = VideoSample::new(event.id.clone(), frames, Label::Positive, ViewTag::Synthetic, "")?;
        let heat = generate_heatmap(&model, &video)?;
        let [x0, y0, x1, y1] = event.patch.expect("positives carry a patch");
        let (mut inside, mut n_in, mut outside, mut n_out) = (0.0, 0, 0.0, 0);
        for (t, &frame) in heat.collection.frame_indices().iter().enumerate() {
            if !event.contains_frame(frame) {
                continue;
            }
            for ((y, x), &v) in heat.maps.index_axis(ndarray::Axis(0), t).indexed_iter() {
                if (y0..y1).contains(&y) && (x0..x1).contains(&x) {
                    inside += v as f64;
                    n_in += 1;
                } else {
                    outside += v as f64;
                    n_out += 1;
                }
            }
        }
        let (inside, outside) = (inside / n_in as f64, outside / n_out as f64);
        wins += (inside > outside) as usize;
        println!("{}: p = {:.3}, heat inside {inside:.3} vs outside {outside:.3}", event.id, heat.probability);
        if index == 0 {
            heat.write(std::path::Path::new("heatmaps"), spec.fps)?;
        }
    }
    println!("inside > outside on {wins} of {} unseen positives", unseen.num_positive);
    Ok(())
}
