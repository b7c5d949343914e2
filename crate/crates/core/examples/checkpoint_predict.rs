//! Train briefly, save a checkpoint, reload it, and predict one video with
//! per-collection votes.
//!
//! `cargo run --release --example checkpoint_predict`

use echomil::dataset::{generate_synthetic_dataset, load_all, SyntheticSpec};
use echomil::model::{Checkpoint, ModelConfig};
use echomil::training::{prepare_videos, train_fold, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let spec = SyntheticSpec {
        num_positive: 4,
        num_negative: 4,
        frame_size: 64,
        ..SyntheticSpec::default()
    };
    let (manifest, _) = generate_synthetic_dataset(&spec, dir.path())?;
    let samples = load_all(&manifest)?;
    let model_config = ModelConfig::toy();
    let videos = prepare_videos(&samples, &model_config)?;
    let train = TrainConfig {
        epochs: 5,
        batch_size: 2,
        ..TrainConfig::toy()
    };
    let (checkpoint, _) = train_fold(&videos, &[], &model_config, &train)?;

    let path = dir.path().join("model.ckpt");
    checkpoint.save(&path)?;
    println!("sidecar: {}", std::fs::read_to_string(Checkpoint::sidecar_path(&path))?);
    let model = Checkpoint::load(&path)?.to_model()?;

    for video in &samples {
        let p = model.predict_video(video)?;
        println!(
            "{} (truth {}): votes {:?}, scores {:.3?} -> {} ({:.3})",
            video.id, video.label, p.collection_votes, p.collection_scores, p.final_label, p.final_score
        );
    }
    Ok(())
}
