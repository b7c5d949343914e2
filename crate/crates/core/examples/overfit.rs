//! Memorize eight synthetic videos with the toy model.
//!
//! `cargo run --release --example overfit -- [epochs] [learning_rate] [batch_size]`

use std::time::Instant;

use echomil::dataset::{load_all, SyntheticSpec, generate_synthetic_dataset};
use echomil::evaluation::evaluate_model;
use echomil::model::ModelConfig;
use echomil::training::{prepare_videos, train_fold, Optimizer, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map_or(60, |a| a.parse().expect("epochs"));
    let learning_rate = args.next().map_or(0.02, |a| a.parse().expect("learning rate"));
    let batch_size = args.next().map_or(2, |a| a.parse().expect("batch size"));

    let dir = tempfile::tempdir()?;
    let spec = SyntheticSpec {
        num_positive: 4,
        num_negative: 4,
        frame_size: 64,
        seed: 1,
        ..SyntheticSpec::default()
    };
    let (manifest, _) = generate_synthetic_dataset(&spec, dir.path())?;
    let model_config = ModelConfig::toy();
    let videos = prepare_videos(&load_all(&manifest)?, &model_config)?;

    let train_config = TrainConfig {
        learning_rate,
        optimizer: Optimizer::SgdMomentum,
        batch_size,
        epochs,
        seed: 1,
        clip_grad_norm: Some(1.0),
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let (checkpoint, records) = train_fold(&videos, &[], &model_config, &train_config)?;
    let first = records.first().unwrap();
    let last = records.last().unwrap();
    println!(
        "epoch 1 loss {:.4} -> epoch {} loss {:.4} ({:.1}% drop) in {:.1?}",
        first.train_loss,
        last.epoch,
        last.train_loss,
        100.0 * (1.0 - last.train_loss / first.train_loss),
        start.elapsed()
    );
    if let Some(r) = records.iter().find(|r| r.train_accuracy == 1.0) {
        println!("first epoch with every training collection correct: {}", r.epoch);
    }
    let eval = evaluate_model(&checkpoint.to_model()?, &videos)?;
    println!("majority-vote accuracy on the memorized videos: {:?}", eval.report.accuracy);
    Ok(())
}
