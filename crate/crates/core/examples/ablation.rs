//! The two ablation grids on a small synthetic set: 3D fusion × attention
//! pooling, and majority vote × block random selection.
//!
//! `cargo run --release --example ablation -- [epochs]`

use echomil::dataset::{generate_synthetic_dataset, load_all, make_fold_splits, SyntheticSpec};
use echomil::evaluation::run_ablation_grid;
use echomil::model::ModelConfig;
use echomil::training::{prepare_videos, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let epochs = std::env::args().nth(1).map_or(10, |a| a.parse().expect("epochs"));

    let dir = tempfile::tempdir()?;
    let spec = SyntheticSpec {
        num_positive: 9,
        num_negative: 9,
        frame_size: 64,
        ..SyntheticSpec::default()
    };
    let (manifest, _) = generate_synthetic_dataset(&spec, dir.path())?;
    let model = ModelConfig::toy();
    let videos = prepare_videos(&load_all(&manifest)?, &model)?;
    let split = make_fold_splits(&manifest, 3, 0)?;
    let train = TrainConfig {
        epochs,
        batch_size: 2,
        ..TrainConfig::toy()
    };

    let report = run_ablation_grid(&videos, &split, &model, &train)?;
    print!("{}", report.render(model.backbone));
    Ok(())
}
