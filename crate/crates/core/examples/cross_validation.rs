//! Five-fold cross-validation of the toy model on a 60-video synthetic set,
//! printed as a mean±std summary table.
//!
//! `cargo run --release --example cross_validation -- [epochs] [learning_rate] [batch_size]`

use std::time::Instant;

use echomil::dataset::{generate_synthetic_dataset, load_all, make_fold_splits, SyntheticSpec};
use echomil::model::ModelConfig;
use echomil::training::{prepare_videos, run_cross_validation, Optimizer, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map_or(40, |a| a.parse().expect("epochs"));
    let learning_rate = args.next().map_or(0.02, |a| a.parse().expect("learning rate"));
    let batch_size = args.next().map_or(4, |a| a.parse().expect("batch size"));

    let dir = tempfile::tempdir()?;
    let spec = SyntheticSpec {
        frame_size: 64,
        ..SyntheticSpec::default()
    };
    let (manifest, _) = generate_synthetic_dataset(&spec, dir.path())?;
    let split = make_fold_splits(&manifest, 5, 0)?;
    let model_config = ModelConfig::toy();
    let videos = prepare_videos(&load_all(&manifest)?, &model_config)?;
    let train_config = TrainConfig {
        learning_rate,
        optimizer: Optimizer::SgdMomentum,
        batch_size,
        epochs,
        clip_grad_norm: Some(1.0),
        ..TrainConfig::default()
    };

    let start = Instant::now();
    let report = run_cross_validation(&videos, &split, &model_config, &train_config)?;
    for f in &report.folds {
        println!(
            "fold {}: epoch {:>3} accuracy {:?} auc {:?}",
            f.fold, f.selected_epoch, f.report.accuracy, f.report.auc
        );
    }
    println!("{}", report.render("Toy ResNet+3D+AAM"));
    println!("finished in {:.1?}", start.elapsed());
    Ok(())
}
