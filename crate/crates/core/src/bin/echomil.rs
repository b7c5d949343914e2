use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use echomil::config::RunConfig;
use echomil::dataset::avi::read_avi;
use echomil::dataset::{
    generate_synthetic_dataset, load_all, make_fold_splits, DatasetManifest, FoldSplit, Label, SyntheticSpec,
    VideoSample, ViewTag,
};
use echomil::evaluation::{evaluate_model, render_cv_table, render_test_table, run_ablation_grid, write_scores_csv};
use echomil::explain::generate_heatmap;
use echomil::model::{Checkpoint, VideoClassifier};
use echomil::training::{prepare_videos, run_cross_validation_with, train_fold, write_epoch_log};
use echomil::{Error, Result};

#[derive(Parser)]
#[command(name = "echomil", version, about = "Weakly-supervised video classification toolkit")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `paths.out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for decoding, inference and per-fold training.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset, its manifest and event sidecar.
    Synth {
        /// TOML synthetic dataset spec; defaults apply when omitted.
        spec: Option<PathBuf>,
    },
    /// Write a stratified k-fold assignment to `folds.json`.
    Split {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Cross-validate and write `cv_report.json` and `report.txt`.
    Cv {
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Train on every fold but `cv.val_fold`, validating on that fold.
    Train {
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Score a checkpoint on a manifest.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Print the prediction for one video as JSON.
    Predict {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        video: PathBuf,
    },
    /// Run the component and voting/sampling ablation grids.
    Ablate {
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Write heat-map overlays for one video.
    Heatmap {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        video: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("echomil: error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

fn required(value: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    value
        .or_else(|| fallback.clone())
        .ok_or_else(|| Error::Config(format!("no {what} given (flag or paths.{what} in the config)")))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config = config.with_seed(seed);
    }
    if let Some(out) = cli.out {
        config.paths.out = Some(out);
    }
    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let out = config.paths.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    // `predict` only prints; every other command writes into `out`.
    if !matches!(cli.command, Command::Predict { .. }) {
        fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    }

    match cli.command {
        Command::Synth { spec } => {
            let mut spec = match spec {
                Some(path) => {
                    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                    toml::from_str::<SyntheticSpec>(&text)
                        .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.to_string().replace('\n', " "))))?
                }
                None => SyntheticSpec::default(),
            };
            if cli.seed.is_some() {
                spec.seed = config.seed;
            }
            let (manifest, _) = generate_synthetic_dataset(&spec, &out)?;
            write(&out.join("synth.resolved"), toml::to_string_pretty(&spec).map_err(|e| Error::Config(e.to_string()))?)?;
            println!("wrote {} videos and manifest.csv to {}", manifest.len(), out.display());
        }
        Command::Split { manifest, k } => {
            if let Some(k) = k {
                config.cv.k = k;
            }
            config.validate()?;
            let manifest = DatasetManifest::read_csv(&required(manifest, &config.paths.manifest, "manifest")?)?;
            let split = make_fold_splits(&manifest, config.cv.k, config.seed)?;
            split.validate(&manifest)?;
            split.write_json(&out.join("folds.json"))?;
            config.echo(&out)?;
            println!("wrote {}", out.join("folds.json").display());
        }
        Command::Cv { manifest } => {
            config.validate()?;
            let manifest = DatasetManifest::read_csv(&required(manifest, &config.paths.manifest, "manifest")?)?;
            let splits = fold_splits(&config, &manifest)?;
            splits[0].write_json(&out.join("folds.json"))?;
            config.echo(&out)?;
            let videos = prepare_videos(&load_all(&manifest)?, &config.model)?;
            let report = run_cross_validation_with(&videos, &splits, &config.model, &config.train, config.cv.selection)?;
            report.write_json(&out.join("cv_report.json"))?;
            let samples: Vec<_> = report.folds.iter().flat_map(|f| f.samples.clone()).collect();
            write_scores_csv(&out.join("scores.csv"), &samples)?;
            let table = render_cv_table(&[("Ours".to_string(), report.aggregate.clone())]);
            write(&out.join("report.txt"), &table)?;
            print!("{table}");
        }
        Command::Train { manifest } => {
            config.validate()?;
            let manifest = DatasetManifest::read_csv(&required(manifest, &config.paths.manifest, "manifest")?)?;
            let split = fold_splits(&config, &manifest)?.remove(0);
            split.write_json(&out.join("folds.json"))?;
            config.echo(&out)?;
            let (train_ids, val_ids) = split.train_test(config.cv.val_fold);
            let load = |ids: &[&str]| -> Result<_> {
                let ids: HashSet<&str> = ids.iter().copied().collect();
                prepare_videos(&load_all(&manifest.subset(&ids)?)?, &config.model)
            };
            let (train, val) = (load(&train_ids)?, load(&val_ids)?);
            let (checkpoint, records) = train_fold(&train, &val, &config.model, &config.train)?;
            let path = config.paths.checkpoint.clone().unwrap_or_else(|| out.join("model.ckpt"));
            checkpoint.save(&path)?;
            write_epoch_log(&out.join("train_log.jsonl"), &records)?;
            println!("saved epoch {} checkpoint to {}", checkpoint.epoch, path.display());
        }
        Command::Eval { checkpoint, manifest } => {
            let model = load_model(&required(checkpoint, &config.paths.checkpoint, "checkpoint")?)?;
            let manifest = DatasetManifest::read_csv(&required(manifest, &config.paths.manifest, "manifest")?)?;
            config.model = model.config().clone();
            config.echo(&out)?;
            let videos = prepare_videos(&load_all(&manifest)?, model.config())?;
            let evaluation = evaluate_model(&model, &videos)?;
            write(&out.join("eval_report.json"), serde_json::to_string_pretty(&evaluation)?)?;
            write_scores_csv(&out.join("scores.csv"), &evaluation.samples)?;
            let table = render_test_table(&[("Ours".to_string(), evaluation.report)]);
            write(&out.join("report.txt"), &table)?;
            print!("{table}");
        }
        Command::Predict { checkpoint, video } => {
            let model = load_model(&required(checkpoint, &config.paths.checkpoint, "checkpoint")?)?;
            let prediction = model.predict_video(&unlabeled_video(&video)?)?;
            println!("{}", serde_json::to_string_pretty(&prediction)?);
        }
        Command::Ablate { manifest } => {
            config.validate()?;
            let manifest = DatasetManifest::read_csv(&required(manifest, &config.paths.manifest, "manifest")?)?;
            let split = fold_splits(&config, &manifest)?.remove(0);
            split.write_json(&out.join("folds.json"))?;
            config.echo(&out)?;
            let videos = prepare_videos(&load_all(&manifest)?, &config.model)?;
            let report = run_ablation_grid(&videos, &split, &config.model, &config.train)?;
            write(&out.join("ablation.json"), serde_json::to_string_pretty(&report)?)?;
            let table = report.render(config.model.backbone);
            write(&out.join("report.txt"), &table)?;
            print!("{table}");
        }
        Command::Heatmap { checkpoint, video } => {
            let model = load_model(&required(checkpoint, &config.paths.checkpoint, "checkpoint")?)?;
            let result = generate_heatmap(&model, &unlabeled_video(&video)?)?;
            let written = result.write(&out, 25)?;
            println!(
                "p(positive) = {:.4}; wrote {} files to {}",
                result.probability,
                written.len(),
                out.display()
            );
        }
    }
    Ok(())
}

/// The configured fold file, or one split per repetition drawn from the seed.
fn fold_splits(config: &RunConfig, manifest: &DatasetManifest) -> Result<Vec<FoldSplit>> {
    if let Some(path) = &config.paths.folds {
        let split = FoldSplit::read_json(path)?;
        split.validate(manifest)?;
        return Ok(vec![split]);
    }
    (0..config.cv.repetitions as u64)
        .map(|r| {
            let split = make_fold_splits(manifest, config.cv.k, config.seed.wrapping_add(r))?;
            split.validate(manifest)?;
            Ok(split)
        })
        .collect()
}

fn load_model(path: &Path) -> Result<VideoClassifier> {
    Checkpoint::load(path)?.to_model()
}

/// A video outside any manifest. Its label is a placeholder that prediction
/// never reads.
fn unlabeled_video(path: &Path) -> Result<VideoSample> {
    let id = path
        .file_stem()
        .map_or_else(|| "video".to_string(), |s| s.to_string_lossy().into_owned());
    VideoSample::new(id, read_avi(path)?, Label::Negative, ViewTag::Synthetic, path)
}
