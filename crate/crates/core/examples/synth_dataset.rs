//! Generate a synthetic echo-like dataset: AVI files, `manifest.csv`, and an
//! `events.json` sidecar recording where each positive's transient patch is.
//!
//! `cargo run --release --example synth_dataset -- [out_dir]`

use std::path::PathBuf;

use echomil::dataset::{frame_has_event, generate_synthetic_dataset, load_all, make_fold_splits, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map_or_else(|| PathBuf::from("synthetic"), PathBuf::from);
    let spec = SyntheticSpec {
        num_positive: 6,
        num_negative: 6,
        frame_size: 64,
        ..SyntheticSpec::default()
    };
    let (manifest, events) = generate_synthetic_dataset(&spec, &out)?;
    println!("wrote {} videos to {}", manifest.len(), out.display());

    for (video, event) in load_all(&manifest)?.iter().zip(&events) {
        let marked: Vec<usize> = (0..video.num_frames())
            .filter(|&t| frame_has_event(video.frames().index_axis(ndarray::Axis(0), t)))
            .collect();
        match event.patch {
            Some(patch) => println!(
                "{} {}: event frames {}..{}, patch {patch:?}, {} frames carry color",
                video.id,
                video.label,
                event.event_start,
                event.event_start + event.event_len,
                marked.len()
            ),
            None => println!("{} {}: no event, {} frames carry color", video.id, video.label, marked.len()),
        }
    }

    let split = make_fold_splits(&manifest, 3, 0)?;
    split.validate(&manifest)?;
    for fold in 0..split.k {
        println!("fold {fold}: {:?}", split.fold_ids(fold));
    }
    Ok(())
}
