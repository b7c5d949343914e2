//! Block partitioning, block random selection for training, and the offset
//! collections voted over at inference.
//!
//! `cargo run --example sampling -- [num_frames] [num_blocks]`

use echomil::dataset::Label;
use echomil::sampling::{
    block_first_select, block_inference_collections, block_random_select, maximal_agreement_decision,
    middle_collection, partition_blocks,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let num_frames = args.next().map_or(37, |a| a.parse().expect("num_frames"));
    let num_blocks = args.next().map_or(8, |a| a.parse().expect("num_blocks"));

    let partition = partition_blocks(num_frames, num_blocks)?;
    println!(
        "{num_frames} frames in {num_blocks} blocks of {} ({} padded positions)",
        partition.block_size, partition.num_frames_padded
    );
    for (b, range) in partition.boundaries.iter().enumerate() {
        println!("  block {b}: positions {range:?}");
    }

    println!("random draws (one per block):");
    for epoch_seed in 0..3 {
        println!("  seed {epoch_seed}: {:?}", block_random_select(&partition, epoch_seed).frame_indices());
    }
    println!("first frame of each block: {:?}", block_first_select(&partition).frame_indices());

    let collections = block_inference_collections(&partition);
    println!("{} inference collections:", collections.len());
    for c in &collections {
        println!("  offset {:?}: {:?}", c.offset, c.frame_indices());
    }
    println!("middle collection: {:?}", middle_collection(&partition).frame_indices());

    use Label::{Negative as N, Positive as P};
    for votes in [vec![P, N, N], vec![P, N], vec![N, N, P, P, N]] {
        println!("votes {votes:?} -> {}", maximal_agreement_decision(&votes)?);
    }
    Ok(())
}
