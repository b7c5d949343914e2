//! Weakly-supervised video classification as multiple instance learning.
//!
//! A video is a bag of frames with one binary label. Training draws one random
//! frame per equal-size block of the video; inference scores every
//! block-offset collection and takes the majority vote. The classifier fuses an
//! attention-pooled per-frame 2D residual representation with a 3D residual
//! branch grafted onto the backbone's second stage.

pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod explain;
pub mod model;
pub mod nn;
pub mod sampling;
pub mod training;

pub use error::{Error, Result};
