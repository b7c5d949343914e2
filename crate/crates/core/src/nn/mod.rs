//! Small CPU neural-network toolkit with explicit backward passes.
//!
//! Activations are `C x T x H x W` volumes. A 2D convolution applied frame by
//! frame is a 3D convolution with a temporal kernel of 1, so the spatial
//! backbone and the temporal branch share one convolution implementation.

mod conv;
mod layers;
mod params;

pub use conv::Conv3d;
pub use layers::{
    avg_pool_frames, avg_pool_frames_backward, avg_pool_volume, avg_pool_volume_backward, relu, relu_backward,
    ChannelAffine, Linear, MaxPool2d,
};
pub use params::{Gradients, ParamId, ParamStore};
