//! Minimal f64 tensor core: 1-d convolution, affine maps, ReLU, pooling,
//! softmax cross-entropy and SGD, each with an explicit backward pass.

mod checkpoint;
pub mod gradcheck;
mod layers;
mod sgd;
mod tensor;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CheckpointHeader,
    TensorSpec, MAGIC,
};
pub use layers::{
    avg_pool, avg_pool_backward, relu, relu_backward, softmax, softmax_xent, stats_pool,
    stats_pool_backward, Affine, AffineGrad, Conv1d, Conv1dGrad, STD_FLOOR_VARIANCE,
};
pub use sgd::Sgd;
pub use tensor::Tensor;
