//! Vision Transformer backbone: configuration presets, named weights and
//! the forward pass that turns an image into one feature vector.

mod config;
mod model;
pub(crate) mod train;
mod weights;

pub use config::{preset, ViTConfig, PRESETS};
pub use model::{
    attention_block, embed, encode, forward, gelu, mlp_block, patchify, AttentionObserver, Backbone,
    BlockParams, FeatureVector,
};
pub use train::{backward, forward_train, ForwardCache};
pub use weights::{backbone_id, checksum, init_backbone, WeightStore, MAGIC};

pub(crate) use model::{gelu_derivative, gelu_tensor, linear};
pub(crate) use train::linear_backward;
pub(crate) use weights::init_tensor;
