pub mod dino;
pub mod error;
pub mod features;
pub mod hedonic;
pub mod image_io;
pub mod rng;
pub mod synthetic;
pub mod tabular;
pub mod tensor;
pub mod vit;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::Tensor;
