pub mod dataset;
pub mod error;
pub mod geometry;
pub mod image_io;
pub mod layers;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use layers::{default_model, ModelConfig, ParameterSet};
pub use tensor::Tensor;
