//! Audiovisual crowd counting at desk scale.

pub mod audio;
pub mod corruption;
pub mod ground_truth;
pub mod model;
pub mod scalar;
pub mod synth;
pub mod tensor;
pub mod train;

pub use scalar::{Real, SplitMix64};
pub use tensor::{Graph, Param, Tensor, TensorError, Var};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
