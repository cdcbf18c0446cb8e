//! The audiovisual counting network: a VGG-style visual frontend, a small
//! audio CNN over log-mel patches, six dilated fusion blocks modulated by
//! audio-driven per-channel affine maps, and a ×8 upsampled density head.

mod config;
mod gradcheck;
mod net;

pub use config::{
    format_layers, parse_layers, Layer, ModelConfig, DOWNSAMPLE, FUSION_BLOCKS, VISUAL_POOLS,
};
pub use gradcheck::{gradient_check, ParamCheck, MODEL_STEP};
pub use net::{AvcModel, FilmParams, Forward, BACKEND_DILATION, FRONTEND_KERNEL};

use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: String, msg: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ModelError>;
