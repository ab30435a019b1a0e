//! The patch embedding model: a two-layer tanh MLP whose output is
//! L2-normalized onto the unit sphere, with hand-written forward and
//! backward passes and a JSON checkpoint format.

mod checkpoint;
mod model;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use model::{
    backward, forward, forward_rows, init_params, DescriptorSet, ForwardCache, GradBuffer,
    ModelParams,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("patch side must be 8, 16, or 32, got {0}")]
    BadPatchSide(usize),
    #[error("hidden width {hidden} must be at least the descriptor dim {dim}")]
    HiddenTooSmall { hidden: usize, dim: usize },
    #[error("descriptor dim must be at least 8, got {0}")]
    DimTooSmall(usize),
    #[error("patch {index} has side {got}, the model expects {want}")]
    PatchSideMismatch {
        index: usize,
        got: usize,
        want: usize,
    },
    #[error("{got} keypoints for {want} patches")]
    ProvenanceMismatch { got: usize, want: usize },
    #[error(
        "embedding norm {norm:.3e} for patch {index} is below 1e-12; \
         the model output has collapsed"
    )]
    DegenerateEmbedding { index: usize, norm: f64 },
    #[error("gradient buffer holds {got} values, the descriptor matrix has {want}")]
    GradShapeMismatch { got: usize, want: usize },
    #[error("cache does not belong to these parameters: {0}")]
    CacheMismatch(&'static str),
    #[error("checkpoint {field}: {problem}")]
    BadCheckpoint { field: &'static str, problem: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
