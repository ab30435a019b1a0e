//! Adam training over mined ranking losses.

mod adam;
mod batch;
mod config;
mod driver;

pub use adam::{adam_update, AdamState};
pub use batch::{build_batch, CropSlot, TrainBatch, DETECT_MAX, NMS_RADIUS};
pub use config::{LossKind, TrainConfig};
pub use driver::{refresh_pool, train, EpochRecord, TrainReport, POOL_ID_BASE};

use thiserror::Error;

use crate::descriptor::DescriptorError;
use crate::geometry::GeometryError;
use crate::imaging::ImagingError;
use crate::loss::LossError;
use crate::mining::MiningError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {}", .0.join("; "))]
    BadConfig(Vec<String>),
    #[error("corpus holds {got} images but a batch needs {want}")]
    CorpusTooSmall { got: usize, want: usize },
    #[error("image {image_id} gave no usable crop pair in {attempts} attempts ({last})")]
    PairStarved {
        image_id: u32,
        attempts: usize,
        last: String,
    },
    #[error("the mining strategy needs a negative pool but none was given")]
    PoolRequired,
    #[error("a negative pool was given but the mining strategy never reads one")]
    PoolUnused,
    #[error("no pool image yields keypoints")]
    EmptyPool,
    #[error("pool image id {0} collides with the reserved pool id namespace")]
    PoolIdTooLarge(u32),
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(&'static str),
    #[error("loss became non-finite: {0}")]
    NonFiniteLoss(f64),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Mining(#[from] MiningError),
    #[error(transparent)]
    Loss(#[from] LossError),
}
