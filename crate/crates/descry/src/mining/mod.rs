//! Hard-negative selection at three scopes: within a correspondence pair,
//! across the batch, and coarse-to-fine through global-descriptor retrieval.

mod format;
mod global;
mod select;
mod types;

pub use format::{
    read_descriptor_file, read_global_file, write_descriptor_file, write_global_file,
};
pub use global::{
    aggregate_global_descriptor, mine_coarse_to_fine, retrieve_negative_images, MiningOutcome,
};
pub use select::{mine, mine_in_batch, mine_in_pair, similarity, similarity_matrix};
pub use types::{
    Aggregation, AnchorNegatives, BatchIndex, CropRole, DescriptorRecord, GlobalDescriptor,
    MinedNegatives, MiningStrategy, NegativePool, PoolEntry,
};

use thiserror::Error;

/// Failure modes of negative mining and global aggregation.
#[derive(Debug, Error)]
pub enum MiningError {
    #[error("descriptor dimensions differ: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("batch index lists {records} descriptors but the sets hold {rows} rows")]
    RowCountMismatch { records: usize, rows: usize },
    #[error("frame row {index} disagrees with its record on source image id")]
    RecordSetMismatch { index: usize },
    #[error("in-pair mining needs at least 2 correspondences, got {0}")]
    TooFewCorrespondences(usize),
    #[error("pairing is not a bijection: {0}")]
    BadPairing(String),
    #[error("batch draws on a single source image, so every candidate is excluded")]
    SingleImageBatch,
    #[error("strategy {0} is out of scope for this mining entry point")]
    WrongScope(&'static str),
    #[error("k must be at least 1")]
    BadK,
    #[error("coarse-to-fine mining needs a negative pool")]
    MissingPool,
    #[error("negative pool is empty")]
    EmptyPool,
    #[error("pool holds no image other than query {0}")]
    PoolOnlyQuery(u32),
    #[error("pool image id {0} appears more than once")]
    DuplicatePoolId(u32),
    #[error("pool entry {0} is inconsistent: {1}")]
    BadPoolEntry(u32, String),
    #[error("descriptor rows cancel: aggregate norm {0:.3e} is below 1e-12")]
    DegenerateAggregate(f64),
    #[error("global descriptor norm {0} is not within 1e-6 of 1")]
    NotUnitNorm(f64),
    #[error("cannot aggregate an empty descriptor set")]
    EmptySet,
    #[error("descriptor file is invalid: {0}")]
    BadDescriptorFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
