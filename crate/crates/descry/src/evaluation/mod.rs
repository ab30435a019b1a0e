//! Matching and retrieval measurement protocols.

mod matching;
mod pairs;
mod report;
mod retrieval;

pub use matching::{
    compute_matching_metrics, compute_mma, match_mutual_nn, EvalPair, MatchSet, MatchingReport,
};
pub use pairs::{build_eval_pairs, DescriptorSource, EvalPairConfig};
pub use report::{emit_report, RenderText, ReportFormat, RetrievalSummary};
pub use retrieval::{
    compute_map, compute_mp_at_k, evaluate_retrieval, rank_by_global, recall_at_n,
    rerank_by_inliers, RetrievalConfig, RetrievalReport,
};

use thiserror::Error;

use crate::descriptor::DescriptorError;
use crate::geometry::GeometryError;
use crate::imaging::ImagingError;
use crate::mining::MiningError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("descriptor dimensions differ: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("the {0} descriptor set is empty")]
    EmptySide(&'static str),
    #[error("no matches: accuracy is undefined for this pair")]
    EmptyMatches,
    #[error("match references row {index} of a {count}-keypoint set")]
    MatchIndexOutOfRange { index: usize, count: usize },
    #[error("bad thresholds: {0}")]
    BadThresholds(String),
    #[error("no evaluation pairs given")]
    NoPairs,
    #[error("invalid evaluation config: {}", .0.join("; "))]
    BadConfig(Vec<String>),
    #[error("image {image_id} gave no usable evaluation pair in {attempts} attempts ({last})")]
    StarvedPair {
        image_id: u32,
        attempts: usize,
        last: String,
    },
    #[error("ground-truth homography is not invertible")]
    BadHomography,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Mining(#[from] MiningError),
}
