//! Planar projective geometry: homography type and constructors, random
//! homography sampling, crop-pair synthesis, keypoint reprojection, DLT
//! estimation, and RANSAC robust fitting.

mod dlt;
mod homography;
mod pair;
mod ransac;
mod sample;

pub use dlt::dlt_homography;
pub use homography::{corner_error, Homography};
pub use pair::{make_pair, reproject_keypoints, Correspondence, CorrespondenceSet, CropPair};
pub use ransac::{ransac_homography, RansacConfig};
pub use sample::{sample_homography, HomographyConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point ({x}, {y}) maps to infinity under this homography")]
    PointAtInfinity { x: f64, y: f64 },
    #[error("matrix is not invertible (|det| = {0:.3e})")]
    NonInvertible(f64),
    #[error("homography cannot be normalized: bottom-right entry is {0:.3e}")]
    NotNormalizable(f64),
    #[error("degenerate correspondence configuration: {0}")]
    Degenerate(&'static str),
    #[error("need at least 4 correspondences, got {0}")]
    TooFewCorrespondences(usize),
    #[error("no consensus set of at least 4 inliers found in {trials} trials")]
    RansacFailure { trials: usize },
    #[error(
        "image {width}x{height} too small for a {crop} px crop under the \
         sampled homography"
    )]
    ImageTooSmall {
        width: usize,
        height: usize,
        crop: usize,
    },
    #[error("parameter {name} = {value} is outside its legal range")]
    BadParam { name: &'static str, value: f64 },
}
