//! Image types, synthetic image generation, photometric augmentation,
//! Harris keypoints, patch extraction, and binary PNM input/output.

mod augment;
mod clahe;
mod corpus;
mod harris;
mod image;
mod patch;
mod pnm;
mod synth;

pub use augment::{augment_color, augment_gray, sample_augment_params, AugmentParams};
pub use clahe::clahe;
pub use corpus::{load_corpus_gray, write_corpus, CorpusImageRecord, CorpusManifest};
pub use harris::{detect_harris, BORDER_MARGIN};
pub use image::{hsv_to_rgb, rgb_to_hsv, ImageGray, ImageRgb, Keypoint};
pub use patch::{extract_patch, PatchTensor};
pub use pnm::{load_pnm, save_pgm, save_ppm, PnmImage};
pub use synth::{generate_synthetic_image, CorpusSpec};

use thiserror::Error;

/// Errors from image construction, augmentation, and PNM input/output.
#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("image dimensions {width}x{height} are below the 64 px minimum")]
    DimensionsTooSmall { width: usize, height: usize },
    #[error("image dimensions must be nonzero")]
    EmptyImage,
    #[error("element count must be at least 1")]
    NoElements,
    #[error("pixel buffer holds {got} values but {width}x{height} needs {want}")]
    PixelLengthMismatch {
        got: usize,
        want: usize,
        width: usize,
        height: usize,
    },
    #[error("pixel value {0} lies outside [0, 1]")]
    PixelOutOfRange(f64),
    #[error("augmentation parameter {name} = {value} is outside its legal range")]
    BadAugmentParam { name: &'static str, value: f64 },
    #[error("contrast-limit factor must be positive, got {0}")]
    BadClipLimit(f64),
    #[error("tile grid must have at least one cell per side")]
    ZeroTiles,
    #[error(
        "tile grid {tiles}x{tiles} is too fine for a {width}x{height} image: \
         cells would be under 8 px on a side"
    )]
    TileGridTooFine {
        tiles: usize,
        width: usize,
        height: usize,
    },
    #[error("not a binary PNM image: magic {0:?} (want \"P5\" or \"P6\")")]
    PnmBadMagic(String),
    #[error("malformed PNM header: {0}")]
    PnmBadHeader(String),
    #[error("unsupported PNM maxval {0}: only 255 is handled")]
    PnmBadMaxval(u64),
    #[error("PNM payload truncated: header promises {expected} bytes, file holds {found}")]
    PnmTruncated { expected: usize, found: usize },
    #[error("corpus directory {0} already holds files; pass force to overwrite")]
    CorpusDirNotEmpty(String),
    #[error("corpus manifest: {0}")]
    BadManifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
