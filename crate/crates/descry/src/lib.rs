//! Self-supervised local patch descriptors at desk scale.
//!
//! The crate covers the full loop: synthetic image corpora, homography
//! crop pairs with photometric augmentation, Harris keypoints, a small
//! patch embedding model with hand-written gradients, hard-negative
//! mining at three scopes, a differentiable average-precision loss, an
//! Adam training driver, and matching / retrieval evaluation protocols.
//! Every source of randomness is an explicit `u64` seed, so equal inputs
//! give bit-equal outputs regardless of thread count.

pub mod descriptor;
pub mod evaluation;
pub mod geometry;
pub mod imaging;
pub mod loss;
pub mod mining;
pub mod seeds;
pub mod training;
