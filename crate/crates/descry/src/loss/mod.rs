//! Ranking losses over similarity lists: a soft-binned average-precision
//! loss with exact analytic gradients, its exact-AP oracle, a similarity-form
//! triplet hinge, and the chain rule from similarities back to descriptors.

mod ap;
mod route;
mod triplet;

pub use ap::{ap_loss_batch, exact_ap, soft_binned_ap, ApConfig, ApOutput};
pub use route::backprop_similarities;
pub use triplet::{triplet_loss, triplet_loss_batch, TripletConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("need at least 2 histogram bins, got {0}")]
    BadBinCount(usize),
    #[error("triplet margin must be a positive finite number, got {0}")]
    BadMargin(f64),
    #[error("a ranked list needs at least one negative")]
    EmptyNegatives,
    #[error("the batch holds no ranked lists")]
    EmptyBatch,
    #[error("{0} is not finite")]
    NonFinite(&'static str),
    #[error("gradient shape mismatch: got {got}, want {want}")]
    GradShapeMismatch { got: usize, want: usize },
    #[error("descriptor index {index} is out of range for {rows} rows")]
    IndexOutOfRange { index: usize, rows: usize },
}

/// One anchor's similarity list: its positive score and the mined negative
/// scores, each tagged with the frame index of the descriptor behind it.
/// Negatives are sorted hardest first at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedList {
    anchor_index: usize,
    positive_index: usize,
    s_pos: f64,
    negatives: Vec<(usize, f64)>,
}

impl RankedList {
    pub fn new(
        anchor_index: usize,
        positive_index: usize,
        s_pos: f64,
        mut negatives: Vec<(usize, f64)>,
    ) -> Result<Self, LossError> {
        if negatives.is_empty() {
            return Err(LossError::EmptyNegatives);
        }
        if !s_pos.is_finite() {
            return Err(LossError::NonFinite("positive similarity"));
        }
        if negatives.iter().any(|n| !n.1.is_finite()) {
            return Err(LossError::NonFinite("negative similarity"));
        }
        negatives.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("similarities are finite")
                .then(a.0.cmp(&b.0))
        });
        Ok(Self {
            anchor_index,
            positive_index,
            s_pos,
            negatives,
        })
    }

    pub fn anchor_index(&self) -> usize {
        self.anchor_index
    }

    pub fn positive_index(&self) -> usize {
        self.positive_index
    }

    pub fn s_pos(&self) -> f64 {
        self.s_pos
    }

    /// (frame index, similarity), similarity non-increasing.
    pub fn negatives(&self) -> &[(usize, f64)] {
        &self.negatives
    }
}

/// Per-list share of a batch loss and its gradient on the list's entries.
///
/// `d_s_pos` and `d_s_negs` are derivatives of the whole batch loss, so
/// routing them through `backprop_similarities` needs no further scaling.
#[derive(Clone, Debug)]
pub struct LossOutput {
    pub value: f64,
    pub d_s_pos: f64,
    pub d_s_negs: Vec<f64>,
}
