//! Training configuration and exhaustive validation.

use serde::{Deserialize, Serialize};

use crate::geometry::HomographyConfig;
use crate::mining::{Aggregation, MiningStrategy};

use super::TrainError;

/// Which ranking loss drives the optimizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Ap,
    Triplet,
}

/// Everything a training run needs besides the images. A fixed config and
/// seed pin the entire run, including the model initialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Crop pairs per batch (M). Each pair comes from a distinct image.
    pub pairs_per_batch: usize,
    /// Correspondences kept per pair (p); fewer survive on sparse crops.
    pub keypoints_per_crop: usize,
    /// Negatives per ranked list (K); mined lists are truncated to this.
    pub top_k: usize,
    pub strategy: MiningStrategy,
    pub loss_kind: LossKind,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub crop_size: usize,
    pub seed: u64,
    /// Pool descriptors are rebuilt with the current model every this many
    /// epochs (coarse-to-fine only).
    pub pool_refresh_epochs: usize,
    pub num_bins: usize,
    pub triplet_margin: f64,
    pub patch_side: usize,
    pub hidden: usize,
    pub dim: usize,
    pub homography: HomographyConfig,
    pub aggregation: Aggregation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            pairs_per_batch: 8,
            keypoints_per_crop: 32,
            top_k: 30,
            strategy: MiningStrategy::InBatchTopK { k: 30 },
            loss_kind: LossKind::Ap,
            lr: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 5,
            steps_per_epoch: 50,
            crop_size: 128,
            seed: 0,
            pool_refresh_epochs: 1,
            num_bins: 25,
            triplet_margin: 0.4,
            patch_side: 16,
            hidden: 128,
            dim: 32,
            homography: HomographyConfig::default(),
            aggregation: Aggregation::SumRenorm,
        }
    }
}

impl TrainConfig {
    /// Collects every violated constraint; empty means the config is usable.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.pairs_per_batch < 2 {
            out.push(format!(
                "pairs_per_batch must be at least 2, got {}",
                self.pairs_per_batch
            ));
        }
        if self.keypoints_per_crop < 4 {
            out.push(format!(
                "keypoints_per_crop must be at least 4, got {}",
                self.keypoints_per_crop
            ));
        }
        if self.top_k < 1 {
            out.push("top_k must be at least 1".into());
        }
        if let Err(e) = self.strategy.validate() {
            out.push(format!("strategy: {e}"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            out.push(format!("lr must be positive and finite, got {}", self.lr));
        }
        for (name, beta) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&beta) {
                out.push(format!("{name} must lie in [0, 1), got {beta}"));
            }
        }
        if !(self.adam_eps > 0.0) || !self.adam_eps.is_finite() {
            out.push(format!(
                "adam_eps must be positive and finite, got {}",
                self.adam_eps
            ));
        }
        if self.steps_per_epoch < 1 {
            out.push("steps_per_epoch must be at least 1".into());
        }
        if self.crop_size < 32 {
            out.push(format!(
                "crop_size must be at least 32, got {}",
                self.crop_size
            ));
        }
        if self.pool_refresh_epochs < 1 {
            out.push("pool_refresh_epochs must be at least 1".into());
        }
        if self.num_bins < 2 {
            out.push(format!("num_bins must be at least 2, got {}", self.num_bins));
        }
        if !(self.triplet_margin > 0.0) || !self.triplet_margin.is_finite() {
            out.push(format!(
                "triplet_margin must be positive and finite, got {}",
                self.triplet_margin
            ));
        }
        if !matches!(self.patch_side, 8 | 16 | 32) {
            out.push(format!(
                "patch_side must be one of 8, 16, 32, got {}",
                self.patch_side
            ));
        }
        if self.dim < 8 {
            out.push(format!("dim must be at least 8, got {}", self.dim));
        }
        if self.hidden < self.dim {
            out.push(format!(
                "hidden ({}) must be at least dim ({})",
                self.hidden, self.dim
            ));
        }
        for p in self.homography.problems() {
            out.push(format!("homography: {p}"));
        }
        out
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(TrainError::BadConfig(problems))
        }
    }
}
