//! Mini-batch assembly: image sampling, crop pairs, augmentation,
//! detection, reprojection, and patch extraction in one deterministic pass.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::descriptor::DescriptorSet;
use crate::geometry::make_pair;
use crate::imaging::{
    augment_gray, detect_harris, extract_patch, sample_augment_params, ImageGray, Keypoint,
    PatchTensor, BORDER_MARGIN,
};
use crate::mining::{BatchIndex, CropRole, DescriptorRecord};
use crate::seeds::derive_seed;

use super::{TrainConfig, TrainError};

/// Detection budget per crop before reprojection filtering.
pub const DETECT_MAX: usize = 128;
/// Non-maximum suppression radius for crop keypoints, in px.
pub const NMS_RADIUS: usize = 4;

const PAIR_ATTEMPTS: usize = 9;

/// One crop's slice of the batch frame.
#[derive(Clone, Debug)]
pub struct CropSlot {
    pub image_id: u32,
    /// First row of this crop in the frame.
    pub start: usize,
    /// Keypoints in this crop's pixel coordinates, one per row.
    pub keypoints: Vec<Keypoint>,
}

/// Patches for a whole batch plus the index that ties frame rows to pairs.
/// Frame layout: pair 0 anchors, pair 0 positives, pair 1 anchors, ...
#[derive(Clone, Debug)]
pub struct TrainBatch {
    patches: Vec<PatchTensor>,
    index: BatchIndex,
    crops: Vec<CropSlot>,
}

impl TrainBatch {
    pub fn patches(&self) -> &[PatchTensor] {
        &self.patches
    }

    pub fn index(&self) -> &BatchIndex {
        &self.index
    }

    pub fn crops(&self) -> &[CropSlot] {
        &self.crops
    }

    /// Splits a forward pass over `patches()` back into per-crop sets, in
    /// frame order, so mining sees one set per crop.
    pub fn descriptor_sets(&self, rows: &[f64], dim: usize) -> Vec<DescriptorSet> {
        assert_eq!(rows.len(), self.patches.len() * dim, "row shape drift");
        self.crops
            .iter()
            .map(|c| {
                let lo = c.start * dim;
                let hi = lo + c.keypoints.len() * dim;
                DescriptorSet::new(dim, rows[lo..hi].to_vec(), c.keypoints.clone(), c.image_id)
            })
            .collect()
    }
}

struct PairData {
    image_id: u32,
    anchor_patches: Vec<PatchTensor>,
    positive_patches: Vec<PatchTensor>,
    anchor_kps: Vec<Keypoint>,
    positive_kps: Vec<Keypoint>,
}

/// Samples `pairs_per_batch` distinct images and builds one augmented crop
/// pair per image. All randomness flows from `step_seed`.
pub fn build_batch(
    corpus: &[(u32, ImageGray)],
    cfg: &TrainConfig,
    step_seed: u64,
) -> Result<TrainBatch, TrainError> {
    assemble(corpus, cfg, step_seed, true)
}

#[cfg(test)]
pub(crate) fn build_batch_unaugmented(
    corpus: &[(u32, ImageGray)],
    cfg: &TrainConfig,
    step_seed: u64,
) -> Result<TrainBatch, TrainError> {
    assemble(corpus, cfg, step_seed, false)
}

fn assemble(
    corpus: &[(u32, ImageGray)],
    cfg: &TrainConfig,
    step_seed: u64,
    augment: bool,
) -> Result<TrainBatch, TrainError> {
    let m = cfg.pairs_per_batch;
    if corpus.len() < m {
        return Err(TrainError::CorpusTooSmall {
            got: corpus.len(),
            want: m,
        });
    }

    // Partial Fisher-Yates: the first m slots end up holding a uniform
    // draw without replacement.
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(step_seed, 1));
    for i in 0..m {
        let j = rng.random_range(i..order.len());
        order.swap(i, j);
    }

    let pairs: Vec<PairData> = (0..m)
        .into_par_iter()
        .map(|q| {
            let (image_id, img) = &corpus[order[q]];
            build_one_pair(img, *image_id, cfg, derive_seed(step_seed, 2 + q as u64), augment)
        })
        .collect::<Result<_, _>>()?;

    let mut patches = Vec::new();
    let mut records = Vec::new();
    let mut pairing = Vec::new();
    let mut crops = Vec::new();
    for (q, pair) in pairs.into_iter().enumerate() {
        let n = pair.anchor_kps.len();
        let base = records.len();
        for i in 0..n {
            pairing.push((base + i, base + n + i));
        }
        for role in [CropRole::Anchor, CropRole::Positive] {
            for _ in 0..n {
                records.push(DescriptorRecord {
                    source_image_id: pair.image_id,
                    pair_id: q,
                    role,
                });
            }
        }
        crops.push(CropSlot {
            image_id: pair.image_id,
            start: base,
            keypoints: pair.anchor_kps,
        });
        crops.push(CropSlot {
            image_id: pair.image_id,
            start: base + n,
            keypoints: pair.positive_kps,
        });
        patches.extend(pair.anchor_patches);
        patches.extend(pair.positive_patches);
    }

    Ok(TrainBatch {
        patches,
        index: BatchIndex::new(records, pairing)?,
        crops,
    })
}

/// Builds one pair, redrawing the homography and augmentation on failure.
/// A pair fails an attempt when the crop does not fit the image for the
/// drawn warp, or when fewer than 4 detected keypoints survive
/// reprojection into the positive crop.
fn build_one_pair(
    img: &ImageGray,
    image_id: u32,
    cfg: &TrainConfig,
    pair_seed: u64,
    augment: bool,
) -> Result<PairData, TrainError> {
    let mut last = String::from("no attempt ran");
    for r in 0..PAIR_ATTEMPTS {
        let attempt = derive_seed(pair_seed, r as u64);
        let pair = match make_pair(
            img,
            image_id,
            &cfg.homography,
            cfg.crop_size,
            derive_seed(attempt, 1),
        ) {
            Ok(p) => p,
            Err(e) => {
                last = e.to_string();
                continue;
            }
        };
        let (anchor, positive) = if augment {
            (
                augment_gray(&pair.anchor, &draw_params(attempt, 2, 3))?,
                augment_gray(&pair.positive, &draw_params(attempt, 4, 5))?,
            )
        } else {
            (pair.anchor, pair.positive)
        };

        let kps = detect_harris(&anchor, DETECT_MAX, NMS_RADIUS);
        let corrs = reprojected(&kps, &pair.h_ap, cfg.crop_size);
        if corrs.len() < 4 {
            last = format!("{} correspondences survived reprojection", corrs.len());
            continue;
        }

        let take = corrs.len().min(cfg.keypoints_per_crop);
        let mut out = PairData {
            image_id,
            anchor_patches: Vec::with_capacity(take),
            positive_patches: Vec::with_capacity(take),
            anchor_kps: Vec::with_capacity(take),
            positive_kps: Vec::with_capacity(take),
        };
        for c in &corrs[..take] {
            let a = Keypoint { x: c.a.0, y: c.a.1, score: 0.0 };
            let p = Keypoint { x: c.p.0, y: c.p.1, score: 0.0 };
            out.anchor_patches.push(extract_patch(&anchor, &a, cfg.patch_side));
            out.positive_patches.push(extract_patch(&positive, &p, cfg.patch_side));
            out.anchor_kps.push(a);
            out.positive_kps.push(p);
        }
        return Ok(out);
    }
    Err(TrainError::PairStarved {
        image_id,
        attempts: PAIR_ATTEMPTS,
        last,
    })
}

fn draw_params(attempt: u64, param_salt: u64, noise_salt: u64) -> crate::imaging::AugmentParams {
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(attempt, param_salt));
    sample_augment_params(&mut rng, derive_seed(attempt, noise_salt))
}

fn reprojected(
    kps: &[Keypoint],
    h: &crate::geometry::Homography,
    crop: usize,
) -> Vec<crate::geometry::Correspondence> {
    crate::geometry::reproject_keypoints(kps, h, crop, crop, BORDER_MARGIN)
        .items()
        .to_vec()
}
