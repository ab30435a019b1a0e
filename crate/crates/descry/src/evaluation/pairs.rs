//! Builds held-out evaluation pairs from a corpus: warped crop pairs with
//! exact ground truth, described either by a model or by oracle labels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::descriptor::{forward, DescriptorSet, ModelParams};
use crate::geometry::{make_pair, reproject_keypoints, HomographyConfig};
use crate::imaging::{
    augment_gray, detect_harris, extract_patch, sample_augment_params, AugmentParams, ImageGray,
    Keypoint, BORDER_MARGIN,
};
use crate::seeds::{derive_seed, EVAL_NAMESPACE};

use super::matching::EvalPair;
use super::EvalError;

const PAIR_ATTEMPTS: usize = 9;

/// Where the descriptors for each evaluation pair come from.
///
/// `Oracle` tags each surviving correspondence with its own one-hot
/// descriptor and uses exact reprojections as side-b keypoints, so every
/// downstream matching metric must saturate. It exists to separate
/// protocol failures from descriptor failures.
#[derive(Clone, Copy, Debug)]
pub enum DescriptorSource<'a> {
    Model(&'a ModelParams),
    Oracle,
}

#[derive(Clone, Debug)]
pub struct EvalPairConfig {
    pub pairs: usize,
    pub crop_size: usize,
    pub homography: HomographyConfig,
    pub seed: u64,
    pub detect_max: usize,
    pub nms_radius: usize,
}

impl Default for EvalPairConfig {
    fn default() -> Self {
        Self {
            pairs: 20,
            crop_size: 128,
            homography: HomographyConfig::default(),
            seed: 0,
            detect_max: 128,
            nms_radius: 4,
        }
    }
}

impl EvalPairConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.pairs < 1 {
            out.push(format!("pairs must be at least 1, got {}", self.pairs));
        }
        if self.crop_size < 32 {
            out.push(format!("crop_size must be at least 32, got {}", self.crop_size));
        }
        if self.detect_max < 4 {
            out.push(format!("detect_max must be at least 4, got {}", self.detect_max));
        }
        out.extend(self.homography.problems().into_iter().map(|p| format!("homography.{p}")));
        out
    }
}

/// Draws `cfg.pairs` augmented crop pairs from the corpus (images may
/// repeat) and describes both sides. Evaluation randomness lives in its
/// own namespace so it never rhymes with training batches.
pub fn build_eval_pairs(
    corpus: &[(u32, ImageGray)],
    source: DescriptorSource,
    cfg: &EvalPairConfig,
) -> Result<Vec<EvalPair>, EvalError> {
    let mut problems = cfg.problems();
    if corpus.is_empty() {
        problems.push("corpus must not be empty".into());
    }
    if !problems.is_empty() {
        return Err(EvalError::BadConfig(problems));
    }

    let base = derive_seed(cfg.seed, EVAL_NAMESPACE);
    (0..cfg.pairs)
        .into_par_iter()
        .map(|i| {
            let pair_seed = derive_seed(base, i as u64);
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(pair_seed, 0));
            let (image_id, img) = &corpus[rng.random_range(0..corpus.len())];
            build_one(img, *image_id, source, cfg, pair_seed)
        })
        .collect()
}

fn draw_params(attempt: u64, param_salt: u64, noise_salt: u64) -> AugmentParams {
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(attempt, param_salt));
    sample_augment_params(&mut rng, derive_seed(attempt, noise_salt))
}

fn build_one(
    img: &ImageGray,
    image_id: u32,
    source: DescriptorSource,
    cfg: &EvalPairConfig,
    pair_seed: u64,
) -> Result<EvalPair, EvalError> {
    let mut last = String::from("no attempt ran");
    for r in 0..PAIR_ATTEMPTS {
        let attempt = derive_seed(pair_seed, 1 + r as u64);
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
        let anchor = augment_gray(&pair.anchor, &draw_params(attempt, 2, 3))?;
        let positive = augment_gray(&pair.positive, &draw_params(attempt, 4, 5))?;

        let sets = match source {
            DescriptorSource::Model(params) => {
                describe(params, &anchor, &positive, image_id, cfg, &mut last)
            }
            DescriptorSource::Oracle => {
                oracle_sets(&anchor, &pair.h_ap, image_id, cfg, &mut last)
            }
        };
        if let Some((set_a, set_b)) = sets {
            return EvalPair::new(set_a, set_b, pair.h_ap, cfg.crop_size, cfg.crop_size);
        }
    }
    Err(EvalError::StarvedPair {
        image_id,
        attempts: PAIR_ATTEMPTS,
        last,
    })
}

/// Detects on both sides independently and runs the model on each. Unlike
/// training, nothing ties a-side keypoints to b-side keypoints here; the
/// ground-truth homography is the only bridge.
fn describe(
    params: &ModelParams,
    anchor: &ImageGray,
    positive: &ImageGray,
    image_id: u32,
    cfg: &EvalPairConfig,
    last: &mut String,
) -> Option<(DescriptorSet, DescriptorSet)> {
    let mut sides = Vec::with_capacity(2);
    for (name, crop) in [("anchor", anchor), ("positive", positive)] {
        let kps = detect_harris(crop, cfg.detect_max, cfg.nms_radius);
        if kps.len() < 4 {
            *last = format!("{} keypoints detected on the {name} side", kps.len());
            return None;
        }
        let patches: Vec<_> = kps
            .iter()
            .map(|kp| extract_patch(crop, kp, params.patch_side))
            .collect();
        match forward(params, &patches, &kps, image_id) {
            Ok((set, _)) => sides.push(set),
            Err(e) => {
                *last = e.to_string();
                return None;
            }
        }
    }
    let b = sides.pop().expect("two sides");
    let a = sides.pop().expect("two sides");
    Some((a, b))
}

/// Keypoints and labels with no model in the loop: anchor detections that
/// survive reprojection become correspondence i on both sides, carrying
/// one-hot descriptor e_i. Side b uses the exact reprojected coordinates.
fn oracle_sets(
    anchor: &ImageGray,
    h_ap: &crate::geometry::Homography,
    image_id: u32,
    cfg: &EvalPairConfig,
    last: &mut String,
) -> Option<(DescriptorSet, DescriptorSet)> {
    let kps = detect_harris(anchor, cfg.detect_max, cfg.nms_radius);
    let corrs = reproject_keypoints(kps.as_slice(), h_ap, cfg.crop_size, cfg.crop_size, BORDER_MARGIN);
    let corrs = corrs.items();
    if corrs.len() < 4 {
        *last = format!("{} correspondences survived reprojection", corrs.len());
        return None;
    }
    let n = corrs.len();
    let mut rows = vec![0.0; n * n];
    let mut kps_a = Vec::with_capacity(n);
    let mut kps_b = Vec::with_capacity(n);
    for (i, c) in corrs.iter().enumerate() {
        rows[i * n + i] = 1.0;
        kps_a.push(Keypoint { x: c.a.0, y: c.a.1, score: 0.0 });
        kps_b.push(Keypoint { x: c.p.0, y: c.p.1, score: 0.0 });
    }
    Some((
        DescriptorSet::new(n, rows.clone(), kps_a, image_id),
        DescriptorSet::new(n, rows, kps_b, image_id),
    ))
}
