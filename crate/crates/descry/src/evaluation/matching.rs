//! Mutual nearest-neighbor matching and the pairwise matching metrics.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptor::DescriptorSet;
use crate::geometry::{
    corner_error, ransac_homography, Correspondence, CorrespondenceSet, Homography, RansacConfig,
};
use crate::imaging::Keypoint;
use crate::seeds::derive_seed;

use super::EvalError;

const RANSAC_STREAM: u64 = 0x5241_4E53;

/// One-to-one matches between two descriptor sets, strongest structure
/// first discarded: only mutual argmax pairs survive.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchSet {
    image_a: u32,
    image_b: u32,
    matches: Vec<(usize, usize, f64)>,
}

impl MatchSet {
    pub fn image_a(&self) -> u32 {
        self.image_a
    }

    pub fn image_b(&self) -> u32 {
        self.image_b
    }

    /// `(index_a, index_b, similarity)`, ascending in `index_a`.
    pub fn matches(&self) -> &[(usize, usize, f64)] {
        &self.matches
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }
}

/// A held-out crop pair with its exact ground-truth homography mapping
/// side-a pixel coordinates to side b.
#[derive(Clone, Debug)]
pub struct EvalPair {
    a: DescriptorSet,
    b: DescriptorSet,
    h_gt: Homography,
    width: usize,
    height: usize,
}

impl EvalPair {
    pub fn new(
        a: DescriptorSet,
        b: DescriptorSet,
        h_gt: Homography,
        width: usize,
        height: usize,
    ) -> Result<Self, EvalError> {
        if a.count() == 0 {
            return Err(EvalError::EmptySide("a"));
        }
        if b.count() == 0 {
            return Err(EvalError::EmptySide("b"));
        }
        if a.dim() != b.dim() {
            return Err(EvalError::DimMismatch {
                left: a.dim(),
                right: b.dim(),
            });
        }
        if h_gt.inverse().is_err() {
            return Err(EvalError::BadHomography);
        }
        Ok(Self { a, b, h_gt, width, height })
    }

    pub fn a(&self) -> &DescriptorSet {
        &self.a
    }

    pub fn b(&self) -> &DescriptorSet {
        &self.b
    }

    pub fn h_gt(&self) -> &Homography {
        &self.h_gt
    }

    pub fn bounds(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Matching metrics averaged over evaluation pairs. `mma` maps a pixel
/// threshold to the mean fraction of correct matches; pairs that produced
/// no matches at all are excluded from `mma` and `precision` means and
/// counted in `skipped`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchingReport {
    pub mma: BTreeMap<usize, f64>,
    pub eta: f64,
    pub precision: f64,
    pub recall: f64,
    pub pairs: usize,
    pub skipped: usize,
}

/// Keeps `(i, j)` iff `j` is `i`'s best column and `i` is `j`'s best row.
/// Ties resolve to the lowest index on both sides, so the result is a
/// deterministic one-to-one matching.
pub fn match_mutual_nn(a: &DescriptorSet, b: &DescriptorSet) -> Result<MatchSet, EvalError> {
    if a.count() == 0 {
        return Err(EvalError::EmptySide("a"));
    }
    if b.count() == 0 {
        return Err(EvalError::EmptySide("b"));
    }
    if a.dim() != b.dim() {
        return Err(EvalError::DimMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }

    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    let best_b: Vec<(usize, f64)> = (0..a.count())
        .into_par_iter()
        .map(|i| {
            let mut best = (0usize, f64::NEG_INFINITY);
            for j in 0..b.count() {
                let s = dot(a.row(i), b.row(j));
                if s > best.1 {
                    best = (j, s);
                }
            }
            best
        })
        .collect();
    let best_a: Vec<usize> = (0..b.count())
        .into_par_iter()
        .map(|j| {
            let mut best = (0usize, f64::NEG_INFINITY);
            for i in 0..a.count() {
                let s = dot(a.row(i), b.row(j));
                if s > best.1 {
                    best = (i, s);
                }
            }
            best.0
        })
        .collect();

    let matches = best_b
        .into_iter()
        .enumerate()
        .filter(|&(i, (j, _))| best_a[j] == i)
        .map(|(i, (j, s))| (i, j, s))
        .collect();
    Ok(MatchSet {
        image_a: a.image_id(),
        image_b: b.image_id(),
        matches,
    })
}

fn reprojection_error(
    h_gt: &Homography,
    kp_a: &Keypoint,
    kp_b: &Keypoint,
) -> f64 {
    match h_gt.apply(kp_a.x, kp_a.y) {
        Ok((px, py)) => ((px - kp_b.x).powi(2) + (py - kp_b.y).powi(2)).sqrt(),
        Err(_) => f64::INFINITY,
    }
}

/// Fraction of matches whose ground-truth reprojection error is at most
/// each threshold, for one pair. A pair with no matches has no defined
/// accuracy and is an error; callers decide how to count it.
pub fn compute_mma(
    matches: &MatchSet,
    kps_a: &[Keypoint],
    kps_b: &[Keypoint],
    h_gt: &Homography,
    thresholds: &[usize],
) -> Result<BTreeMap<usize, f64>, EvalError> {
    if matches.is_empty() {
        return Err(EvalError::EmptyMatches);
    }
    if thresholds.is_empty() || thresholds.contains(&0) {
        return Err(EvalError::BadThresholds(
            "thresholds must be positive and non-empty".into(),
        ));
    }
    let mut errors = Vec::with_capacity(matches.len());
    for &(i, j, _) in matches.matches() {
        let kp_a = kps_a.get(i).ok_or(EvalError::MatchIndexOutOfRange {
            index: i,
            count: kps_a.len(),
        })?;
        let kp_b = kps_b.get(j).ok_or(EvalError::MatchIndexOutOfRange {
            index: j,
            count: kps_b.len(),
        })?;
        errors.push(reprojection_error(h_gt, kp_a, kp_b));
    }
    let total = errors.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| {
            let correct = errors.iter().filter(|&&e| e <= t as f64).count();
            (t, correct as f64 / total)
        })
        .collect())
}

struct PairStats {
    mma: Option<BTreeMap<usize, f64>>,
    precision: Option<f64>,
    recall: Option<f64>,
    eta: f64,
}

/// Full matching protocol over many pairs: mutual-NN matches, MMA curve,
/// homography score at `pixel_thresh`, precision, and recall.
///
/// Ground truth for recall: side-a keypoints whose `h_gt` image lands
/// inside side b with a side-b keypoint within `pixel_thresh`. Pairs with
/// no ground truth are excluded from the recall mean.
pub fn compute_matching_metrics(
    pairs: &[EvalPair],
    pixel_thresh: f64,
    thresholds: &[usize],
    ransac: &RansacConfig,
) -> Result<MatchingReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::NoPairs);
    }
    if !(pixel_thresh > 0.0) {
        return Err(EvalError::BadThresholds(format!(
            "pixel_thresh must be positive, got {pixel_thresh}"
        )));
    }

    let stats: Vec<PairStats> = pairs
        .par_iter()
        .enumerate()
        .map(|(idx, pair)| pair_stats(idx, pair, pixel_thresh, thresholds, ransac))
        .collect::<Result<_, _>>()?;

    let mut mma: BTreeMap<usize, f64> = thresholds.iter().map(|&t| (t, 0.0)).collect();
    let mut included = 0usize;
    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut recall_n = 0usize;
    let mut eta_sum = 0.0;
    for s in &stats {
        if let Some(curve) = &s.mma {
            for (t, v) in curve {
                *mma.get_mut(t).expect("same threshold grid") += v;
            }
            included += 1;
        }
        if let Some(p) = s.precision {
            precision_sum += p;
        }
        if let Some(r) = s.recall {
            recall_sum += r;
            recall_n += 1;
        }
        eta_sum += s.eta;
    }
    if included > 0 {
        mma.values_mut().for_each(|v| *v /= included as f64);
    }
    Ok(MatchingReport {
        mma,
        eta: eta_sum / pairs.len() as f64,
        precision: if included > 0 {
            precision_sum / included as f64
        } else {
            0.0
        },
        recall: if recall_n > 0 {
            recall_sum / recall_n as f64
        } else {
            0.0
        },
        pairs: pairs.len(),
        skipped: pairs.len() - included,
    })
}

fn pair_stats(
    idx: usize,
    pair: &EvalPair,
    pixel_thresh: f64,
    thresholds: &[usize],
    ransac: &RansacConfig,
) -> Result<PairStats, EvalError> {
    let m = match_mutual_nn(pair.a(), pair.b())?;
    let kps_a = pair.a().keypoints();
    let kps_b = pair.b().keypoints();
    let (w, h) = pair.bounds();

    // Ground-truth correspondences exist independently of the matcher.
    let in_bounds = |x: f64, y: f64| {
        x >= 0.0 && x <= (w - 1) as f64 && y >= 0.0 && y <= (h - 1) as f64
    };
    let gt = kps_a
        .iter()
        .filter(|kp| match pair.h_gt().apply(kp.x, kp.y) {
            Ok((px, py)) => {
                in_bounds(px, py)
                    && kps_b.iter().any(|kb| {
                        ((px - kb.x).powi(2) + (py - kb.y).powi(2)).sqrt() <= pixel_thresh
                    })
            }
            Err(_) => false,
        })
        .count();

    if m.is_empty() {
        return Ok(PairStats {
            mma: None,
            precision: None,
            recall: if gt > 0 { Some(0.0) } else { None },
            eta: 0.0,
        });
    }

    let mma = compute_mma(&m, kps_a, kps_b, pair.h_gt(), thresholds)?;
    let correct = m
        .matches()
        .iter()
        .filter(|&&(i, j, _)| {
            reprojection_error(pair.h_gt(), &kps_a[i], &kps_b[j]) <= pixel_thresh
        })
        .count();
    let precision = correct as f64 / m.len() as f64;
    let recall = if gt > 0 {
        Some(correct as f64 / gt as f64)
    } else {
        None
    };

    let eta = if m.len() >= 4 {
        let corrs: Vec<Correspondence> = m
            .matches()
            .iter()
            .map(|&(i, j, _)| Correspondence {
                a: (kps_a[i].x, kps_a[i].y),
                p: (kps_b[j].x, kps_b[j].y),
            })
            .collect();
        match ransac_homography(
            &CorrespondenceSet::new(corrs),
            ransac,
            derive_seed(RANSAC_STREAM, idx as u64),
        ) {
            Ok((h_est, _)) => {
                if corner_error(&h_est, pair.h_gt(), w, h) <= pixel_thresh {
                    1.0
                } else {
                    0.0
                }
            }
            Err(_) => 0.0,
        }
    } else {
        0.0
    };

    Ok(PairStats {
        mma: Some(mma),
        precision: Some(precision),
        recall,
        eta,
    })
}
