//! RANSAC homography fitting over putative correspondences.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::seeds::derive_seed;

use super::dlt::dlt_homography;
use super::homography::Homography;
use super::pair::{Correspondence, CorrespondenceSet};
use super::GeometryError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacConfig {
    /// Symmetric transfer distance below which a correspondence is an inlier.
    pub inlier_threshold: f64,
    pub max_iters: usize,
    /// Target probability of having seen one all-inlier sample; drives the
    /// adaptive early exit. Must lie strictly inside (0, 1).
    pub confidence: f64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            inlier_threshold: 3.0,
            max_iters: 1000,
            confidence: 0.999,
        }
    }
}

struct Best {
    h: Homography,
    inliers: Vec<bool>,
    count: usize,
    total_err: f64,
}

/// Robustly fits a homography. Returns the refit estimate and an inlier mask
/// aligned with the input order.
///
/// The matches are first put in a canonical order (lexicographic on
/// coordinates) and each trial draws its sample from a counter-derived RNG,
/// so the result is invariant to permutations of the input. The best trial
/// maximizes the inlier count, breaking ties by total symmetric error and
/// then by trial index; the winner is refit by DLT on its whole consensus
/// set when that refit is well posed.
pub fn ransac_homography(
    matches: &CorrespondenceSet,
    cfg: &RansacConfig,
    seed: u64,
) -> Result<(Homography, Vec<bool>), GeometryError> {
    let n = matches.len();
    if n < 4 {
        return Err(GeometryError::TooFewCorrespondences(n));
    }
    if !(cfg.confidence > 0.0 && cfg.confidence < 1.0) {
        return Err(GeometryError::BadParam {
            name: "confidence",
            value: cfg.confidence,
        });
    }
    if !(cfg.inlier_threshold > 0.0) {
        return Err(GeometryError::BadParam {
            name: "inlier_threshold",
            value: cfg.inlier_threshold,
        });
    }
    if cfg.max_iters == 0 {
        return Err(GeometryError::BadParam {
            name: "max_iters",
            value: 0.0,
        });
    }

    // Canonical order makes the sampling stream independent of input order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        let a = &matches.items()[i];
        let b = &matches.items()[j];
        a.a.0
            .total_cmp(&b.a.0)
            .then_with(|| a.a.1.total_cmp(&b.a.1))
            .then_with(|| a.p.0.total_cmp(&b.p.0))
            .then_with(|| a.p.1.total_cmp(&b.p.1))
    });
    let canon: Vec<Correspondence> = order.iter().map(|&i| matches.items()[i]).collect();

    let mut best: Option<Best> = None;
    let mut trials_run = 0usize;
    for t in 0..cfg.max_iters {
        trials_run = t + 1;
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, t as u64));
        let sample = draw_distinct_4(&mut rng, n);
        let subset = CorrespondenceSet::new(sample.iter().map(|&i| canon[i]).collect());
        let Ok(h) = dlt_homography(&subset) else {
            continue;
        };
        let Ok(hinv) = h.inverse() else {
            continue;
        };

        let mut inliers = vec![false; n];
        let mut count = 0usize;
        let mut total_err = 0.0;
        for (i, c) in canon.iter().enumerate() {
            let e = symmetric_error(&h, &hinv, c);
            if e < cfg.inlier_threshold {
                inliers[i] = true;
                count += 1;
                total_err += e;
            }
        }

        let improves = match &best {
            None => count >= 4,
            Some(b) => count > b.count || (count == b.count && total_err < b.total_err),
        };
        if improves {
            best = Some(Best {
                h,
                inliers,
                count,
                total_err,
            });
        }

        // Adaptive exit: once the inlier ratio w is known, the number of
        // trials needed to hit an all-inlier sample with probability
        // `confidence` is log(1-conf) / log(1-w^4).
        if let Some(b) = &best {
            let w = b.count as f64 / n as f64;
            let p_all = w.powi(4);
            if p_all >= 1.0 {
                break;
            }
            let needed = (1.0 - cfg.confidence).ln() / (1.0 - p_all).ln();
            if (t + 1) as f64 >= needed {
                break;
            }
        }
    }

    let Some(b) = best else {
        return Err(GeometryError::RansacFailure { trials: trials_run });
    };

    // Refit on the full consensus set; keep the sample estimate when the
    // refit is itself degenerate.
    let consensus = CorrespondenceSet::new(
        canon
            .iter()
            .zip(&b.inliers)
            .filter(|(_, &keep)| keep)
            .map(|(c, _)| *c)
            .collect(),
    );
    let h_final = dlt_homography(&consensus)
        .or_else(|_| b.h.normalized())
        .unwrap_or(b.h);

    // Un-permute the mask back to the caller's order.
    let mut mask = vec![false; n];
    for (canon_idx, &orig_idx) in order.iter().enumerate() {
        mask[orig_idx] = b.inliers[canon_idx];
    }
    Ok((h_final, mask))
}

fn draw_distinct_4(rng: &mut ChaCha12Rng, n: usize) -> [usize; 4] {
    let mut picked = [usize::MAX; 4];
    let mut filled = 0;
    while filled < 4 {
        let candidate = rng.random_range(0..n);
        if !picked[..filled].contains(&candidate) {
            picked[filled] = candidate;
            filled += 1;
        }
    }
    picked
}

/// Mean of the forward and backward transfer distances. Points the model
/// sends to infinity count as infinitely wrong rather than failing the fit.
fn symmetric_error(h: &Homography, hinv: &Homography, c: &Correspondence) -> f64 {
    let fwd = match h.apply(c.a.0, c.a.1) {
        Ok((x, y)) => ((x - c.p.0).powi(2) + (y - c.p.1).powi(2)).sqrt(),
        Err(_) => return f64::INFINITY,
    };
    let bwd = match hinv.apply(c.p.0, c.p.1) {
        Ok((x, y)) => ((x - c.a.0).powi(2) + (y - c.a.1).powi(2)).sqrt(),
        Err(_) => return f64::INFINITY,
    };
    (fwd + bwd) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::homography::corner_error;
    use crate::geometry::sample::{sample_homography, HomographyConfig};

    fn instance(
        seed: u64,
        n_in: usize,
        n_out: usize,
        noise: f64,
    ) -> (Homography, CorrespondenceSet) {
        let truth = sample_homography(&HomographyConfig::default(), 256, 256, seed)
            .normalized()
            .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, 999));
        let mut items = Vec::new();
        for _ in 0..n_in {
            let x = rng.random_range(20.0..236.0);
            let y = rng.random_range(20.0..236.0);
            let (u, v) = truth.apply(x, y).unwrap();
            let (nx, ny) = if noise > 0.0 {
                (
                    rng.random_range(-noise..noise),
                    rng.random_range(-noise..noise),
                )
            } else {
                (0.0, 0.0)
            };
            items.push(Correspondence {
                a: (x, y),
                p: (u + nx, v + ny),
            });
        }
        for _ in 0..n_out {
            items.push(Correspondence {
                a: (rng.random_range(0.0..256.0), rng.random_range(0.0..256.0)),
                p: (rng.random_range(0.0..256.0), rng.random_range(0.0..256.0)),
            });
        }
        (truth, CorrespondenceSet::new(items))
    }

    #[test]
    fn recovers_truth_through_thirty_percent_outliers() {
        let mut ok = 0;
        for seed in 0..20u64 {
            let (truth, matches) = instance(seed, 70, 30, 0.3);
            let (est, mask) = ransac_homography(&matches, &RansacConfig::default(), seed).unwrap();
            let err = corner_error(&est, &truth, 256, 256);
            let inliers = mask.iter().filter(|&&b| b).count();
            if err < 1.0 && inliers >= 60 {
                ok += 1;
            }
        }
        assert!(ok >= 19, "only {ok}/20 instances recovered");
    }

    #[test]
    fn result_is_invariant_to_match_permutation() {
        let (_, matches) = instance(5, 40, 20, 0.3);
        let (h1, m1) = ransac_homography(&matches, &RansacConfig::default(), 77).unwrap();

        let mut perm: Vec<Correspondence> = matches.items().to_vec();
        perm.reverse();
        perm.swap(3, 31);
        let permuted = CorrespondenceSet::new(perm.clone());
        let (h2, m2) = ransac_homography(&permuted, &RansacConfig::default(), 77).unwrap();

        assert_eq!(h1.matrix(), h2.matrix());
        // Masks describe the same set of correspondences.
        for (i, c) in perm.iter().enumerate() {
            let j = matches.items().iter().position(|x| x == c).unwrap();
            assert_eq!(m1[j], m2[i]);
        }
    }

    #[test]
    fn too_few_matches_is_an_error() {
        let items = vec![
            Correspondence { a: (0.0, 0.0), p: (0.0, 0.0) };
            3
        ];
        assert!(matches!(
            ransac_homography(&CorrespondenceSet::new(items), &RansacConfig::default(), 0),
            Err(GeometryError::TooFewCorrespondences(3))
        ));
    }

    #[test]
    fn bad_confidence_is_rejected() {
        let (_, matches) = instance(1, 10, 0, 0.3);
        let mut cfg = RansacConfig::default();
        cfg.confidence = 1.0;
        assert!(matches!(
            ransac_homography(&matches, &cfg, 0),
            Err(GeometryError::BadParam { name: "confidence", .. })
        ));
    }

    #[test]
    fn clean_input_exits_early_with_everything_inlying() {
        let (truth, matches) = instance(9, 50, 0, 0.0);
        let (est, mask) = ransac_homography(&matches, &RansacConfig::default(), 1).unwrap();
        assert!(mask.iter().all(|&b| b));
        assert!(corner_error(&est, &truth, 256, 256) < 0.5);
    }

    #[test]
    fn same_seed_same_answer() {
        let (_, matches) = instance(12, 30, 12, 0.3);
        let a = ransac_homography(&matches, &RansacConfig::default(), 4).unwrap();
        let b = ransac_homography(&matches, &RansacConfig::default(), 4).unwrap();
        assert_eq!(a.0.matrix(), b.0.matrix());
        assert_eq!(a.1, b.1);
    }
}
