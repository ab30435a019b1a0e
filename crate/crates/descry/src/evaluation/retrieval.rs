//! Scene retrieval: global-descriptor ranking, inlier re-ranking, and the
//! mAP / mP@k / Recall@N protocol over a synthetic multi-view gallery.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptor::{forward, DescriptorSet, ModelParams};
use crate::geometry::{make_pair, ransac_homography, HomographyConfig, RansacConfig};
use crate::imaging::{
    augment_gray, detect_harris, extract_patch, generate_synthetic_image, sample_augment_params,
    CorpusSpec,
};
use crate::mining::{aggregate_global_descriptor, Aggregation, GlobalDescriptor};
use crate::seeds::{derive_seed, EVAL_NAMESPACE};

use super::matching::match_mutual_nn;
use super::report::RetrievalSummary;
use super::EvalError;

const VIEW_ATTEMPTS: usize = 9;
const NMS_RADIUS: usize = 4;

/// Means over all queries at fixed cutoffs. `mp` and `recall` are keyed by
/// cutoff depth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub map: f64,
    pub mp: BTreeMap<usize, f64>,
    pub recall: BTreeMap<usize, f64>,
    pub queries: usize,
}

/// Gallery shape and per-view generation parameters for
/// [`evaluate_retrieval`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub scenes: usize,
    pub views: usize,
    pub crop_size: usize,
    pub keypoints_per_view: usize,
    pub seed: u64,
    pub homography: HomographyConfig,
    pub aggregation: Aggregation,
    pub ransac: RansacConfig,
    /// How deep into the global ranking the inlier re-rank reaches.
    pub rerank_depth: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            scenes: 8,
            views: 4,
            crop_size: 128,
            keypoints_per_view: 32,
            seed: 0,
            homography: HomographyConfig::default(),
            aggregation: Aggregation::SumRenorm,
            ransac: RansacConfig::default(),
            rerank_depth: 10,
        }
    }
}

impl RetrievalConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.scenes < 2 {
            out.push(format!("scenes must be at least 2, got {}", self.scenes));
        }
        if self.views < 2 {
            out.push(format!("views must be at least 2, got {}", self.views));
        }
        if self.crop_size < 32 {
            out.push(format!("crop_size must be at least 32, got {}", self.crop_size));
        }
        if self.keypoints_per_view < 4 {
            out.push(format!(
                "keypoints_per_view must be at least 4, got {}",
                self.keypoints_per_view
            ));
        }
        if self.rerank_depth < 1 {
            out.push(format!("rerank_depth must be at least 1, got {}", self.rerank_depth));
        }
        out.extend(self.homography.problems().into_iter().map(|p| format!("homography.{p}")));
        out
    }
}

/// Database ids sorted by descending similarity to the query global.
/// Ties break toward the lower id so rankings are reproducible.
pub fn rank_by_global(query: &GlobalDescriptor, database: &[(u32, GlobalDescriptor)]) -> Vec<u32> {
    assert!(!database.is_empty(), "empty retrieval database");
    let mut scored: Vec<(u32, f64)> = database
        .iter()
        .map(|(id, g)| {
            assert_eq!(g.dim(), query.dim(), "global dimension drift");
            let s = query.values().iter().zip(g.values()).map(|(a, b)| a * b).sum::<f64>();
            (*id, s)
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.into_iter().map(|(id, _)| id).collect()
}

/// Re-orders candidates by geometric support: mutual-NN matches are fed to
/// a homography fit and candidates sort by descending inlier count.
/// Candidates with fewer than 4 matches, or whose fit fails, score zero.
/// Equal scores preserve the incoming order, so this only ever promotes
/// geometric evidence.
pub fn rerank_by_inliers(
    query: &DescriptorSet,
    candidates: &[(u32, &DescriptorSet)],
    cfg: &RansacConfig,
    seed: u64,
) -> Vec<u32> {
    let scores: Vec<usize> = candidates
        .par_iter()
        .enumerate()
        .map(|(pos, (_, set))| {
            let m = match match_mutual_nn(query, set) {
                Ok(m) => m,
                Err(_) => return 0,
            };
            if m.len() < 4 {
                return 0;
            }
            let corrs: Vec<crate::geometry::Correspondence> = m
                .matches()
                .iter()
                .map(|&(i, j, _)| crate::geometry::Correspondence {
                    a: (query.keypoints()[i].x, query.keypoints()[i].y),
                    p: (set.keypoints()[j].x, set.keypoints()[j].y),
                })
                .collect();
            match ransac_homography(
                &crate::geometry::CorrespondenceSet::new(corrs),
                cfg,
                derive_seed(seed, pos as u64),
            ) {
                Ok((_, mask)) => mask.iter().filter(|&&b| b).count(),
                Err(_) => 0,
            }
        })
        .collect();

    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| scores[b].cmp(&scores[a]).then(a.cmp(&b)));
    order.into_iter().map(|i| candidates[i].0).collect()
}

/// Average precision of one ranking: precision at each relevant rank,
/// summed and divided by the total relevant count, so missing relevant
/// items pull the score down.
pub fn compute_map(ranked: &[u32], relevant: &[u32]) -> f64 {
    assert!(!relevant.is_empty(), "mAP needs at least one relevant item");
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, id) in ranked.iter().enumerate() {
        if relevant.contains(id) {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    sum / relevant.len() as f64
}

/// Fraction of the top `k` ranks occupied by relevant items.
pub fn compute_mp_at_k(ranked: &[u32], relevant: &[u32], k: usize) -> f64 {
    assert!(k >= 1, "cutoff must be at least 1");
    let hits = ranked.iter().take(k).filter(|id| relevant.contains(id)).count();
    hits as f64 / k as f64
}

/// 1 iff any relevant item appears in the top `n` ranks.
pub fn recall_at_n(ranked: &[u32], relevant: &[u32], n: usize) -> f64 {
    assert!(n >= 1, "cutoff must be at least 1");
    if ranked.iter().take(n).any(|id| relevant.contains(id)) {
        1.0
    } else {
        0.0
    }
}

struct View {
    id: u32,
    scene: usize,
    set: DescriptorSet,
    global: GlobalDescriptor,
}

const CUTOFFS: [usize; 3] = [1, 5, 10];

/// Builds a synthetic gallery of `scenes x views` warped crops, describes
/// every view with `params`, then measures retrieval quality twice: once
/// on the global ranking alone and once after inlier re-ranking of the
/// top `rerank_depth` candidates. Same-scene views are the relevant set.
pub fn evaluate_retrieval(
    params: &ModelParams,
    cfg: &RetrievalConfig,
) -> Result<RetrievalSummary, EvalError> {
    let problems = cfg.problems();
    if !problems.is_empty() {
        return Err(EvalError::BadConfig(problems));
    }

    let base = derive_seed(cfg.seed, EVAL_NAMESPACE);
    let views: Vec<View> = (0..cfg.scenes)
        .into_par_iter()
        .flat_map(|g| {
            (0..cfg.views)
                .into_par_iter()
                .map(move |v| (g, v))
        })
        .map(|(g, v)| build_view(params, cfg, base, g, v))
        .collect::<Result<_, _>>()?;

    let globals: Vec<(u32, GlobalDescriptor)> =
        views.iter().map(|w| (w.id, w.global.clone())).collect();

    let per_query: Vec<(QueryScores, QueryScores)> = views
        .par_iter()
        .enumerate()
        .map(|(qi, query)| {
            let db: Vec<(u32, GlobalDescriptor)> = globals
                .iter()
                .filter(|(id, _)| *id != query.id)
                .cloned()
                .collect();
            let relevant: Vec<u32> = views
                .iter()
                .filter(|w| w.scene == query.scene && w.id != query.id)
                .map(|w| w.id)
                .collect();
            let ranked = rank_by_global(&query.global, &db);
            let before = score_query(&ranked, &relevant);

            let depth = cfg.rerank_depth.min(ranked.len());
            let head: Vec<(u32, &DescriptorSet)> = ranked[..depth]
                .iter()
                .map(|id| {
                    let w = views.iter().find(|w| w.id == *id).expect("ranked id exists");
                    (*id, &w.set)
                })
                .collect();
            let mut reranked =
                rerank_by_inliers(&query.set, &head, &cfg.ransac, derive_seed(base, qi as u64));
            reranked.extend_from_slice(&ranked[depth..]);
            let after = score_query(&reranked, &relevant);
            (before, after)
        })
        .collect();

    let n = per_query.len();
    Ok(RetrievalSummary {
        before: fold_scores(per_query.iter().map(|(b, _)| b), n),
        after: fold_scores(per_query.iter().map(|(_, a)| a), n),
    })
}

struct QueryScores {
    ap: f64,
    mp: [f64; CUTOFFS.len()],
    recall: [f64; CUTOFFS.len()],
}

fn score_query(ranked: &[u32], relevant: &[u32]) -> QueryScores {
    QueryScores {
        ap: compute_map(ranked, relevant),
        mp: CUTOFFS.map(|k| compute_mp_at_k(ranked, relevant, k)),
        recall: CUTOFFS.map(|n| recall_at_n(ranked, relevant, n)),
    }
}

fn fold_scores<'a>(scores: impl Iterator<Item = &'a QueryScores>, n: usize) -> RetrievalReport {
    let mut map = 0.0;
    let mut mp = [0.0; CUTOFFS.len()];
    let mut recall = [0.0; CUTOFFS.len()];
    for s in scores {
        map += s.ap;
        for i in 0..CUTOFFS.len() {
            mp[i] += s.mp[i];
            recall[i] += s.recall[i];
        }
    }
    let d = n as f64;
    RetrievalReport {
        map: map / d,
        mp: CUTOFFS.iter().zip(mp).map(|(&k, v)| (k, v / d)).collect(),
        recall: CUTOFFS.iter().zip(recall).map(|(&k, v)| (k, v / d)).collect(),
        queries: n,
    }
}

/// One warped, augmented, described view of scene `g`. The source frame is
/// twice the crop side so warped crops fit; the same source seed across
/// views is what makes views of a scene retrievable.
fn build_view(
    params: &ModelParams,
    cfg: &RetrievalConfig,
    base: u64,
    g: usize,
    v: usize,
) -> Result<View, EvalError> {
    let spec = CorpusSpec {
        width: cfg.crop_size * 2,
        height: cfg.crop_size * 2,
        element_count: 24,
    };
    let source = generate_synthetic_image(&spec, derive_seed(base, g as u64))?.to_gray();
    let id = (g * cfg.views + v) as u32;
    let view_seed = derive_seed(derive_seed(base, 0x5649_4557), id as u64);

    let mut last = String::from("no attempt ran");
    for r in 0..VIEW_ATTEMPTS {
        let attempt = derive_seed(view_seed, r as u64);
        let pair = match make_pair(
            &source,
            id,
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
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(attempt, 2));
        let aug = sample_augment_params(&mut rng, derive_seed(attempt, 3));
        let crop = augment_gray(&pair.positive, &aug)?;

        let kps = detect_harris(&crop, cfg.keypoints_per_view, NMS_RADIUS);
        if kps.len() < 4 {
            last = format!("{} keypoints detected", kps.len());
            continue;
        }
        let patches: Vec<_> = kps
            .iter()
            .map(|kp| extract_patch(&crop, kp, params.patch_side))
            .collect();
        let (set, _) = forward(params, &patches, &kps, id)?;
        let global = aggregate_global_descriptor(&set, cfg.aggregation)?;
        return Ok(View { id, scene: g, set, global });
    }
    Err(EvalError::StarvedPair {
        image_id: id,
        attempts: VIEW_ATTEMPTS,
        last,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::init_params;
    use crate::imaging::Keypoint;
    use rand::Rng;

    fn unit(values: Vec<f64>) -> GlobalDescriptor {
        let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
        GlobalDescriptor::new(values.into_iter().map(|x| x / norm).collect()).unwrap()
    }

    #[test]
    fn the_query_itself_ranks_first_when_present() {
        let q = unit(vec![1.0, 0.0, 0.0]);
        let db = vec![
            (5, unit(vec![0.0, 1.0, 0.0])),
            (3, unit(vec![1.0, 0.0, 0.0])),
            (9, unit(vec![0.5, 0.5, 0.0])),
        ];
        assert_eq!(rank_by_global(&q, &db), vec![3, 9, 5]);
    }

    #[test]
    fn ranking_matches_a_sort_oracle_on_random_globals() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        for _ in 0..10 {
            let dim = 6;
            let mk = |r: &mut ChaCha12Rng| {
                unit((0..dim).map(|_| r.random::<f64>() - 0.5).collect())
            };
            let q = mk(&mut rng);
            let db: Vec<(u32, GlobalDescriptor)> =
                (0..100u32).map(|id| (id, mk(&mut rng))).collect();
            let ranked = rank_by_global(&q, &db);

            let mut oracle: Vec<(u32, f64)> = db
                .iter()
                .map(|(id, g)| {
                    (
                        *id,
                        q.values().iter().zip(g.values()).map(|(a, b)| a * b).sum::<f64>(),
                    )
                })
                .collect();
            oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let want: Vec<u32> = oracle.into_iter().map(|(id, _)| id).collect();
            assert_eq!(ranked, want);
        }
    }

    #[test]
    fn score_ties_break_to_the_lower_id() {
        let q = unit(vec![1.0, 0.0]);
        let same = unit(vec![0.0, 1.0]);
        let db = vec![(7, same.clone()), (2, same.clone()), (4, same)];
        assert_eq!(rank_by_global(&q, &db), vec![2, 4, 7]);
    }

    #[test]
    fn average_precision_handles_interleaved_hits() {
        // Hits at ranks 1 and 3 of [rel, non, rel]:
        // (1/1 + 2/3) / 2 = 5/6.
        let ap = compute_map(&[10, 20, 30], &[10, 30]);
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn missing_relevant_items_cost_average_precision() {
        let ap = compute_map(&[10, 20], &[10, 99]);
        assert!((ap - 0.5).abs() < 1e-15);
    }

    #[test]
    fn average_precision_equals_the_staircase_oracle() {
        // AP as the area under the precision-recall staircase:
        // sum over ranks of (R_k - R_{k-1}) * P_k.
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(5..=50);
            let mut ranked: Vec<u32> = (0..n as u32).collect();
            for i in (1..ranked.len()).rev() {
                let j = rng.random_range(0..=i);
                ranked.swap(i, j);
            }
            let n_rel = rng.random_range(1..=n);
            let relevant: Vec<u32> = (0..n_rel as u32).collect();

            let mut hits = 0usize;
            let mut prev_recall = 0.0;
            let mut oracle = 0.0;
            for (k, id) in ranked.iter().enumerate() {
                if relevant.contains(id) {
                    hits += 1;
                }
                let recall = hits as f64 / n_rel as f64;
                let precision = hits as f64 / (k + 1) as f64;
                oracle += (recall - prev_recall) * precision;
                prev_recall = recall;
            }
            let got = compute_map(&ranked, &relevant);
            assert!((got - oracle).abs() < 1e-12, "got {got}, oracle {oracle}");
        }
    }

    #[test]
    fn precision_and_recall_cutoffs_count_correctly() {
        let ranked = [4u32, 8, 1, 9, 2];
        let relevant = [1u32, 2, 7];
        assert_eq!(compute_mp_at_k(&ranked, &relevant, 1), 0.0);
        assert_eq!(compute_mp_at_k(&ranked, &relevant, 3), 1.0 / 3.0);
        assert_eq!(compute_mp_at_k(&ranked, &relevant, 5), 2.0 / 5.0);
        assert_eq!(recall_at_n(&ranked, &relevant, 1), 0.0);
        assert_eq!(recall_at_n(&ranked, &relevant, 3), 1.0);
        assert_eq!(recall_at_n(&ranked, &relevant, 5), 1.0);
    }

    fn grid_kps(n: usize) -> Vec<Keypoint> {
        (0..n)
            .map(|i| Keypoint {
                x: 10.0 + (i % 8) as f64 * 12.0,
                y: 10.0 + (i / 8) as f64 * 12.0,
                score: 0.0,
            })
            .collect()
    }

    fn one_hot_rows(n: usize, dim: usize) -> Vec<f64> {
        let mut rows = vec![0.0; n * dim];
        for i in 0..n {
            rows[i * dim + (i % dim)] = 1.0;
        }
        rows
    }

    #[test]
    fn reranking_orders_candidates_by_planted_inlier_counts() {
        // Candidate c shares its first n_c keypoints with the query at
        // identical positions (identity-consistent inliers); the rest sit
        // far away so they cannot support the same homography. Candidate
        // with n_c = 0 also gets only 3 keypoints, putting it below the
        // 4-match floor exactly.
        let dim = 64;
        let n = 60;
        let query = DescriptorSet::new(dim, one_hot_rows(n, dim), grid_kps(n), 1000);
        let planted = [50usize, 10, 40, 0, 20];
        let sets: Vec<DescriptorSet> = planted
            .iter()
            .enumerate()
            .map(|(c, &n_c)| {
                let count = if n_c == 0 { 3 } else { n };
                let mut kps = grid_kps(count);
                for (i, kp) in kps.iter_mut().enumerate() {
                    if i >= n_c {
                        kp.x += 200.0 + (i as f64 * 13.0) % 77.0;
                        kp.y += 150.0 + (i as f64 * 29.0) % 53.0;
                    }
                }
                DescriptorSet::new(dim, one_hot_rows(count, dim), kps, c as u32)
            })
            .collect();
        let candidates: Vec<(u32, &DescriptorSet)> =
            sets.iter().enumerate().map(|(c, s)| (c as u32, s)).collect();

        let got = rerank_by_inliers(&query, &candidates, &RansacConfig::default(), 3);
        assert_eq!(got, vec![0, 2, 4, 1, 3]);
    }

    #[test]
    fn reranking_is_a_permutation_of_the_candidates() {
        let dim = 16;
        let query = DescriptorSet::new(dim, one_hot_rows(12, dim), grid_kps(12), 99);
        let sets: Vec<DescriptorSet> = (0..6)
            .map(|c| DescriptorSet::new(dim, one_hot_rows(8, dim), grid_kps(8), c))
            .collect();
        let candidates: Vec<(u32, &DescriptorSet)> =
            sets.iter().enumerate().map(|(c, s)| (c as u32, s)).collect();
        let mut got = rerank_by_inliers(&query, &candidates, &RansacConfig::default(), 1);
        got.sort_unstable();
        assert_eq!(got, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn the_gallery_protocol_produces_bounded_metrics() {
        let params = init_params(16, 16, 8, 7).unwrap();
        let cfg = RetrievalConfig {
            scenes: 2,
            views: 2,
            crop_size: 64,
            keypoints_per_view: 16,
            seed: 5,
            rerank_depth: 3,
            ..RetrievalConfig::default()
        };
        let summary = evaluate_retrieval(&params, &cfg).unwrap();
        for report in [&summary.before, &summary.after] {
            assert_eq!(report.queries, 4);
            assert!(report.map >= 0.0 && report.map <= 1.0);
            assert!(report.mp.values().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(report.recall.values().all(|&v| (0.0..=1.0).contains(&v)));
            assert_eq!(report.mp.keys().copied().collect::<Vec<_>>(), vec![1, 5, 10]);
        }
    }

    #[test]
    fn the_gallery_protocol_is_deterministic() {
        let params = init_params(16, 16, 8, 7).unwrap();
        let cfg = RetrievalConfig {
            scenes: 2,
            views: 2,
            crop_size: 64,
            keypoints_per_view: 16,
            seed: 5,
            rerank_depth: 3,
            ..RetrievalConfig::default()
        };
        let a = evaluate_retrieval(&params, &cfg).unwrap();
        let b = evaluate_retrieval(&params, &cfg).unwrap();
        assert_eq!(a.before, b.before);
        assert_eq!(a.after, b.after);
    }

    #[test]
    fn invalid_gallery_shapes_are_rejected_with_all_reasons() {
        let params = init_params(16, 16, 8, 7).unwrap();
        let cfg = RetrievalConfig {
            scenes: 1,
            views: 1,
            crop_size: 8,
            keypoints_per_view: 2,
            rerank_depth: 0,
            ..RetrievalConfig::default()
        };
        match evaluate_retrieval(&params, &cfg) {
            Err(EvalError::BadConfig(problems)) => assert_eq!(problems.len(), 5),
            other => panic!("expected BadConfig, got {other:?}"),
        }
    }
}
