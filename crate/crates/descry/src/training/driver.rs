//! The optimization loop: batches in, checkpoint out.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::descriptor::{backward, forward, forward_rows, init_params, ModelParams};
use crate::imaging::{detect_harris, extract_patch, ImageGray};
use crate::loss::{
    ap_loss_batch, backprop_similarities, triplet_loss_batch, ApConfig, RankedList, TripletConfig,
};
use crate::descriptor::DescriptorSet;
use crate::mining::{mine, similarity, NegativePool};
use crate::seeds::derive_seed;

use super::batch::{build_batch, NMS_RADIUS};
use super::{adam_update, AdamState, LossKind, TrainConfig, TrainError};

/// Pool image ids live in the upper half of the id space so that
/// exclusion-by-source during mining can never mistake a pool image for a
/// batch image with the same corpus id.
pub const POOL_ID_BASE: u32 = 1 << 31;

/// Model initialization draws from its own stream; raw step seeds are
/// `seed ^ (epoch * 65536 + step)` and must not collide with it.
const INIT_SALT: u64 = 0x494E_4954;
const MINE_SALT: u64 = 0x4D49_4E45;

/// One epoch of the training log. Wall-clock time is deliberately absent:
/// logs must be byte-identical across reruns.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Mean similarity of every mined negative this epoch, before
    /// truncation to the ranked-list length.
    pub mean_neg_sim: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub config: TrainConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    /// Wall-clock seconds; kept out of serialized artifacts.
    #[serde(skip)]
    pub seconds: f64,
}

/// Recomputes pool descriptors with the current model. Images that yield no
/// keypoints are skipped; a pool where every image is blank is an error.
pub fn refresh_pool(
    pool_images: &[(u32, ImageGray)],
    params: &ModelParams,
    cfg: &TrainConfig,
) -> Result<NegativePool, TrainError> {
    let sets: Vec<Option<DescriptorSet>> = pool_images
        .par_iter()
        .map(|(id, img)| {
            if *id >= POOL_ID_BASE {
                return Err(TrainError::PoolIdTooLarge(*id));
            }
            let kps = detect_harris(img, cfg.keypoints_per_crop, NMS_RADIUS);
            if kps.is_empty() {
                return Ok(None);
            }
            let patches: Vec<_> = kps
                .iter()
                .map(|kp| extract_patch(img, kp, cfg.patch_side))
                .collect();
            let (set, _) = forward(params, &patches, &kps, POOL_ID_BASE + *id)?;
            Ok(Some(set))
        })
        .collect::<Result<_, _>>()?;
    let sets: Vec<DescriptorSet> = sets.into_iter().flatten().collect();
    if sets.is_empty() {
        return Err(TrainError::EmptyPool);
    }
    Ok(NegativePool::from_sets(sets, cfg.aggregation)?)
}

/// Runs the full loop and returns the trained parameters with a report.
/// Equal inputs give bit-equal outputs whatever the thread count.
pub fn train(
    corpus: &[(u32, ImageGray)],
    pool_images: Option<&[(u32, ImageGray)]>,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainReport), TrainError> {
    cfg.validate()?;
    match (cfg.strategy.needs_pool(), pool_images.is_some()) {
        (true, false) => return Err(TrainError::PoolRequired),
        (false, true) => return Err(TrainError::PoolUnused),
        _ => {}
    }

    let t0 = Instant::now();
    let mut params = init_params(
        cfg.patch_side,
        cfg.hidden,
        cfg.dim,
        derive_seed(cfg.seed, INIT_SALT),
    )?;
    let mut state = AdamState::new(&params);
    let mut pool: Option<NegativePool> = None;
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        if let Some(imgs) = pool_images {
            if epoch % cfg.pool_refresh_epochs == 0 {
                pool = Some(refresh_pool(imgs, &params, cfg)?);
            }
        }
        let mut loss_sum = 0.0;
        let mut sim_sum = 0.0;
        let mut sim_count = 0usize;
        for step in 0..cfg.steps_per_epoch {
            let step_seed = cfg.seed ^ (epoch as u64 * 65536 + step as u64);
            let batch = build_batch(corpus, cfg, step_seed)?;
            let (rows, cache) = forward_rows(&params, batch.patches())?;
            let sets = batch.descriptor_sets(&rows, cfg.dim);
            let outcome = mine(
                &cfg.strategy,
                batch.index(),
                &sets,
                pool.as_ref(),
                derive_seed(step_seed, MINE_SALT),
            )?;

            let n_batch_values = rows.len();
            let mut frame = rows;
            frame.extend_from_slice(&outcome.extra_rows);
            let row_count = batch.patches().len() + outcome.extra_sources.len();

            let dim = cfg.dim;
            let mut lists = Vec::with_capacity(batch.index().pairing().len());
            for (&(a, p), mined) in batch
                .index()
                .pairing()
                .iter()
                .zip(outcome.negatives.per_anchor())
            {
                debug_assert_eq!(mined.anchor_index, a);
                let s_pos = similarity(
                    &frame[a * dim..(a + 1) * dim],
                    &frame[p * dim..(p + 1) * dim],
                )?;
                for &(_, s) in &mined.negatives {
                    sim_sum += s;
                    sim_count += 1;
                }
                let negs: Vec<(usize, f64)> =
                    mined.negatives.iter().take(cfg.top_k).copied().collect();
                lists.push(RankedList::new(a, p, s_pos, negs)?);
            }

            let (loss, grads) = match cfg.loss_kind {
                LossKind::Ap => ap_loss_batch(&lists, &ApConfig { num_bins: cfg.num_bins })?,
                LossKind::Triplet => {
                    triplet_loss_batch(&lists, &TripletConfig { margin: cfg.triplet_margin })?
                }
            };
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss(loss));
            }

            let sim_grads = backprop_similarities(&lists, &grads, &frame, dim, row_count)?;
            let gbuf = backward(&params, &cache, &sim_grads[..n_batch_values])?;
            adam_update(&mut params, &gbuf, &mut state, cfg)?;
            loss_sum += loss;
        }
        epochs.push(EpochRecord {
            epoch,
            mean_loss: loss_sum / cfg.steps_per_epoch as f64,
            mean_neg_sim: if sim_count == 0 {
                0.0
            } else {
                sim_sum / sim_count as f64
            },
        });
    }

    let report = TrainReport {
        epochs,
        config: cfg.clone(),
        checkpoint: None,
        seconds: t0.elapsed().as_secs_f64(),
    };
    Ok((params, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{generate_synthetic_image, CorpusSpec};
    use crate::mining::MiningStrategy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn corpus(n: usize, side: usize) -> Vec<(u32, ImageGray)> {
        (0..n)
            .map(|i| {
                let spec = CorpusSpec {
                    width: side,
                    height: side,
                    element_count: 14,
                };
                (
                    i as u32,
                    generate_synthetic_image(&spec, 70 + i as u64).unwrap().to_gray(),
                )
            })
            .collect()
    }

    fn fast_cfg() -> TrainConfig {
        TrainConfig {
            pairs_per_batch: 2,
            keypoints_per_crop: 6,
            top_k: 6,
            strategy: MiningStrategy::InBatchTopK { k: 6 },
            epochs: 1,
            steps_per_epoch: 2,
            crop_size: 96,
            patch_side: 8,
            hidden: 8,
            dim: 8,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_hand_back_the_untouched_initialization() {
        let corpus = corpus(2, 160);
        let cfg = TrainConfig { epochs: 0, ..fast_cfg() };
        let (params, report) = train(&corpus, None, &cfg).unwrap();
        let fresh = init_params(
            cfg.patch_side,
            cfg.hidden,
            cfg.dim,
            derive_seed(cfg.seed, INIT_SALT),
        )
        .unwrap();
        assert_eq!(params, fresh);
        assert!(report.epochs.is_empty());
    }

    #[test]
    fn training_is_bit_reproducible() {
        let corpus = corpus(3, 160);
        let cfg = fast_cfg();
        let (p1, r1) = train(&corpus, None, &cfg).unwrap();
        let (p2, r2) = train(&corpus, None, &cfg).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(r1.epochs, r2.epochs);
        assert_ne!(
            p1,
            init_params(cfg.patch_side, cfg.hidden, cfg.dim, derive_seed(cfg.seed, INIT_SALT))
                .unwrap(),
            "two steps must move the parameters"
        );
    }

    #[test]
    fn top_k_mines_harder_negatives_than_random_every_epoch() {
        let corpus = corpus(4, 160);
        let base = TrainConfig {
            pairs_per_batch: 3,
            epochs: 2,
            steps_per_epoch: 3,
            ..fast_cfg()
        };
        let topk = TrainConfig {
            strategy: MiningStrategy::InBatchTopK { k: 6 },
            ..base.clone()
        };
        let random = TrainConfig {
            strategy: MiningStrategy::InBatchRandom { k: 6 },
            ..base
        };
        let (_, rt) = train(&corpus, None, &topk).unwrap();
        let (_, rr) = train(&corpus, None, &random).unwrap();
        for (t, r) in rt.epochs.iter().zip(&rr.epochs) {
            assert!(
                t.mean_neg_sim >= r.mean_neg_sim,
                "epoch {}: top-k {} < random {}",
                t.epoch,
                t.mean_neg_sim,
                r.mean_neg_sim
            );
        }
    }

    #[test]
    fn pool_presence_must_match_the_strategy() {
        let corpus = corpus(2, 160);
        let c2f = TrainConfig {
            strategy: MiningStrategy::CoarseToFineTopK { k: 6 },
            ..fast_cfg()
        };
        assert!(matches!(train(&corpus, None, &c2f), Err(TrainError::PoolRequired)));

        let plain = fast_cfg();
        let pool = corpus.clone();
        assert!(matches!(
            train(&corpus, Some(&pool), &plain),
            Err(TrainError::PoolUnused)
        ));
    }

    #[test]
    fn coarse_to_fine_runs_end_to_end() {
        let pool = corpus(5, 160);
        let corpus = corpus(2, 160);
        let cfg = TrainConfig {
            strategy: MiningStrategy::CoarseToFineTopK { k: 6 },
            ..fast_cfg()
        };
        let (params, report) = train(&corpus, Some(&pool), &cfg).unwrap();
        assert_eq!(report.epochs.len(), 1);
        assert!(report.epochs[0].mean_loss.is_finite());
        assert!(params.w1.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn pool_refresh_skips_blank_images_and_namespaces_ids() {
        let params = init_params(8, 8, 8, 1).unwrap();
        let cfg = fast_cfg();
        let blank = ImageGray::new(160, 160).unwrap();
        let mut pool = corpus(2, 160);
        pool.push((7, blank.clone()));
        let built = refresh_pool(&pool, &params, &cfg).unwrap();
        assert_eq!(built.len(), 2);
        assert!(built.get(POOL_ID_BASE).is_some());
        assert!(built.get(POOL_ID_BASE + 1).is_some());

        let all_blank = vec![(0u32, blank)];
        assert!(matches!(
            refresh_pool(&all_blank, &params, &cfg),
            Err(TrainError::EmptyPool)
        ));

        let oversized = vec![(POOL_ID_BASE, corpus(1, 160).remove(0).1)];
        assert!(matches!(
            refresh_pool(&oversized, &params, &cfg),
            Err(TrainError::PoolIdTooLarge(_))
        ));
    }

    // Two blatantly different textures: a coarse checkerboard and jittered
    // noise blocks. Every anchor's positive shows the same texture while
    // all in-batch negatives come from the other class, so the ranking
    // problem is separable and the loss should approach zero.
    fn two_class_corpus(side: usize) -> Vec<(u32, ImageGray)> {
        let mut checker = ImageGray::new(side, side).unwrap();
        for y in 0..side {
            for x in 0..side {
                let v = ((x / 8 + y / 8) % 2) as f64;
                checker.set(x, y, 0.1 + 0.8 * v);
            }
        }
        let mut noise = ImageGray::new(side, side).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for by in 0..side / 4 {
            for bx in 0..side / 4 {
                let v = rng.random::<f64>();
                for y in 0..4 {
                    for x in 0..4 {
                        noise.set(bx * 4 + x, by * 4 + y, v);
                    }
                }
            }
        }
        vec![(0, checker), (1, noise)]
    }

    #[test]
    fn separable_textures_drive_the_ap_loss_toward_zero() {
        let corpus = two_class_corpus(160);
        let cfg = TrainConfig {
            pairs_per_batch: 2,
            keypoints_per_crop: 8,
            top_k: 8,
            strategy: MiningStrategy::InBatchTopK { k: 8 },
            epochs: 5,
            steps_per_epoch: 50,
            crop_size: 64,
            patch_side: 16,
            hidden: 16,
            dim: 8,
            seed: 2,
            ..TrainConfig::default()
        };
        let (_, report) = train(&corpus, None, &cfg).unwrap();
        let last = report.epochs.last().unwrap();
        assert!(
            last.mean_loss < 0.05,
            "loss stuck at {} after 250 steps",
            last.mean_loss
        );
    }
}
