use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use super::global::{mine_coarse_to_fine, MiningOutcome};
use super::types::{
    AnchorNegatives, BatchIndex, MinedNegatives, MiningStrategy, NegativePool,
};
use super::MiningError;
use crate::descriptor::DescriptorSet;
use crate::seeds::derive_seed;

/// Dot product of two unit descriptors.
pub fn similarity(a: &[f64], b: &[f64]) -> Result<f64, MiningError> {
    if a.len() != b.len() {
        return Err(MiningError::DimMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(dot(a, b))
}

pub(super) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-major count(A) x count(B) matrix of pairwise similarities.
pub fn similarity_matrix(a: &DescriptorSet, b: &DescriptorSet) -> Result<Vec<f64>, MiningError> {
    if a.dim() != b.dim() {
        return Err(MiningError::DimMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let (n, m) = (a.count(), b.count());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            out[i * m + j] = dot(a.row(i), b.row(j));
        }
    }
    Ok(out)
}

/// Sorts scored candidates hardest first; equal similarities go to the
/// lower index. Every selection rule in this module funnels through this
/// ordering, which is what makes the oracles exact.
pub(super) fn sort_hardest_first(v: &mut [(usize, f64)]) {
    v.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("similarities are finite").then(a.0.cmp(&b.0)));
}

/// Borrowed row view over the concatenated batch sets.
pub(super) struct Frame<'a> {
    pub rows: Vec<&'a [f64]>,
    pub dim: usize,
}

/// Concatenates the sets in order and checks they line up with the index:
/// same row count, one dimension, and per-row source image agreement.
pub(super) fn build_frame<'a>(
    batch: &BatchIndex,
    sets: &'a [DescriptorSet],
) -> Result<Frame<'a>, MiningError> {
    let dim = sets.first().map_or(0, |s| s.dim());
    let mut rows = Vec::with_capacity(batch.len());
    for s in sets {
        if s.dim() != dim {
            return Err(MiningError::DimMismatch {
                left: dim,
                right: s.dim(),
            });
        }
        for r in 0..s.count() {
            rows.push(s.row(r));
        }
    }
    if rows.len() != batch.len() {
        return Err(MiningError::RowCountMismatch {
            records: batch.len(),
            rows: rows.len(),
        });
    }
    let mut g = 0;
    for s in sets {
        for _ in 0..s.count() {
            if batch.records()[g].source_image_id != s.image_id() {
                return Err(MiningError::RecordSetMismatch { index: g });
            }
            g += 1;
        }
    }
    Ok(Frame { rows, dim })
}

/// Hardest non-matching positive within one correspondence pair.
///
/// `pairing[i]` names anchor i's own positive, the only excluded candidate.
/// Returned indices point into `positives`.
pub fn mine_in_pair(
    anchors: &DescriptorSet,
    positives: &DescriptorSet,
    pairing: &[usize],
) -> Result<MinedNegatives, MiningError> {
    if anchors.dim() != positives.dim() {
        return Err(MiningError::DimMismatch {
            left: anchors.dim(),
            right: positives.dim(),
        });
    }
    let m = anchors.count();
    if m < 2 {
        return Err(MiningError::TooFewCorrespondences(m));
    }
    if positives.count() != m || pairing.len() != m {
        return Err(MiningError::BadPairing(format!(
            "{m} anchors vs {} positives and {} pairing entries",
            positives.count(),
            pairing.len()
        )));
    }
    let mut seen = vec![false; m];
    for &p in pairing {
        if p >= m || seen[p] {
            return Err(MiningError::BadPairing(format!(
                "pairing is not a permutation of 0..{m}"
            )));
        }
        seen[p] = true;
    }
    let per_anchor = (0..m)
        .map(|i| {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..m {
                if j == pairing[i] {
                    continue;
                }
                let s = dot(anchors.row(i), positives.row(j));
                // Strict improvement keeps the lowest index on ties.
                if best.is_none_or(|(_, bs)| s > bs) {
                    best = Some((j, s));
                }
            }
            AnchorNegatives {
                anchor_index: i,
                negatives: vec![best.expect("m >= 2 leaves a candidate")],
            }
        })
        .collect();
    Ok(MinedNegatives::new(per_anchor))
}

/// Batch-scope mining: candidates for an anchor are every frame row whose
/// source image differs from the anchor's, ordered hardest first.
pub fn mine_in_batch(
    strategy: &MiningStrategy,
    batch: &BatchIndex,
    sets: &[DescriptorSet],
    seed: u64,
) -> Result<MinedNegatives, MiningError> {
    strategy.validate()?;
    if matches!(
        strategy,
        MiningStrategy::InPair | MiningStrategy::CoarseToFineTopK { .. }
    ) {
        return Err(MiningError::WrongScope(strategy.name()));
    }
    if batch.distinct_sources() < 2 {
        return Err(MiningError::SingleImageBatch);
    }
    let frame = build_frame(batch, sets)?;
    let per_anchor = batch
        .pairing()
        .par_iter()
        .map(|&(a, _)| {
            let own = batch.records()[a].source_image_id;
            let candidates: Vec<usize> = (0..batch.len())
                .filter(|&g| batch.records()[g].source_image_id != own)
                .collect();
            select_for_anchor(strategy, a, &candidates, &frame, seed)
        })
        .collect();
    Ok(MinedNegatives::new(per_anchor))
}

fn select_for_anchor(
    strategy: &MiningStrategy,
    anchor: usize,
    candidates: &[usize],
    frame: &Frame,
    seed: u64,
) -> AnchorNegatives {
    let ra = frame.rows[anchor];
    let score = |g: usize| (g, dot(ra, frame.rows[g]));
    let mut scored: Vec<(usize, f64)> = match strategy {
        MiningStrategy::InBatchAll => candidates.iter().map(|&g| score(g)).collect(),
        MiningStrategy::InBatchTopK { .. } => candidates.iter().map(|&g| score(g)).collect(),
        MiningStrategy::InBatchRandom { k } => {
            let take = (*k).min(candidates.len());
            let mut pool = candidates.to_vec();
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, anchor as u64));
            // Partial Fisher-Yates: the first `take` slots become the sample.
            for i in 0..take {
                let j = rng.random_range(i..pool.len());
                pool.swap(i, j);
            }
            pool[..take].iter().map(|&g| score(g)).collect()
        }
        MiningStrategy::InPair | MiningStrategy::CoarseToFineTopK { .. } => {
            unreachable!("rejected by the scope check")
        }
    };
    sort_hardest_first(&mut scored);
    if let MiningStrategy::InBatchTopK { k } = strategy {
        scored.truncate(*k);
    }
    AnchorNegatives {
        anchor_index: anchor,
        negatives: scored,
    }
}

/// Routes a strategy to its scope. Results always index the frame the
/// negatives were mined over; coarse-to-fine extends that frame with pool
/// rows and reports them in the outcome so gradients can reach the anchors.
pub fn mine(
    strategy: &MiningStrategy,
    batch: &BatchIndex,
    sets: &[DescriptorSet],
    pool: Option<&NegativePool>,
    seed: u64,
) -> Result<MiningOutcome, MiningError> {
    match strategy {
        MiningStrategy::InPair => in_pair_over_frame(batch, sets).map(MiningOutcome::batch_only),
        MiningStrategy::InBatchAll
        | MiningStrategy::InBatchRandom { .. }
        | MiningStrategy::InBatchTopK { .. } => {
            mine_in_batch(strategy, batch, sets, seed).map(MiningOutcome::batch_only)
        }
        MiningStrategy::CoarseToFineTopK { k } => {
            let pool = pool.ok_or(MiningError::MissingPool)?;
            mine_coarse_to_fine(*k, batch, sets, pool, seed)
        }
    }
}

/// In-pair mining expressed over the batch frame: each anchor's candidates
/// are the other positives of its own pair, reported as frame indices.
fn in_pair_over_frame(
    batch: &BatchIndex,
    sets: &[DescriptorSet],
) -> Result<MinedNegatives, MiningError> {
    let frame = build_frame(batch, sets)?;
    let mut positives_of: HashMap<usize, Vec<usize>> = HashMap::new();
    for &(_, p) in batch.pairing() {
        positives_of
            .entry(batch.records()[p].pair_id)
            .or_default()
            .push(p);
    }
    for group in positives_of.values_mut() {
        group.sort_unstable();
    }
    let per_anchor = batch
        .pairing()
        .iter()
        .map(|&(a, p)| {
            let group = &positives_of[&batch.records()[a].pair_id];
            if group.len() < 2 {
                return Err(MiningError::TooFewCorrespondences(group.len()));
            }
            let mut best: Option<(usize, f64)> = None;
            for &g in group {
                if g == p {
                    continue;
                }
                let s = dot(frame.rows[a], frame.rows[g]);
                if best.is_none_or(|(_, bs)| s > bs) {
                    best = Some((g, s));
                }
            }
            Ok(AnchorNegatives {
                anchor_index: a,
                negatives: vec![best.expect("group has another positive")],
            })
        })
        .collect::<Result<Vec<_>, MiningError>>()?;
    Ok(MinedNegatives::new(per_anchor))
}
