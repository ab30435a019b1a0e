use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::select::{build_frame, dot, sort_hardest_first, Frame};
use super::types::{
    Aggregation, AnchorNegatives, BatchIndex, CropRole, GlobalDescriptor, MinedNegatives,
    NegativePool,
};
use super::MiningError;
use crate::descriptor::DescriptorSet;

/// Result of a mining dispatch. Negative indices refer to the frame the
/// mining ran over: the batch rows, then `extra_rows` appended in order.
#[derive(Clone, Debug)]
pub struct MiningOutcome {
    pub negatives: MinedNegatives,
    /// Row-major pool rows appended after the batch frame. These received
    /// no gradient: they are constants for the step that mined them.
    pub extra_rows: Vec<f64>,
    /// Source image id of each appended row.
    pub extra_sources: Vec<u32>,
}

impl MiningOutcome {
    pub(super) fn batch_only(negatives: MinedNegatives) -> Self {
        Self {
            negatives,
            extra_rows: Vec::new(),
            extra_sources: Vec::new(),
        }
    }
}

fn aggregate_rows(rows: &[&[f64]], dim: usize, aggregation: Aggregation) -> Result<Vec<f64>, MiningError> {
    if rows.is_empty() {
        return Err(MiningError::EmptySet);
    }
    let mut v = vec![0.0; dim];
    match aggregation {
        Aggregation::SumRenorm => {
            for row in rows {
                for (vi, xi) in v.iter_mut().zip(*row) {
                    *vi += xi;
                }
            }
        }
        Aggregation::GeneralizedMean => {
            for row in rows {
                for (vi, xi) in v.iter_mut().zip(*row) {
                    *vi += xi.abs().powi(3);
                }
            }
            let n = rows.len() as f64;
            for vi in v.iter_mut() {
                *vi = (*vi / n).cbrt();
            }
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Err(MiningError::DegenerateAggregate(norm));
    }
    for vi in v.iter_mut() {
        *vi /= norm;
    }
    Ok(v)
}

/// Collapses a set of unit local descriptors into one unit global.
pub fn aggregate_global_descriptor(
    set: &DescriptorSet,
    aggregation: Aggregation,
) -> Result<GlobalDescriptor, MiningError> {
    let rows: Vec<&[f64]> = (0..set.count()).map(|r| set.row(r)).collect();
    GlobalDescriptor::new(aggregate_rows(&rows, set.dim(), aggregation)?)
}

/// Nearest pool image for each batch image, never the image itself. Ties go
/// to the lower image id.
pub fn retrieve_negative_images(
    batch_globals: &[(u32, GlobalDescriptor)],
    pool: &NegativePool,
) -> Result<Vec<u32>, MiningError> {
    batch_globals
        .iter()
        .map(|(query_id, g)| {
            let mut best: Option<(u32, f64)> = None;
            for e in pool.entries() {
                if e.image_id == *query_id {
                    continue;
                }
                if e.global.dim() != g.dim() {
                    return Err(MiningError::DimMismatch {
                        left: g.dim(),
                        right: e.global.dim(),
                    });
                }
                let s = dot(g.values(), e.global.values());
                let better = match best {
                    None => true,
                    Some((bid, bs)) => s > bs || (s == bs && e.image_id < bid),
                };
                if better {
                    best = Some((e.image_id, s));
                }
            }
            best.map(|(id, _)| id)
                .ok_or(MiningError::PoolOnlyQuery(*query_id))
        })
        .collect()
}

/// One global per batch source image, aggregated from its anchor-crop rows
/// with the pool's own aggregation, ascending image id.
fn batch_image_globals(
    batch: &BatchIndex,
    frame: &Frame,
    aggregation: Aggregation,
) -> Result<Vec<(u32, GlobalDescriptor)>, MiningError> {
    let mut by_image: BTreeMap<u32, Vec<&[f64]>> = BTreeMap::new();
    for (g, r) in batch.records().iter().enumerate() {
        if r.role == CropRole::Anchor {
            by_image.entry(r.source_image_id).or_default().push(frame.rows[g]);
        }
    }
    by_image
        .into_iter()
        .map(|(id, rows)| {
            let v = aggregate_rows(&rows, frame.dim, aggregation)?;
            Ok((id, GlobalDescriptor::new(v)?))
        })
        .collect()
}

/// Top-k mining over the batch frame extended with retrieved pool images.
///
/// Retrieval runs once per batch image on its global descriptor; images
/// already in the batch are dropped, the rest append their descriptor rows
/// after the batch rows (ascending image id). Selection then follows the
/// top-k rule with the usual source-image exclusion. `_seed` is unused:
/// the selection is deterministic, the parameter mirrors the seeded scopes.
pub fn mine_coarse_to_fine(
    k: usize,
    batch: &BatchIndex,
    sets: &[DescriptorSet],
    pool: &NegativePool,
    _seed: u64,
) -> Result<MiningOutcome, MiningError> {
    if k == 0 {
        return Err(MiningError::BadK);
    }
    if batch.distinct_sources() < 2 {
        return Err(MiningError::SingleImageBatch);
    }
    let frame = build_frame(batch, sets)?;
    let globals = batch_image_globals(batch, &frame, pool.aggregation())?;
    let retrieved = retrieve_negative_images(&globals, pool)?;

    let batch_ids: BTreeSet<u32> = batch.records().iter().map(|r| r.source_image_id).collect();
    let mut extra_ids: Vec<u32> = retrieved
        .into_iter()
        .filter(|id| !batch_ids.contains(id))
        .collect();
    extra_ids.sort_unstable();
    extra_ids.dedup();

    let mut all_rows: Vec<&[f64]> = frame.rows.clone();
    let mut all_sources: Vec<u32> = batch.records().iter().map(|r| r.source_image_id).collect();
    for &id in &extra_ids {
        let entry = pool.get(id).expect("retrieved ids come from the pool");
        if entry.descriptors.dim() != frame.dim {
            return Err(MiningError::DimMismatch {
                left: frame.dim,
                right: entry.descriptors.dim(),
            });
        }
        for r in 0..entry.descriptors.count() {
            all_rows.push(entry.descriptors.row(r));
            all_sources.push(id);
        }
    }

    let per_anchor: Vec<AnchorNegatives> = batch
        .pairing()
        .par_iter()
        .map(|&(a, _)| {
            let own = all_sources[a];
            let mut scored: Vec<(usize, f64)> = (0..all_rows.len())
                .filter(|&g| all_sources[g] != own)
                .map(|g| (g, dot(all_rows[a], all_rows[g])))
                .collect();
            sort_hardest_first(&mut scored);
            scored.truncate(k);
            AnchorNegatives {
                anchor_index: a,
                negatives: scored,
            }
        })
        .collect();

    let n_batch = frame.rows.len();
    let mut extra_rows = Vec::with_capacity((all_rows.len() - n_batch) * frame.dim);
    for row in &all_rows[n_batch..] {
        extra_rows.extend_from_slice(row);
    }
    Ok(MiningOutcome {
        negatives: MinedNegatives::new(per_anchor),
        extra_rows,
        extra_sources: all_sources[n_batch..].to_vec(),
    })
}
