use serde::{Deserialize, Serialize};

use super::MiningError;
use crate::descriptor::DescriptorSet;

/// Which crop of a pair a descriptor row came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CropRole {
    Anchor,
    Positive,
}

/// Provenance of one row in a batch descriptor frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DescriptorRecord {
    pub source_image_id: u32,
    pub pair_id: usize,
    pub role: CropRole,
}

/// Maps every row of a batch frame to its provenance, plus the
/// anchor-to-positive pairing induced by the correspondences.
///
/// Row `g` of the frame is described by `records()[g]`. `pairing()` holds
/// `(anchor, positive)` frame indices, one entry per correspondence, and is
/// a bijection: every record appears in it exactly once.
#[derive(Clone, Debug)]
pub struct BatchIndex {
    records: Vec<DescriptorRecord>,
    pairing: Vec<(usize, usize)>,
}

impl BatchIndex {
    pub fn new(
        records: Vec<DescriptorRecord>,
        pairing: Vec<(usize, usize)>,
    ) -> Result<Self, MiningError> {
        let n = records.len();
        let bad = |msg: String| Err(MiningError::BadPairing(msg));
        let mut seen_anchor = vec![false; n];
        let mut seen_positive = vec![false; n];
        for &(a, p) in &pairing {
            if a >= n || p >= n {
                return bad(format!("entry ({a}, {p}) is out of range for {n} records"));
            }
            if records[a].role != CropRole::Anchor {
                return bad(format!("index {a} is not an anchor"));
            }
            if records[p].role != CropRole::Positive {
                return bad(format!("index {p} is not a positive"));
            }
            if records[a].pair_id != records[p].pair_id {
                return bad(format!("indices {a} and {p} belong to different pairs"));
            }
            if records[a].source_image_id != records[p].source_image_id {
                return bad(format!("indices {a} and {p} come from different source images"));
            }
            if seen_anchor[a] {
                return bad(format!("anchor {a} is paired twice"));
            }
            if seen_positive[p] {
                return bad(format!("positive {p} is paired twice"));
            }
            seen_anchor[a] = true;
            seen_positive[p] = true;
        }
        // Distinctness plus this count force every record into the pairing.
        if 2 * pairing.len() != n {
            return bad(format!(
                "{} entries cannot cover {n} records",
                pairing.len()
            ));
        }
        Ok(Self { records, pairing })
    }

    pub fn records(&self) -> &[DescriptorRecord] {
        &self.records
    }

    pub fn pairing(&self) -> &[(usize, usize)] {
        &self.pairing
    }

    /// Number of rows in the frame this index describes.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of distinct source images contributing rows.
    pub fn distinct_sources(&self) -> usize {
        let mut ids: Vec<u32> = self.records.iter().map(|r| r.source_image_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }
}

/// Scope and rule for negative selection.
///
/// Coarse-to-fine carries only its k; the pool it draws from is handed to
/// the mining call separately so the strategy stays a plain config value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MiningStrategy {
    /// Hardest other positive within the anchor's own pair.
    InPair,
    /// Every cross-image descriptor in the batch, sorted by similarity.
    InBatchAll,
    /// k cross-image descriptors sampled without replacement.
    InBatchRandom { k: usize },
    /// The k most similar cross-image descriptors.
    InBatchTopK { k: usize },
    /// Top-k over the batch extended with retrieved pool images.
    CoarseToFineTopK { k: usize },
}

impl MiningStrategy {
    pub fn k(&self) -> Option<usize> {
        match self {
            Self::InPair | Self::InBatchAll => None,
            Self::InBatchRandom { k } | Self::InBatchTopK { k } | Self::CoarseToFineTopK { k } => {
                Some(*k)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::InPair => "in_pair",
            Self::InBatchAll => "in_batch_all",
            Self::InBatchRandom { .. } => "in_batch_random",
            Self::InBatchTopK { .. } => "in_batch_top_k",
            Self::CoarseToFineTopK { .. } => "coarse_to_fine_top_k",
        }
    }

    pub fn needs_pool(&self) -> bool {
        matches!(self, Self::CoarseToFineTopK { .. })
    }

    pub fn validate(&self) -> Result<(), MiningError> {
        match self.k() {
            Some(0) => Err(MiningError::BadK),
            _ => Ok(()),
        }
    }
}

/// Unit-norm image-level descriptor.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalDescriptor {
    v: Vec<f64>,
}

pub(crate) const UNIT_NORM_TOL: f64 = 1e-6;

impl GlobalDescriptor {
    pub fn new(v: Vec<f64>) -> Result<Self, MiningError> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if v.is_empty() || !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(MiningError::NotUnitNorm(norm));
        }
        Ok(Self { v })
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }
}

/// Negatives selected for one anchor, hardest first.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorNegatives {
    /// Index of the anchor in the frame the mining ran over.
    pub anchor_index: usize,
    /// (descriptor frame index, similarity), similarity non-increasing.
    pub negatives: Vec<(usize, f64)>,
}

/// Per-anchor mined negatives, one entry per pairing entry, in order.
#[derive(Clone, Debug, PartialEq)]
pub struct MinedNegatives {
    per_anchor: Vec<AnchorNegatives>,
}

impl MinedNegatives {
    pub(crate) fn new(per_anchor: Vec<AnchorNegatives>) -> Self {
        debug_assert!(per_anchor
            .iter()
            .all(|a| a.negatives.windows(2).all(|w| w[0].1 >= w[1].1)));
        Self { per_anchor }
    }

    pub fn per_anchor(&self) -> &[AnchorNegatives] {
        &self.per_anchor
    }

    pub fn len(&self) -> usize {
        self.per_anchor.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_anchor.is_empty()
    }
}

/// How local descriptors collapse into an image-level descriptor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Sum of the unit rows, renormalized.
    SumRenorm,
    /// Generalized mean with exponent 3 over coordinate magnitudes.
    GeneralizedMean,
}

/// One retrievable image: its id, global descriptor, and local descriptors.
#[derive(Clone, Debug)]
pub struct PoolEntry {
    pub image_id: u32,
    pub global: GlobalDescriptor,
    pub descriptors: DescriptorSet,
}

/// Images available as retrieval negatives.
///
/// Ids are distinct and every entry's descriptors agree on dimension. The
/// aggregation that produced the globals travels with the pool so batch
/// globals can be computed the same way at query time.
#[derive(Clone, Debug)]
pub struct NegativePool {
    entries: Vec<PoolEntry>,
    aggregation: Aggregation,
}

impl NegativePool {
    pub fn new(entries: Vec<PoolEntry>, aggregation: Aggregation) -> Result<Self, MiningError> {
        if entries.is_empty() {
            return Err(MiningError::EmptyPool);
        }
        let mut ids: Vec<u32> = entries.iter().map(|e| e.image_id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(MiningError::DuplicatePoolId(w[0]));
        }
        let dim = entries[0].global.dim();
        for e in &entries {
            if e.global.dim() != dim {
                return Err(MiningError::DimMismatch {
                    left: dim,
                    right: e.global.dim(),
                });
            }
            if e.descriptors.dim() != dim {
                return Err(MiningError::DimMismatch {
                    left: dim,
                    right: e.descriptors.dim(),
                });
            }
            if e.descriptors.image_id() != e.image_id {
                return Err(MiningError::BadPoolEntry(
                    e.image_id,
                    format!("descriptor set claims image {}", e.descriptors.image_id()),
                ));
            }
        }
        Ok(Self {
            entries,
            aggregation,
        })
    }

    /// Builds entries by aggregating each set's rows with `aggregation`.
    pub fn from_sets(
        sets: Vec<DescriptorSet>,
        aggregation: Aggregation,
    ) -> Result<Self, MiningError> {
        let entries = sets
            .into_iter()
            .map(|s| {
                let global = super::aggregate_global_descriptor(&s, aggregation)?;
                Ok(PoolEntry {
                    image_id: s.image_id(),
                    global,
                    descriptors: s,
                })
            })
            .collect::<Result<Vec<_>, MiningError>>()?;
        Self::new(entries, aggregation)
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn aggregation(&self) -> Aggregation {
        self.aggregation
    }

    pub fn get(&self, image_id: u32) -> Option<&PoolEntry> {
        self.entries.iter().find(|e| e.image_id == image_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
