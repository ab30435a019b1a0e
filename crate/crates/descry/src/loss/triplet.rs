use super::{LossError, LossOutput, RankedList};

/// Margin of the similarity-form triplet hinge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TripletConfig {
    pub margin: f64,
}

impl Default for TripletConfig {
    fn default() -> Self {
        Self { margin: 0.4 }
    }
}

impl TripletConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if !self.margin.is_finite() || self.margin <= 0.0 {
            return Err(LossError::BadMargin(self.margin));
        }
        Ok(())
    }
}

/// Similarity-form hinge: max(0, margin - s_pos + s_neg) with gradients
/// (-1, +1) while active and (0, 0) otherwise, the hinge point counting as
/// inactive.
pub fn triplet_loss(
    s_pos: f64,
    s_neg: f64,
    cfg: &TripletConfig,
) -> Result<(f64, f64, f64), LossError> {
    cfg.validate()?;
    let v = cfg.margin - s_pos + s_neg;
    if v > 0.0 {
        Ok((v, -1.0, 1.0))
    } else {
        Ok((0.0, 0.0, 0.0))
    }
}

/// Mean hinge over the batch, each anchor against its hardest negative
/// (the head of its sorted list). Gradients are of the batch mean; only
/// the hardest slot of each `d_s_negs` can be nonzero.
pub fn triplet_loss_batch(
    lists: &[RankedList],
    cfg: &TripletConfig,
) -> Result<(f64, Vec<LossOutput>), LossError> {
    if lists.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    cfg.validate()?;
    let n = lists.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(lists.len());
    for list in lists {
        let hardest = list.negatives()[0].1;
        let (v, dp, dn) = triplet_loss(list.s_pos(), hardest, cfg)?;
        loss += v / n;
        let mut d_s_negs = vec![0.0; list.negatives().len()];
        d_s_negs[0] = dn / n;
        grads.push(LossOutput {
            value: v,
            d_s_pos: dp / n,
            d_s_negs,
        });
    }
    Ok((loss, grads))
}
