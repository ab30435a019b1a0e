use super::{LossError, LossOutput, RankedList};

/// Chain rule from similarity gradients to descriptor-row gradients.
///
/// Every similarity is a dot product s = a . b, so a gradient g on s adds
/// g*b to a's row and g*a to b's. Lists index into `rows`, a row-major
/// `row_count` x `dim` frame that may extend past the batch with mined pool
/// rows; the caller decides which leading slice feeds the model backward.
/// Accumulation order is the list order, so the result is deterministic.
pub fn backprop_similarities(
    lists: &[RankedList],
    grads: &[LossOutput],
    rows: &[f64],
    dim: usize,
    row_count: usize,
) -> Result<Vec<f64>, LossError> {
    if lists.len() != grads.len() {
        return Err(LossError::GradShapeMismatch {
            got: grads.len(),
            want: lists.len(),
        });
    }
    if rows.len() != dim * row_count {
        return Err(LossError::GradShapeMismatch {
            got: rows.len(),
            want: dim * row_count,
        });
    }
    let check = |index: usize| {
        if index < row_count {
            Ok(index)
        } else {
            Err(LossError::IndexOutOfRange {
                index,
                rows: row_count,
            })
        }
    };
    let mut out = vec![0.0; rows.len()];
    for (list, g) in lists.iter().zip(grads) {
        if g.d_s_negs.len() != list.negatives().len() {
            return Err(LossError::GradShapeMismatch {
                got: g.d_s_negs.len(),
                want: list.negatives().len(),
            });
        }
        let a = check(list.anchor_index())?;
        let p = check(list.positive_index())?;
        accumulate(&mut out, rows, dim, a, p, g.d_s_pos);
        accumulate(&mut out, rows, dim, p, a, g.d_s_pos);
        for (&(idx, _), &gk) in list.negatives().iter().zip(&g.d_s_negs) {
            let ni = check(idx)?;
            accumulate(&mut out, rows, dim, a, ni, gk);
            accumulate(&mut out, rows, dim, ni, a, gk);
        }
    }
    Ok(out)
}

/// out[target] += g * rows[source]
fn accumulate(out: &mut [f64], rows: &[f64], dim: usize, target: usize, source: usize, g: f64) {
    let (t, s) = (target * dim, source * dim);
    for i in 0..dim {
        out[t + i] += g * rows[s + i];
    }
}
