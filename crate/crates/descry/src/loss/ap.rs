use rayon::prelude::*;

use super::{LossError, LossOutput, RankedList};

/// Quantization of the soft average-precision surrogate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ApConfig {
    pub num_bins: usize,
}

impl Default for ApConfig {
    fn default() -> Self {
        Self { num_bins: 25 }
    }
}

impl ApConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if self.num_bins < 2 {
            return Err(LossError::BadBinCount(self.num_bins));
        }
        Ok(())
    }
}

/// Soft AP of one list and its exact derivatives.
#[derive(Clone, Debug)]
pub struct ApOutput {
    pub ap: f64,
    pub d_s_pos: f64,
    pub d_s_negs: Vec<f64>,
}

/// Triangular kernel around bin center `b`, support width 2*delta.
fn tri(s: f64, b: f64, delta: f64) -> f64 {
    (1.0 - (s - b).abs() / delta).max(0.0)
}

/// Derivative of `tri` in s. At the kinks: right-sided value at the center,
/// zero at the support edge.
fn tri_d(s: f64, b: f64, delta: f64) -> f64 {
    let d = s - b;
    if d.abs() >= delta {
        0.0
    } else if d >= 0.0 {
        -1.0 / delta
    } else {
        1.0 / delta
    }
}

/// Soft-binned average precision of a single-positive ranked list.
///
/// Bin centers run from +1 down to -1, spaced delta = 2/(num_bins - 1).
/// Each similarity spreads its unit mass over the one or two bins whose
/// centers are within delta; prefix ratios of positive to total mass,
/// weighted by the positive's own mass, give the AP. Inputs are clamped to
/// [-1, 1]; a clamped input gets zero gradient.
///
/// The returned derivatives are the exact ones of this finite expression,
/// with the kink conventions of `tri_d`.
pub fn soft_binned_ap(list: &RankedList, cfg: &ApConfig) -> Result<ApOutput, LossError> {
    cfg.validate()?;
    let mb = cfg.num_bins;
    let delta = 2.0 / (mb as f64 - 1.0);
    let centers: Vec<f64> = (0..mb).map(|m| 1.0 - m as f64 * delta).collect();
    let s_pos = list.s_pos().clamp(-1.0, 1.0);
    let negs: Vec<f64> = list
        .negatives()
        .iter()
        .map(|n| n.1.clamp(-1.0, 1.0))
        .collect();

    // Prefix masses C+ and C- over bins 0..=m, highest similarity first.
    let h_pos: Vec<f64> = centers.iter().map(|&b| tri(s_pos, b, delta)).collect();
    let mut h_neg = vec![0.0; mb];
    for &s in &negs {
        for (m, &b) in centers.iter().enumerate() {
            h_neg[m] += tri(s, b, delta);
        }
    }
    let mut cp = vec![0.0; mb];
    let mut cn = vec![0.0; mb];
    let (mut ap_acc, mut an_acc) = (0.0, 0.0);
    for m in 0..mb {
        ap_acc += h_pos[m];
        an_acc += h_neg[m];
        cp[m] = ap_acc;
        cn[m] = an_acc;
    }

    let mut ap = 0.0;
    for m in 0..mb {
        let c = cp[m] + cn[m];
        if c > 0.0 {
            ap += cp[m] / c * h_pos[m];
        }
    }
    // The two adjacent kernel masses sum to 1 only up to roundoff; pin the
    // value into its stated range. Gradients stay those of the raw sum.
    ap = ap.clamp(0.0, 1.0);

    // d(AP)/d(s_pos): both the positive's histogram and C+ move.
    let dp: Vec<f64> = centers.iter().map(|&b| tri_d(s_pos, b, delta)).collect();
    let mut d_s_pos = 0.0;
    let mut dp_prefix = 0.0;
    for m in 0..mb {
        dp_prefix += dp[m];
        let c = cp[m] + cn[m];
        if c > 0.0 {
            d_s_pos += dp_prefix * cn[m] / (c * c) * h_pos[m] + cp[m] / c * dp[m];
        }
    }
    if !(-1.0..=1.0).contains(&list.s_pos()) {
        d_s_pos = 0.0;
    }

    // d(AP)/d(s_neg_k): only C- moves, through the k-th kernel.
    let d_s_negs: Vec<f64> = negs
        .iter()
        .zip(list.negatives())
        .map(|(&s, raw)| {
            if !(-1.0..=1.0).contains(&raw.1) {
                return 0.0;
            }
            let mut e_prefix = 0.0;
            let mut g = 0.0;
            for m in 0..mb {
                e_prefix += tri_d(s, centers[m], delta);
                let c = cp[m] + cn[m];
                if c > 0.0 {
                    g -= h_pos[m] * cp[m] / (c * c) * e_prefix;
                }
            }
            g
        })
        .collect();

    Ok(ApOutput {
        ap,
        d_s_pos,
        d_s_negs,
    })
}

/// Average precision of a single-positive list: 1 over the positive's rank,
/// with ties counted against the positive.
pub fn exact_ap(list: &RankedList) -> f64 {
    let above = list
        .negatives()
        .iter()
        .filter(|n| n.1 >= list.s_pos())
        .count();
    1.0 / (1 + above) as f64
}

/// Mean of (1 - AP') over the batch, with per-list gradients of that mean.
pub fn ap_loss_batch(
    lists: &[RankedList],
    cfg: &ApConfig,
) -> Result<(f64, Vec<LossOutput>), LossError> {
    if lists.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let outs: Vec<ApOutput> = lists
        .par_iter()
        .map(|l| soft_binned_ap(l, cfg))
        .collect::<Result<_, _>>()?;
    let n = lists.len() as f64;
    let loss = outs.iter().map(|o| 1.0 - o.ap).sum::<f64>() / n;
    let grads = outs
        .into_iter()
        .map(|o| LossOutput {
            value: 1.0 - o.ap,
            d_s_pos: -o.d_s_pos / n,
            d_s_negs: o.d_s_negs.into_iter().map(|g| -g / n).collect(),
        })
        .collect();
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn list(s_pos: f64, negs: &[f64]) -> RankedList {
        let tagged = negs.iter().enumerate().map(|(i, &s)| (10 + i, s)).collect();
        RankedList::new(0, 1, s_pos, tagged).unwrap()
    }

    const CFG: ApConfig = ApConfig { num_bins: 25 };
    const DELTA: f64 = 2.0 / 24.0;

    #[test]
    fn separated_positive_scores_one() {
        let negs: Vec<f64> = (0..10).map(|i| 1.0 - 2.0 * DELTA - 0.02 * i as f64).collect();
        let out = soft_binned_ap(&list(1.0, &negs), &CFG).unwrap();
        assert_eq!(out.ap, 1.0);
    }

    #[test]
    fn positive_under_one_negative_scores_half() {
        for mb in [3, 9, 25, 101] {
            let out = soft_binned_ap(&list(-1.0, &[1.0]), &ApConfig { num_bins: mb }).unwrap();
            assert!(
                (out.ap - 0.5).abs() < 1e-12,
                "num_bins {mb} gave ap {}",
                out.ap
            );
        }
    }

    #[test]
    fn ap_stays_in_unit_interval() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..200 {
            let s_pos = rng.random::<f64>() * 2.0 - 1.0;
            let negs: Vec<f64> = (0..20).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let out = soft_binned_ap(&list(s_pos, &negs), &CFG).unwrap();
            assert!((0.0..=1.0).contains(&out.ap));
        }
    }

    #[test]
    fn raising_the_positive_helps_at_bin_centers() {
        // Between centers the positive's mass splits over two bins, and the
        // split itself can cost precision against a nearby harder negative,
        // so pointwise monotonicity in s_pos does not hold. On the center
        // lattice the ranking only improves as s_pos rises.
        let delta = 2.0 / (CFG.num_bins - 1) as f64;
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..200 {
            let negs: Vec<f64> = (0..20).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let mut prev = -1.0;
            for m in (0..CFG.num_bins).rev() {
                let center = 1.0 - m as f64 * delta;
                let out = soft_binned_ap(&list(center, &negs), &CFG).unwrap();
                assert!(
                    out.ap >= prev - 1e-12,
                    "ap dropped from {prev} to {} at center {center}",
                    out.ap
                );
                prev = out.ap;
            }
        }
    }

    #[test]
    fn bad_bin_counts_are_rejected() {
        for mb in [0, 1] {
            assert!(matches!(
                soft_binned_ap(&list(0.0, &[0.1]), &ApConfig { num_bins: mb }),
                Err(LossError::BadBinCount(_))
            ));
        }
    }

    #[test]
    fn exact_ap_counts_rank() {
        assert_eq!(exact_ap(&list(0.9, &[0.1, 0.2, 0.3])), 1.0);
        assert_eq!(exact_ap(&list(0.0, &[0.5, 0.4, 0.3, -0.2])), 0.25);
        // Ties count against the positive.
        assert_eq!(exact_ap(&list(0.5, &[0.5])), 0.5);
    }

    #[test]
    fn exact_ap_ignores_negative_order() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let negs: Vec<f64> = (0..15).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let mut shuffled = negs.clone();
        shuffled.reverse();
        shuffled.swap(0, 7);
        assert_eq!(
            exact_ap(&list(0.3, &negs)),
            exact_ap(&list(0.3, &shuffled))
        );
    }

    /// Values on the 401-bin center lattice with all pairwise gaps > 2*delta
    /// put every item fully inside its own isolated bin, where the soft AP
    /// collapses to the exact one.
    #[test]
    fn fine_binning_on_separated_lattice_matches_exact_ap() {
        let mb = 401;
        let delta = 2.0 / 400.0;
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        for _ in 0..1000 {
            let count = rng.random_range(2..=30usize);
            // Distinct center indices with pairwise distance >= 3 bins.
            let span = 401 - 3 * (count - 1);
            let mut picks: Vec<usize> = Vec::with_capacity(count);
            while picks.len() < count {
                let c = rng.random_range(0..span);
                if !picks.contains(&c) {
                    picks.push(c);
                }
            }
            picks.sort_unstable();
            let values: Vec<f64> = picks
                .iter()
                .enumerate()
                .map(|(rank, &c)| 1.0 - (c + 3 * rank) as f64 * delta)
                .collect();
            let pos_at = rng.random_range(0..count);
            let s_pos = values[pos_at];
            let negs: Vec<f64> = values
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != pos_at)
                .map(|(_, &v)| v)
                .collect();
            let l = list(s_pos, &negs);
            let soft = soft_binned_ap(&l, &ApConfig { num_bins: mb }).unwrap();
            assert!(
                (soft.ap - exact_ap(&l)).abs() < 1e-9,
                "soft {} vs exact {}",
                soft.ap,
                exact_ap(&l)
            );
        }
    }

    /// Distance from s to the nearest kink of the 25-bin kernel family.
    /// Kinks sit exactly on the bin-center lattice.
    fn kink_distance(s: f64) -> f64 {
        (0..25)
            .map(|m| (s - (1.0 - m as f64 * DELTA)).abs())
            .fold(f64::INFINITY, f64::min)
    }

    fn random_list_away_from_kinks(rng: &mut ChaCha12Rng, n_negs: usize) -> RankedList {
        let mut draw = || loop {
            let s = rng.random::<f64>() * 2.0 - 1.0;
            if kink_distance(s) > 2e-3 {
                return s;
            }
        };
        let s_pos = draw();
        let negs: Vec<f64> = (0..n_negs).map(|_| draw()).collect();
        list(s_pos, &negs)
    }

    #[test]
    fn gradients_match_central_differences() {
        let h = 1e-5;
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let mut checked = 0usize;
        let mut max_rel: f64 = 0.0;
        for _ in 0..60 {
            let l = random_list_away_from_kinks(&mut rng, 50);
            let out = soft_binned_ap(&l, &CFG).unwrap();

            let eval_pos = |s: f64| {
                let negs = l.negatives().to_vec();
                let moved = RankedList::new(0, 1, s, negs).unwrap();
                soft_binned_ap(&moved, &CFG).unwrap().ap
            };
            if kink_distance(l.s_pos()) > 1e-4 {
                let fd = (eval_pos(l.s_pos() + h) - eval_pos(l.s_pos() - h)) / (2.0 * h);
                let rel = (out.d_s_pos - fd).abs() / fd.abs().max(1e-3);
                max_rel = max_rel.max(rel);
                checked += 1;
            }

            for k in 0..l.negatives().len() {
                let (idx, s_k) = l.negatives()[k];
                if kink_distance(s_k) <= 1e-4 {
                    continue;
                }
                let eval_neg = |s: f64| {
                    let mut negs = l.negatives().to_vec();
                    negs[k] = (idx, s);
                    let moved = RankedList::new(0, 1, l.s_pos(), negs).unwrap();
                    soft_binned_ap(&moved, &CFG).unwrap().ap
                };
                let fd = (eval_neg(s_k + h) - eval_neg(s_k - h)) / (2.0 * h);
                let rel = (out.d_s_negs[k] - fd).abs() / fd.abs().max(1e-3);
                max_rel = max_rel.max(rel);
                checked += 1;
            }
        }
        assert!(checked > 2000, "only {checked} coordinates checked");
        assert!(max_rel < 1e-6, "max relative gradient error {max_rel}");
    }

    #[test]
    fn batch_loss_averages_and_scales_gradients() {
        // AP' = 1 (separated) and AP' = 0.5 (buried under one negative).
        let l1 = list(1.0, &[1.0 - 3.0 * DELTA]);
        let l2 = list(-1.0, &[1.0]);
        let (loss, grads) = ap_loss_batch(&[l1.clone(), l2.clone()], &CFG).unwrap();
        assert!((loss - 0.25).abs() < 1e-12);
        assert_eq!(grads.len(), 2);
        assert!((grads[0].value - 0.0).abs() < 1e-12);
        assert!((grads[1].value - 0.5).abs() < 1e-12);
        // Per-list gradients carry the -1/N scale.
        let single = soft_binned_ap(&l2, &CFG).unwrap();
        assert!((grads[1].d_s_pos - (-single.d_s_pos / 2.0)).abs() < 1e-15);
        assert!((grads[1].d_s_negs[0] - (-single.d_s_negs[0] / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn perfectly_separated_batch_has_zero_loss() {
        let lists: Vec<RankedList> = (0..5)
            .map(|i| list(1.0, &[0.2 - 0.05 * i as f64, -0.4]))
            .collect();
        let (loss, _) = ap_loss_batch(&lists, &CFG).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn empty_batch_is_rejected() {
        assert!(matches!(
            ap_loss_batch(&[], &CFG),
            Err(LossError::EmptyBatch)
        ));
    }

    #[test]
    fn batch_gradients_match_central_differences() {
        let h = 1e-5;
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let lists: Vec<RankedList> = (0..3)
            .map(|_| random_list_away_from_kinks(&mut rng, 8))
            .collect();
        let (_, grads) = ap_loss_batch(&lists, &CFG).unwrap();
        let eval = |lists: &[RankedList]| ap_loss_batch(lists, &CFG).unwrap().0;
        let mut max_rel: f64 = 0.0;
        for i in 0..lists.len() {
            let mut up = lists.to_vec();
            let mut down = lists.to_vec();
            up[i] = RankedList::new(0, 1, lists[i].s_pos() + h, lists[i].negatives().to_vec())
                .unwrap();
            down[i] = RankedList::new(0, 1, lists[i].s_pos() - h, lists[i].negatives().to_vec())
                .unwrap();
            let fd = (eval(&up) - eval(&down)) / (2.0 * h);
            let rel = (grads[i].d_s_pos - fd).abs() / fd.abs().max(1e-3);
            max_rel = max_rel.max(rel);
            for k in 0..lists[i].negatives().len() {
                let (idx, s_k) = lists[i].negatives()[k];
                let bump = |s: f64| {
                    let mut negs = lists[i].negatives().to_vec();
                    negs[k] = (idx, s);
                    let mut moved = lists.to_vec();
                    moved[i] =
                        RankedList::new(0, 1, lists[i].s_pos(), negs).unwrap();
                    eval(&moved)
                };
                let fd = (bump(s_k + h) - bump(s_k - h)) / (2.0 * h);
                let rel = (grads[i].d_s_negs[k] - fd).abs() / fd.abs().max(1e-3);
                max_rel = max_rel.max(rel);
            }
        }
        assert!(max_rel < 1e-6, "max relative gradient error {max_rel}");
    }
}
