//! Softplus margin loss over late-interaction scores, its bidirectional
//! dual-view composition, and the in-batch InfoNCE loss used for warm-up.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{maxsim, maxsim_backward, TokenMatrix};

/// Loss hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// Temperature applied to score gaps.
    pub tau: f64,
    /// Weight of the document-to-query (backward) loss.
    pub alpha: f64,
    /// Weight of the augmented-view terms.
    pub beta: f64,
    /// Hard negatives per anchor.
    #[serde(rename = "K")]
    pub k: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 0.02,
            alpha: 1.0,
            beta: 1.0,
            k: 2,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Usage(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.alpha >= 0.0) || !(self.beta >= 0.0) {
            return Err(Error::Usage("alpha and beta must be >= 0".into()));
        }
        if self.k == 0 {
            return Err(Error::Usage("K must be >= 1".into()));
        }
        Ok(())
    }
}

/// `log(1 + e^x)` with a linear tail above 30.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_margin_args(s_negs: &[f64], tau: f64) -> Result<()> {
    if s_negs.is_empty() {
        return Err(Error::Usage("margin loss needs at least one negative".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::Usage(format!("tau must be > 0, got {tau}")));
    }
    Ok(())
}

/// `sum_k softplus((s_neg_k - s_pos) / tau)`; each negative contributes independently.
pub fn margin_loss(s_pos: f64, s_negs: &[f64], tau: f64) -> Result<f64> {
    check_margin_args(s_negs, tau)?;
    Ok(s_negs.iter().map(|s| softplus((s - s_pos) / tau)).sum())
}

/// Partial derivatives of [`margin_loss`].
///
/// `d_negs[k] = sigmoid((s_neg_k - s_pos) / tau) / tau` and `d_pos = -sum(d_negs)`.
pub fn margin_loss_grad(s_pos: f64, s_negs: &[f64], tau: f64) -> Result<(f64, Vec<f64>)> {
    check_margin_args(s_negs, tau)?;
    let d_negs: Vec<f64> = s_negs.iter().map(|s| sigmoid((s - s_pos) / tau) / tau).collect();
    let d_pos = -d_negs.iter().sum::<f64>();
    Ok((d_pos, d_negs))
}

/// A single margin-loss term with gradients for every encoded matrix in it.
#[derive(Debug, Clone)]
pub struct MarginTerm {
    pub loss: f64,
    pub s_pos: f64,
    pub s_negs: Vec<f64>,
    pub grad_anchor: TokenMatrix,
    pub grad_pos: TokenMatrix,
    pub grad_negs: Vec<TokenMatrix>,
}

/// Evaluates `L(anchor, pos, negs)` and backpropagates through MaxSim.
/// The anchor always iterates the outer MaxSim sum.
pub fn margin_term(anchor: &TokenMatrix, pos: &TokenMatrix, negs: &[&TokenMatrix], tau: f64) -> Result<MarginTerm> {
    let s_pos = maxsim(anchor, pos)?;
    let s_negs = negs.iter().map(|n| maxsim(anchor, n)).collect::<Result<Vec<_>>>()?;
    let loss = margin_loss(s_pos, &s_negs, tau)?;
    let (d_pos, d_negs) = margin_loss_grad(s_pos, &s_negs, tau)?;

    let (mut grad_anchor, grad_pos) = maxsim_backward(anchor, pos, d_pos)?;
    let mut grad_negs = Vec::with_capacity(negs.len());
    for (n, d) in negs.iter().zip(&d_negs) {
        let (ga, gn) = maxsim_backward(anchor, n, *d)?;
        grad_anchor.add_scaled(&ga, 1.0);
        grad_negs.push(gn);
    }
    Ok(MarginTerm {
        loss,
        s_pos,
        s_negs,
        grad_anchor,
        grad_pos,
        grad_negs,
    })
}

fn term_loss(anchor: &TokenMatrix, pos: &TokenMatrix, negs: &[TokenMatrix], tau: f64) -> Result<f64> {
    let s_pos = maxsim(anchor, pos)?;
    let s_negs = negs.iter().map(|n| maxsim(anchor, n)).collect::<Result<Vec<_>>>()?;
    margin_loss(s_pos, &s_negs, tau)
}

/// Query-to-document terms `(original view, augmented view)`, unweighted.
pub fn forward_terms(
    q: &TokenMatrix,
    d_ori: &TokenMatrix,
    d_aug: &TokenMatrix,
    negs_ori: &[TokenMatrix],
    negs_aug: &[TokenMatrix],
    cfg: &LossConfig,
) -> Result<(f64, f64)> {
    if negs_ori.len() != negs_aug.len() {
        return Err(Error::Usage(format!(
            "{} original negatives but {} augmented negatives",
            negs_ori.len(),
            negs_aug.len()
        )));
    }
    Ok((
        term_loss(q, d_ori, negs_ori, cfg.tau)?,
        term_loss(q, d_aug, negs_aug, cfg.tau)?,
    ))
}

/// Dual-view query-to-document loss: original view plus `beta` times the augmented view.
pub fn forward_loss(
    q: &TokenMatrix,
    d_ori: &TokenMatrix,
    d_aug: &TokenMatrix,
    negs_ori: &[TokenMatrix],
    negs_aug: &[TokenMatrix],
    cfg: &LossConfig,
) -> Result<f64> {
    let (ori, aug) = forward_terms(q, d_ori, d_aug, negs_ori, negs_aug, cfg)?;
    Ok(ori + cfg.beta * aug)
}

/// Document-to-query terms `(original view, augmented view)`, unweighted.
/// The image is the anchor, so it drives the outer MaxSim sum.
pub fn backward_terms(
    d_ori: &TokenMatrix,
    d_aug: &TokenMatrix,
    q_pos: &TokenMatrix,
    q_negs: &[TokenMatrix],
    cfg: &LossConfig,
) -> Result<(f64, f64)> {
    Ok((
        term_loss(d_ori, q_pos, q_negs, cfg.tau)?,
        term_loss(d_aug, q_pos, q_negs, cfg.tau)?,
    ))
}

pub fn backward_loss(
    d_ori: &TokenMatrix,
    d_aug: &TokenMatrix,
    q_pos: &TokenMatrix,
    q_negs: &[TokenMatrix],
    cfg: &LossConfig,
) -> Result<f64> {
    let (ori, aug) = backward_terms(d_ori, d_aug, q_pos, q_negs, cfg)?;
    Ok(ori + cfg.beta * aug)
}

/// Unweighted loss components of one training pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub forward_orig: f64,
    pub forward_aug: f64,
    pub backward_orig: f64,
    pub backward_aug: f64,
}

/// Loss components plus their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub forward_orig: f64,
    pub forward_aug: f64,
    pub backward_orig: f64,
    pub backward_aug: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Component-wise mean; `None` for an empty slice.
    pub fn mean(items: &[LossBreakdown]) -> Option<LossBreakdown> {
        if items.is_empty() {
            return None;
        }
        let n = items.len() as f64;
        let mut acc = LossBreakdown::default();
        for b in items {
            acc.forward_orig += b.forward_orig;
            acc.forward_aug += b.forward_aug;
            acc.backward_orig += b.backward_orig;
            acc.backward_aug += b.backward_aug;
            acc.total += b.total;
        }
        acc.forward_orig /= n;
        acc.forward_aug /= n;
        acc.backward_orig /= n;
        acc.backward_aug /= n;
        acc.total /= n;
        Some(acc)
    }
}

/// `total = (f_orig + beta f_aug) + alpha (b_orig + beta b_aug)`.
pub fn total_loss(parts: LossParts, cfg: &LossConfig) -> Result<LossBreakdown> {
    let LossParts {
        forward_orig,
        forward_aug,
        backward_orig,
        backward_aug,
    } = parts;
    for (name, v) in [
        ("forward_orig", forward_orig),
        ("forward_aug", forward_aug),
        ("backward_orig", backward_orig),
        ("backward_aug", backward_aug),
    ] {
        if !v.is_finite() {
            return Err(Error::Numeric(format!("{name} is not finite: {v}")));
        }
    }
    let forward = forward_orig + cfg.beta * forward_aug;
    let backward = backward_orig + cfg.beta * backward_aug;
    Ok(LossBreakdown {
        forward_orig,
        forward_aug,
        backward_orig,
        backward_aug,
        total: forward + cfg.alpha * backward,
    })
}

fn check_square(sim: &[Vec<f64>], tau: f64) -> Result<()> {
    let b = sim.len();
    if b == 0 || sim.iter().any(|r| r.len() != b) {
        return Err(Error::Usage(
            "InfoNCE needs a non-empty square similarity matrix".into(),
        ));
    }
    if !(tau > 0.0) {
        return Err(Error::Usage(format!("tau must be > 0, got {tau}")));
    }
    Ok(())
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Mean over rows of `-log softmax(row / tau)[diagonal]`.
pub fn infonce_inbatch(sim: &[Vec<f64>], tau: f64) -> Result<f64> {
    check_square(sim, tau)?;
    let b = sim.len();
    let total: f64 = sim
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let lse = log_sum_exp(row.iter().map(|s| s / tau));
            lse - row[i] / tau
        })
        .sum();
    Ok(total / b as f64)
}

/// Gradient of [`infonce_inbatch`] with respect to every matrix entry.
pub fn infonce_inbatch_grad(sim: &[Vec<f64>], tau: f64) -> Result<Vec<Vec<f64>>> {
    check_square(sim, tau)?;
    let b = sim.len() as f64;
    Ok(sim
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let lse = log_sum_exp(row.iter().map(|s| s / tau));
            row.iter()
                .enumerate()
                .map(|(j, s)| {
                    let p = (s / tau - lse).exp();
                    let target = if i == j { 1.0 } else { 0.0 };
                    (p - target) / (tau * b)
                })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::l2_normalize;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tm(rows: &[&[f64]]) -> TokenMatrix {
        TokenMatrix::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn random_unit(rng: &mut ChaCha8Rng, len: usize, dim: usize) -> TokenMatrix {
        let rows = (0..len)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        l2_normalize(&TokenMatrix::from_rows(rows).unwrap())
    }

    #[test]
    fn margin_loss_examples() {
        assert_abs_diff_eq!(margin_loss(0.9, &[0.9], 1.0).unwrap(), 2f64.ln(), epsilon = 1e-12);
        assert!(margin_loss(1.0, &[0.0], 0.02).unwrap() < 1e-20);
        // softplus(-1) + softplus(1)
        let oracle = (1.0 + (-1f64).exp()).ln() + (1.0 + 1f64.exp()).ln();
        let v = margin_loss(0.8, &[0.75, 0.85], 0.05).unwrap();
        assert_abs_diff_eq!(v, oracle, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 1.6265233, epsilon = 1e-7);
        assert!(matches!(margin_loss(0.8, &[], 0.05), Err(Error::Usage(_))));
    }

    #[test]
    fn softplus_tail_is_linear() {
        assert_eq!(softplus(500.0), 500.0);
        assert!(softplus(-800.0) >= 0.0);
    }

    #[test]
    fn margin_grad_examples() {
        let (d_pos, d_negs) = margin_loss_grad(0.5, &[0.5], 0.02).unwrap();
        assert_abs_diff_eq!(d_negs[0], 25.0, epsilon = 1e-12);
        assert_eq!(d_pos, -25.0);
        let (_, d_negs) = margin_loss_grad(1.0, &[0.0], 1.0).unwrap();
        assert_abs_diff_eq!(d_negs[0], 1.0 / (1.0 + 1f64.exp()), epsilon = 1e-12);
        assert_abs_diff_eq!(d_negs[0], 0.2689414, epsilon = 1e-7);
        let (d_pos, d_negs) = margin_loss_grad(0.3, &[0.1, 0.25, 0.4], 0.05).unwrap();
        assert_eq!(d_pos, -d_negs.iter().sum::<f64>());
    }

    #[test]
    fn forward_weight_ablation_and_view_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_unit(&mut rng, 3, 4);
        let d = random_unit(&mut rng, 4, 4);
        let d_aug = random_unit(&mut rng, 4, 4);
        let negs: Vec<_> = (0..2).map(|_| random_unit(&mut rng, 4, 4)).collect();
        let negs_aug: Vec<_> = (0..2).map(|_| random_unit(&mut rng, 4, 4)).collect();
        let single = {
            let s_pos = maxsim(&q, &d).unwrap();
            let s_negs: Vec<_> = negs.iter().map(|n| maxsim(&q, n).unwrap()).collect();
            margin_loss(s_pos, &s_negs, 0.1).unwrap()
        };
        let cfg0 = LossConfig {
            tau: 0.1,
            beta: 0.0,
            ..Default::default()
        };
        assert_eq!(forward_loss(&q, &d, &d_aug, &negs, &negs_aug, &cfg0).unwrap(), single);
        let cfg1 = LossConfig {
            tau: 0.1,
            ..Default::default()
        };
        assert_eq!(forward_loss(&q, &d, &d, &negs, &negs, &cfg1).unwrap(), 2.0 * single);
        assert!(matches!(
            forward_loss(&q, &d, &d, &negs, &negs[..1], &cfg1),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn backward_uses_image_as_anchor() {
        // Single-token matrices: maxsim is symmetric, so the image-anchored
        // term equals a forward term with the image in the query slot.
        let q = tm(&[&[0.6, 0.8]]);
        let d = tm(&[&[1.0, 0.0]]);
        let qn = tm(&[&[0.8, 0.6]]);
        let cfg = LossConfig {
            tau: 0.1,
            beta: 0.0,
            ..Default::default()
        };
        let fwd = forward_loss(&d, &q, &q, &[qn.clone()], &[qn.clone()], &cfg).unwrap();
        let bwd = margin_loss(maxsim(&d, &q).unwrap(), &[maxsim(&d, &qn).unwrap()], 0.1).unwrap();
        assert_eq!(backward_loss(&d, &d, &q, &[qn.clone()], &cfg).unwrap(), bwd);
        assert_abs_diff_eq!(fwd, bwd, epsilon = 1e-15);

        // Multi-token: the image iterates the outer sum.
        let q2 = tm(&[&[1.0, 0.0]]);
        let d2 = tm(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let qn2 = tm(&[&[0.0, 1.0]]);
        let expected = margin_loss(maxsim(&d2, &q2).unwrap(), &[maxsim(&d2, &qn2).unwrap()], 0.1).unwrap();
        assert_eq!(backward_loss(&d2, &d2, &q2, &[qn2], &cfg).unwrap(), expected);
    }

    #[test]
    fn total_loss_examples() {
        let cfg = LossConfig {
            alpha: 0.0,
            ..Default::default()
        };
        let parts = LossParts {
            forward_orig: 1.0,
            forward_aug: 0.5,
            backward_orig: 3.0,
            backward_aug: 4.0,
        };
        assert_eq!(total_loss(parts, &cfg).unwrap().total, 1.5);
        let parts = LossParts {
            forward_orig: 1.0,
            forward_aug: 0.0,
            backward_orig: 0.5,
            backward_aug: 0.0,
        };
        assert_eq!(total_loss(parts, &LossConfig::default()).unwrap().total, 1.5);
        let bad = LossParts {
            forward_orig: f64::NAN,
            ..Default::default()
        };
        assert!(matches!(total_loss(bad, &cfg), Err(Error::Numeric(_))));
    }

    #[test]
    fn total_loss_matches_hand_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = LossConfig {
            tau: 0.2,
            ..Default::default()
        };
        let q = random_unit(&mut rng, 3, 5);
        let d = random_unit(&mut rng, 4, 5);
        let d_aug = random_unit(&mut rng, 3, 5);
        let negs: Vec<_> = (0..2).map(|_| random_unit(&mut rng, 4, 5)).collect();
        let negs_aug: Vec<_> = (0..2).map(|_| random_unit(&mut rng, 3, 5)).collect();
        let qnegs: Vec<_> = (0..2).map(|_| random_unit(&mut rng, 3, 5)).collect();
        let sp = |a: f64, b: f64| (1.0 + ((b - a) / 0.2).exp()).ln();
        let term = |anchor: &TokenMatrix, pos: &TokenMatrix, ns: &[TokenMatrix]| {
            let p = maxsim(anchor, pos).unwrap();
            ns.iter().map(|n| sp(p, maxsim(anchor, n).unwrap())).sum::<f64>()
        };
        let expected =
            term(&q, &d, &negs) + term(&q, &d_aug, &negs_aug) + term(&d, &q, &qnegs) + term(&d_aug, &q, &qnegs);
        let (fo, fa) = forward_terms(&q, &d, &d_aug, &negs, &negs_aug, &cfg).unwrap();
        let (bo, ba) = backward_terms(&d, &d_aug, &q, &qnegs, &cfg).unwrap();
        let b = total_loss(
            LossParts {
                forward_orig: fo,
                forward_aug: fa,
                backward_orig: bo,
                backward_aug: ba,
            },
            &cfg,
        )
        .unwrap();
        assert_abs_diff_eq!(b.total, expected, epsilon = 1e-12);
    }

    #[test]
    fn infonce_examples() {
        assert_eq!(infonce_inbatch(&[vec![0.7]], 0.02).unwrap(), 0.0);
        let v = infonce_inbatch(&[vec![1.0, 0.0], vec![0.0, 1.0]], 1.0).unwrap();
        assert_abs_diff_eq!(v, (1.0 + (-1f64).exp()).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, 0.3132617, epsilon = 1e-7);
        let uniform = vec![vec![0.4; 5]; 5];
        assert_abs_diff_eq!(infonce_inbatch(&uniform, 0.1).unwrap(), 5f64.ln(), epsilon = 1e-12);
        assert!(matches!(infonce_inbatch(&[vec![1.0, 2.0]], 1.0), Err(Error::Usage(_))));
    }

    #[test]
    fn infonce_grad_matches_finite_differences() {
        let sim = vec![vec![0.9, 0.2, 0.4], vec![0.1, 0.7, 0.65], vec![0.3, 0.5, 0.8]];
        let tau = 0.1;
        let g = infonce_inbatch_grad(&sim, tau).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            for j in 0..3 {
                let mut p = sim.clone();
                p[i][j] += h;
                let mut m = sim.clone();
                m[i][j] -= h;
                let fd = (infonce_inbatch(&p, tau).unwrap() - infonce_inbatch(&m, tau).unwrap()) / (2.0 * h);
                assert_abs_diff_eq!(g[i][j], fd, epsilon = 1e-6);
            }
        }
    }

    proptest! {
        #[test]
        fn margin_loss_positive_and_monotone(s_pos in -1.0f64..1.0, negs in prop::collection::vec(-1.0f64..1.0, 1..4), tau in 0.05f64..2.0) {
            let base = margin_loss(s_pos, &negs, tau).unwrap();
            prop_assert!(base > 0.0);
            prop_assert!(margin_loss(s_pos + 0.01, &negs, tau).unwrap() < base);
            let mut bumped = negs.clone();
            bumped[0] += 0.01;
            prop_assert!(margin_loss(s_pos, &bumped, tau).unwrap() > base);
        }

        #[test]
        fn margin_grad_bounded(s_pos in -1.0f64..1.0, gap in -20.0f64..20.0, tau in 0.02f64..1.0) {
            let (_, d) = margin_loss_grad(s_pos, &[s_pos + gap * tau], tau).unwrap();
            prop_assert!(d[0] > 0.0 && d[0] < 1.0 / tau);
        }

        #[test]
        fn infonce_row_shift_invariant(vals in prop::collection::vec(-1.0f64..1.0, 9), row in 0usize..3, shift in -5.0f64..5.0) {
            let sim: Vec<Vec<f64>> = vals.chunks(3).map(|c| c.to_vec()).collect();
            let mut shifted = sim.clone();
            shifted[row].iter_mut().for_each(|x| *x += shift);
            let a = infonce_inbatch(&sim, 0.5).unwrap();
            let b = infonce_inbatch(&shifted, 0.5).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn breakdown_recombines(fo in 0.0f64..5.0, fa in 0.0f64..5.0, bo in 0.0f64..5.0, ba in 0.0f64..5.0, alpha in 0.0f64..2.0, beta in 0.0f64..2.0) {
            let cfg = LossConfig { alpha, beta, ..Default::default() };
            let b = total_loss(LossParts { forward_orig: fo, forward_aug: fa, backward_orig: bo, backward_aug: ba }, &cfg).unwrap();
            let recombined = (b.forward_orig + beta * b.forward_aug) + alpha * (b.backward_orig + beta * b.backward_aug);
            prop_assert!((b.total - recombined).abs() <= 1e-9);
        }
    }
}
