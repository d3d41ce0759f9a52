//! Training objectives and MI readouts as functions of raw critic scores.
//!
//! Each objective returns its value, the MI estimate it implies on the same
//! batch, and the gradient of the value w.r.t. every score (training does
//! gradient ascent on the value).

use crate::divergences::{logit_terms, ratio_readout, DivergenceKind};
use crate::error::{ensure, Result};
use crate::scalar::{log_sum_exp, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct Objective<T> {
    pub value: T,
    pub estimate: T,
    pub d_joint: Vec<T>,
    pub d_marginal: Vec<T>,
}

impl<T: Scalar> Objective<T> {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.estimate.is_finite()
            && self.d_joint.iter().chain(&self.d_marginal).all(|g| g.is_finite())
    }
}

fn count<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("count representable")
}

fn mean<T: Scalar>(v: impl Iterator<Item = T>, n: usize) -> T {
    v.sum::<T>() / count(n)
}

fn check_nonempty<T>(joint: &[T], marginal: &[T]) -> Result<()> {
    ensure!(!joint.is_empty() && !marginal.is_empty(), Shape, "objective needs joint and marginal scores");
    Ok(())
}

/// f-DIME value function on logits; the estimate is the mean log-ratio
/// readout over the joint scores only.
pub fn fdime_objective<T: Scalar>(kind: DivergenceKind, joint: &[T], marginal: &[T]) -> Result<Objective<T>> {
    check_nonempty(joint, marginal)?;
    let (n, p) = (joint.len(), marginal.len());
    let jt: Vec<_> = joint.iter().map(|&z| logit_terms(kind, z)).collect();
    let mt: Vec<_> = marginal.iter().map(|&z| logit_terms(kind, z)).collect();
    let value = mean(jt.iter().map(|t| t.joint), n)
        + mean(mt.iter().map(|t| t.marginal), p)
        + crate::divergences::value_constant::<T>(kind);
    Ok(Objective {
        value,
        estimate: mean(jt.iter().map(|t| t.log_ratio), n),
        d_joint: jt.iter().map(|t| t.d_joint / count(n)).collect(),
        d_marginal: mt.iter().map(|t| t.d_marginal / count(p)).collect(),
    })
}

/// Mean of `ln R̂(D)` over discriminator outputs on joint samples.
pub fn fdime_estimate_from_discriminator<T: Scalar>(kind: DivergenceKind, d_joint: &[T]) -> Result<T> {
    ensure!(!d_joint.is_empty(), Shape, "estimate needs at least one joint sample");
    let logs = d_joint.iter().map(|&d| ratio_readout(kind, d).map(T::ln)).collect::<Result<Vec<_>>>()?;
    Ok(mean(logs.into_iter(), d_joint.len()))
}

/// `ln mean exp(t)`.
fn log_mean_exp<T: Scalar>(t: &[T]) -> T {
    log_sum_exp(t) - count::<T>(t.len()).ln()
}

/// Donsker–Varadhan bound `E_p[T] - ln E_q[e^T]`.
///
/// The gradient of the log-partition term is divided by
/// `exp(log_partition)`; pass the running (moving-average) value to get the
/// bias-corrected gradient, or `None` to use the batch value itself, which
/// makes the gradient exact.
pub fn mine_objective<T: Scalar>(joint: &[T], marginal: &[T], log_partition: Option<T>) -> Result<Objective<T>> {
    check_nonempty(joint, marginal)?;
    let (n, p) = (joint.len(), marginal.len());
    let batch_lp = log_mean_exp(marginal);
    let denom = log_partition.unwrap_or(batch_lp) + count::<T>(p).ln();
    let value = mean(joint.iter().copied(), n) - batch_lp;
    Ok(Objective {
        value,
        estimate: value,
        d_joint: vec![count::<T>(n).recip(); n],
        d_marginal: marginal.iter().map(|&t| -(t - denom).exp()).collect(),
    })
}

/// `E_p[T] - E_q[e^{T - 1}]`.
pub fn nwj_objective<T: Scalar>(joint: &[T], marginal: &[T]) -> Result<Objective<T>> {
    check_nonempty(joint, marginal)?;
    let (n, p) = (joint.len(), marginal.len());
    let e: Vec<T> = marginal.iter().map(|&t| (t - T::one()).exp()).collect();
    let value = mean(joint.iter().copied(), n) - mean(e.iter().copied(), p);
    Ok(Objective {
        value,
        estimate: value,
        d_joint: vec![count::<T>(n).recip(); n],
        d_marginal: e.iter().map(|&v| -v / count(p)).collect(),
    })
}

/// `clip(e^T, e^{-tau}, e^{tau})` for critic values `T`.
pub fn smile_clipped_ratios<T: Scalar>(critic: &[T], tau: T) -> Vec<T> {
    critic.iter().map(|&t| t.max(-tau).min(tau).exp()).collect()
}

/// SMILE: the network is trained on the GAN (Jensen–Shannon) value function
/// over logits `z`, whose optimum gives the critic `T = -z = ln R`. The
/// estimate is `E_p[T] - ln E_q[clip(e^T, e^{-tau}, e^{tau})]`.
pub fn smile_objective<T: Scalar>(joint: &[T], marginal: &[T], tau: T) -> Result<Objective<T>> {
    let mut obj = fdime_objective(DivergenceKind::GAN, joint, marginal)?;
    let critic_m: Vec<T> = marginal.iter().map(|&z| -z).collect();
    let clipped: Vec<T> = critic_m.iter().map(|&t| t.max(-tau).min(tau)).collect();
    obj.estimate = mean(joint.iter().map(|&z| -z), joint.len()) - log_mean_exp(&clipped);
    Ok(obj)
}

/// InfoNCE over an `N x N` score table given as the diagonal `joint` and the
/// off-diagonal entries `marginal` in row-major order (row `i` holds
/// `T(x_i, y_j)` for `j != i`).
///
/// Each row term `T_ii - lse_j T_ij` is non-positive by construction and is
/// clamped at 0 against rounding, so the estimate never exceeds `ln N`.
pub fn cpc_objective<T: Scalar>(joint: &[T], marginal: &[T]) -> Result<Objective<T>> {
    let n = joint.len();
    ensure!(n >= 2, Shape, "CPC needs N >= 2");
    ensure!(
        marginal.len() == n * (n - 1),
        Shape,
        "CPC needs all {} off-diagonal scores, got {}",
        n * (n - 1),
        marginal.len()
    );
    let nf = count::<T>(n);
    let mut d_joint = vec![T::zero(); n];
    let mut d_marginal = vec![T::zero(); marginal.len()];
    let mut total = T::zero();
    let mut row = Vec::with_capacity(n);
    for i in 0..n {
        let off = &marginal[i * (n - 1)..(i + 1) * (n - 1)];
        row.clear();
        row.push(joint[i]);
        row.extend_from_slice(off);
        let lse = log_sum_exp(&row);
        total += (joint[i] - lse).min(T::zero());
        d_joint[i] = (T::one() - (joint[i] - lse).exp()) / nf;
        for (g, &t) in d_marginal[i * (n - 1)..(i + 1) * (n - 1)].iter_mut().zip(off) {
            *g = -(t - lse).exp() / nf;
        }
    }
    let value = total / nf + nf.ln();
    Ok(Objective { value, estimate: value, d_joint, d_marginal })
}
