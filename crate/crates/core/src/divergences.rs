//! f-divergence generators, their Fenchel conjugates, the discriminator
//! value functions and the discriminator → density-ratio readouts.
//!
//! Each [`DivergenceKind`] works in "D-space": the network emits a
//! discriminator `D` whose domain depends on the kind, and the value
//! function and the ratio readout are written in terms of `D`.
//!
//! | kind | D domain | value function J(D) | ratio R̂(D) |
//! |------|----------|---------------------|------------|
//! | KL   | D > 0    | E_p[log D] − E_q[D] + 1 | D |
//! | GAN  | 0 < D < 1 | E_p[log(1−D)] + E_q[log D] + log 4 | (1−D)/D |
//! | HD   | D > 0    | 2 − E_p[D] − E_q[1/D] | 1/D² |
//!
//! with `p` the joint and `q` the product of marginals.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::nn::{OutputActivation, OUTPUT_CLAMP};
use crate::scalar::{sigmoid, softplus, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DivergenceKind {
    KL,
    GAN,
    HD,
}

impl DivergenceKind {
    pub const ALL: [DivergenceKind; 3] = [DivergenceKind::KL, DivergenceKind::GAN, DivergenceKind::HD];

    pub fn name(self) -> &'static str {
        match self {
            DivergenceKind::KL => "kl",
            DivergenceKind::GAN => "gan",
            DivergenceKind::HD => "hd",
        }
    }
}

/// Sample-mean pieces of a value function; `J = joint + marginal + constant`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueFunctionTerms<T> {
    pub joint_term: T,
    pub marginal_term: T,
    pub constant: T,
}

impl<T: Scalar> ValueFunctionTerms<T> {
    pub fn total(&self) -> T {
        self.joint_term + self.marginal_term + self.constant
    }
}

fn check_d<T: Scalar>(kind: DivergenceKind, d: T) -> Result<()> {
    match kind {
        DivergenceKind::KL | DivergenceKind::HD => {
            ensure!(d > T::zero() && d.is_finite(), Domain, "{} discriminator must be positive, got {d}", kind.name())
        }
        DivergenceKind::GAN => {
            ensure!(d > T::zero() && d < T::one(), Domain, "GAN discriminator must lie in (0,1), got {d}")
        }
    }
    Ok(())
}

/// Generator `f(u)`, with `f(1) = 0` for every kind.
pub fn generator_f<T: Scalar>(kind: DivergenceKind, u: T) -> Result<T> {
    ensure!(u > T::zero() && u.is_finite(), Domain, "generator argument must be positive, got {u}");
    let one = T::one();
    Ok(match kind {
        DivergenceKind::KL => u * u.ln(),
        DivergenceKind::GAN => u * u.ln() - (u + one) * (u + one).ln() + T::lit(4.0).ln(),
        DivergenceKind::HD => (u.sqrt() - one).powi(2),
    })
}

/// Derivative `f'(u)`.
pub fn generator_derivative<T: Scalar>(kind: DivergenceKind, u: T) -> Result<T> {
    ensure!(u > T::zero() && u.is_finite(), Domain, "generator argument must be positive, got {u}");
    let one = T::one();
    Ok(match kind {
        DivergenceKind::KL => u.ln() + one,
        DivergenceKind::GAN => (u / (u + one)).ln(),
        DivergenceKind::HD => one - one / u.sqrt(),
    })
}

fn check_t<T: Scalar>(kind: DivergenceKind, t: T) -> Result<()> {
    ensure!(t.is_finite(), Domain, "conjugate argument must be finite");
    match kind {
        DivergenceKind::KL => {}
        DivergenceKind::GAN => ensure!(t < T::zero(), Domain, "GAN conjugate needs t < 0, got {t}"),
        DivergenceKind::HD => ensure!(t < T::one(), Domain, "HD conjugate needs t < 1, got {t}"),
    }
    Ok(())
}

/// Fenchel conjugate `f*(t) = sup_u { u t − f(u) }`.
pub fn conjugate_fstar<T: Scalar>(kind: DivergenceKind, t: T) -> Result<T> {
    check_t(kind, t)?;
    let one = T::one();
    Ok(match kind {
        DivergenceKind::KL => (t - one).exp(),
        DivergenceKind::GAN => -(-t.exp_m1()).ln() - T::lit(4.0).ln(),
        DivergenceKind::HD => t / (one - t),
    })
}

/// `(f*)'(t)`, the inverse of `f'`.
pub fn conjugate_derivative<T: Scalar>(kind: DivergenceKind, t: T) -> Result<T> {
    check_t(kind, t)?;
    let one = T::one();
    Ok(match kind {
        DivergenceKind::KL => (t - one).exp(),
        DivergenceKind::GAN => t.exp() / -t.exp_m1(),
        DivergenceKind::HD => one / (one - t).powi(2),
    })
}

/// Change of variable from the discriminator `D` to the critic `T`
/// appearing in `E_p[T] − E_q[f*(T)]`.
pub fn critic_from_discriminator<T: Scalar>(kind: DivergenceKind, d: T) -> Result<T> {
    check_d(kind, d)?;
    let one = T::one();
    Ok(match kind {
        DivergenceKind::KL => one + d.ln(),
        DivergenceKind::GAN => (one - d).ln(),
        DivergenceKind::HD => one - d,
    })
}

fn joint_contrib<T: Scalar>(kind: DivergenceKind, d: T) -> Result<T> {
    check_d(kind, d)?;
    Ok(match kind {
        DivergenceKind::KL => d.ln(),
        DivergenceKind::GAN => (T::one() - d).ln(),
        DivergenceKind::HD => -d,
    })
}

fn marginal_contrib<T: Scalar>(kind: DivergenceKind, d: T) -> Result<T> {
    check_d(kind, d)?;
    Ok(match kind {
        DivergenceKind::KL => -d,
        DivergenceKind::GAN => d.ln(),
        DivergenceKind::HD => -d.recip(),
    })
}

/// Per-sample value-function contributions `(joint, marginal, constant)`.
pub fn joint_and_marginal_contrib<T: Scalar>(
    kind: DivergenceKind,
    d_joint: T,
    d_marginal: T,
) -> Result<(T, T, T)> {
    Ok((joint_contrib(kind, d_joint)?, marginal_contrib(kind, d_marginal)?, value_constant(kind)))
}

/// Monte Carlo value function over joint and marginal discriminator outputs.
pub fn value_function<T: Scalar>(
    kind: DivergenceKind,
    d_joint: &[T],
    d_marginal: &[T],
) -> Result<ValueFunctionTerms<T>> {
    ensure!(!d_joint.is_empty() && !d_marginal.is_empty(), Domain, "value function needs samples");
    let joint = d_joint.iter().map(|&d| joint_contrib(kind, d)).sum::<Result<T>>()?;
    let marginal = d_marginal.iter().map(|&d| marginal_contrib(kind, d)).sum::<Result<T>>()?;
    Ok(ValueFunctionTerms {
        joint_term: joint / T::from_usize(d_joint.len()).unwrap(),
        marginal_term: marginal / T::from_usize(d_marginal.len()).unwrap(),
        constant: value_constant(kind),
    })
}

/// Density-ratio estimate read from a discriminator output.
pub fn ratio_readout<T: Scalar>(kind: DivergenceKind, d: T) -> Result<T> {
    check_d(kind, d)?;
    let one = T::one();
    Ok(match kind {
        DivergenceKind::KL => d,
        DivergenceKind::GAN => (one - d) / d,
        DivergenceKind::HD => one / (d * d),
    })
}

/// Discriminator maximizing the pointwise value function for ratio `p/q`.
pub fn optimal_discriminator<T: Scalar>(kind: DivergenceKind, p: T, q: T) -> Result<T> {
    ensure!(p > T::zero() && q > T::zero(), Domain, "densities must be positive");
    Ok(match kind {
        DivergenceKind::KL => p / q,
        DivergenceKind::GAN => q / (p + q),
        DivergenceKind::HD => (q / p).sqrt(),
    })
}

/// Output activation that maps a network logit into the kind's D domain.
pub fn output_activation_for(kind: DivergenceKind) -> OutputActivation {
    match kind {
        DivergenceKind::KL | DivergenceKind::HD => OutputActivation::Softplus,
        DivergenceKind::GAN => OutputActivation::Sigmoid,
    }
}

/// Value-function contributions and log-ratio evaluated from a raw logit,
/// together with their derivatives w.r.t. that logit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogitTerms<T> {
    pub joint: T,
    pub d_joint: T,
    pub marginal: T,
    pub d_marginal: T,
    pub log_ratio: T,
}

/// Discriminator head used during training.
///
/// KL and HD go through the clamped softplus. GAN is evaluated directly on
/// the logit `z` (with `D = sigmoid(z)`): `log(1 − D) = −softplus(z)`,
/// `log D = −softplus(−z)` and `log((1 − D)/D) = −z`, which are the same
/// quantities without a saturating clamp.
#[inline]
pub fn logit_terms<T: Scalar>(kind: DivergenceKind, z: T) -> LogitTerms<T> {
    match kind {
        DivergenceKind::KL => {
            let (d, s) = OutputActivation::Softplus.apply(z);
            LogitTerms { joint: d.ln(), d_joint: s / d, marginal: -d, d_marginal: -s, log_ratio: d.ln() }
        }
        DivergenceKind::HD => {
            let (d, s) = OutputActivation::Softplus.apply(z);
            LogitTerms {
                joint: -d,
                d_joint: -s,
                marginal: -d.recip(),
                d_marginal: s / (d * d),
                log_ratio: T::lit(-2.0) * d.ln(),
            }
        }
        DivergenceKind::GAN => {
            let sz = sigmoid(z);
            LogitTerms {
                joint: -softplus(z),
                d_joint: -sz,
                marginal: -softplus(-z),
                d_marginal: T::one() - sz,
                log_ratio: -z,
            }
        }
    }
}

/// Additive constant of each value function.
pub fn value_constant<T: Scalar>(kind: DivergenceKind) -> T {
    match kind {
        DivergenceKind::KL => T::one(),
        DivergenceKind::GAN => T::lit(4.0).ln(),
        DivergenceKind::HD => T::lit(2.0),
    }
}

/// Smallest positive discriminator value the heads will emit.
pub fn clamp_floor<T: Scalar>() -> T {
    T::lit(OUTPUT_CLAMP)
}
