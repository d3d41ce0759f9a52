//! Closed-form ground truth for the correlated Gaussian benchmark.
//!
//! With `y = rho x + sqrt(1 - rho^2) n` per coordinate, the mutual
//! information is `-(d/2) ln(1 - rho^2)` and the density ratio factorizes
//! over coordinates. Cubing `y` is an invertible per-coordinate map, so the
//! cubic benchmark shares the same MI; the ratio oracle below is only
//! meaningful for the untransformed data.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::sampling::{sample_joint, DataConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianOracle {
    pub d: usize,
    pub rho: f64,
}

impl GaussianOracle {
    pub fn new(d: usize, rho: f64) -> Result<Self> {
        ensure!(d >= 1, Domain, "dimension must be >= 1");
        ensure!((0.0..1.0).contains(&rho), Domain, "rho must lie in [0, 1), got {rho}");
        Ok(Self { d, rho })
    }

    /// Oracle whose MI equals `target_mi` nats.
    pub fn for_target_mi(target_mi: f64, d: usize) -> Result<Self> {
        Self::new(d, crate::sampling::rho_for_target_mi(target_mi, d)?)
    }

    pub fn mi(&self) -> f64 {
        // 1 - rho^2 as (1 - rho)(1 + rho) keeps precision as rho -> 1.
        -(self.d as f64) / 2.0 * ((1.0 - self.rho) * (1.0 + self.rho)).ln()
    }

    /// `ln R(x, y)` for one pair of `d`-vectors.
    pub fn log_ratio(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        ensure!(
            x.len() == self.d && y.len() == self.d,
            Shape,
            "expected {}-vectors, got {} and {}",
            self.d,
            x.len(),
            y.len()
        );
        let s2 = 1.0 - self.rho * self.rho;
        let half_log = -0.5 * s2.ln();
        Ok(x.iter()
            .zip(y)
            .map(|(&xj, &yj)| {
                let r = yj - self.rho * xj;
                half_log - r * r / (2.0 * s2) + yj * yj / 2.0
            })
            .sum())
    }

    pub fn data_config(&self) -> DataConfig {
        DataConfig::gaussian(self.d, self.rho)
    }

    /// Mean `ln R` over `m` fresh joint draws.
    fn mean_log_ratio<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<f64> {
        let batch = sample_joint::<f64, _>(&self.data_config(), m, rng)?;
        let mut acc = 0.0;
        for i in 0..m {
            acc += self.log_ratio(batch.xs.row(i), batch.ys.row(i))?;
        }
        Ok(acc / m as f64)
    }
}

/// `-(d/2) ln(1 - rho^2)` nats.
pub fn true_mi_gaussian(d: usize, rho: f64) -> Result<f64> {
    Ok(GaussianOracle::new(d, rho)?.mi())
}

/// `prod_j N(y_j; rho x_j, 1 - rho^2) / N(y_j; 0, 1)`.
pub fn oracle_density_ratio(x: &[f64], y: &[f64], d: usize, rho: f64) -> Result<f64> {
    ensure!(x.iter().chain(y).all(|v| v.is_finite()), Domain, "inputs must be finite");
    Ok(GaussianOracle::new(d, rho)?.log_ratio(x, y)?.exp())
}

/// Variance of the mean log-ratio over `m` scalar Gaussian samples:
/// `(1 - e^{-2 I}) / m`.
pub fn lemma4_variance(mi: f64, m: usize) -> Result<f64> {
    ensure!(mi >= 0.0, Domain, "MI must be >= 0, got {mi}");
    ensure!(m >= 1, Domain, "sample count must be >= 1");
    Ok(-(-2.0 * mi).exp_m1() / m as f64)
}

/// Multivariate counterpart of [`lemma4_variance`]: `d rho^2 / m`.
pub fn lemma4_variance_multivariate(d: usize, rho: f64, m: usize) -> Result<f64> {
    GaussianOracle::new(d, rho)?;
    ensure!(m >= 1, Domain, "sample count must be >= 1");
    Ok(d as f64 * rho * rho / m as f64)
}

/// Optimal KL discriminator when the marginal batch keeps `k` of `n`
/// pairs in place: `n R / (k R + n - k)`.
pub fn permutation_fixed_point_optimum(r: f64, n: usize, k: usize) -> Result<f64> {
    ensure!(r >= 0.0, Domain, "ratio must be >= 0, got {r}");
    ensure!(n >= 1, Domain, "batch size must be >= 1");
    ensure!(k <= n, Domain, "fixed points {k} exceed batch size {n}");
    if k == 0 {
        return Ok(r);
    }
    let (n, k) = (n as f64, k as f64);
    Ok(n * r / (k * r + n - k))
}

/// Empirical evaluation of the variance bound `(4 H^2 sup R - I^2) / M`.
///
/// `sup R` is replaced by the largest ratio seen in the sample, which can only
/// under-estimate the true supremum (infinite for correlated Gaussians), so
/// the value is a diagnostic rather than a guaranteed bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Diagnostic {
    pub value: f64,
    pub hellinger_sq: f64,
    pub sup_ratio: f64,
    pub mi: f64,
    /// `true` when the joint equals the product of marginals: the bound is
    /// `-I^2/M = 0` and says nothing.
    pub vacuous: bool,
}

pub fn lemma1_bound_diagnostic<R: Rng + ?Sized>(
    oracle: &GaussianOracle,
    m: usize,
    sample_count: usize,
    rng: &mut R,
) -> Result<Lemma1Diagnostic> {
    ensure!(sample_count >= 1000, Domain, "diagnostic needs >= 1000 samples, got {sample_count}");
    ensure!(m >= 1, Domain, "M must be >= 1");
    let mi = oracle.mi();
    if oracle.rho == 0.0 {
        return Ok(Lemma1Diagnostic {
            value: -mi * mi / m as f64,
            hellinger_sq: 0.0,
            sup_ratio: 1.0,
            mi,
            vacuous: true,
        });
    }
    let batch = sample_joint::<f64, _>(&oracle.data_config(), sample_count, rng)?;
    let mut sup = f64::NEG_INFINITY;
    let mut bc = 0.0;
    for i in 0..sample_count {
        let lr = oracle.log_ratio(batch.xs.row(i), batch.ys.row(i))?;
        sup = sup.max(lr.exp());
        bc += (-0.5 * lr).exp();
    }
    // H^2 = 2 (1 - E_p[R^{-1/2}])
    let hellinger_sq = 2.0 * (1.0 - bc / sample_count as f64);
    Ok(Lemma1Diagnostic {
        value: (4.0 * hellinger_sq * sup - mi * mi) / m as f64,
        hellinger_sq,
        sup_ratio: sup,
        mi,
        vacuous: false,
    })
}

/// Across-trial `(mean, sample variance)` of the oracle estimator
/// `mean_i ln R(x_i, y_i)` over `m` joint draws.
pub fn oracle_fdime_monte_carlo<R: Rng + ?Sized>(
    oracle: &GaussianOracle,
    m: usize,
    trials: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    ensure!(trials >= 30, Domain, "need >= 30 trials, got {trials}");
    ensure!(m >= 2, Domain, "need >= 2 samples per trial");
    let est = (0..trials).map(|_| oracle.mean_log_ratio(m, rng)).collect::<Result<Vec<_>>>()?;
    let mean = est.iter().sum::<f64>() / trials as f64;
    let var = est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    Ok((mean, var))
}
