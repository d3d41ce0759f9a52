//! Correlated Gaussian / cubic data and marginal-pair construction.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::nn::Matrix;
use crate::scalar::Scalar;

/// Random generator used everywhere a seed is accepted.
pub type SeededRng = ChaCha8Rng;

/// Name recorded alongside every reproducible run.
pub const GENERATOR_NAME: &str = "ChaCha8Rng";

/// Largest batch for which all `N(N-1)` off-diagonal pairs are materialized.
pub const ALL_PAIRS_MAX_BATCH: usize = 2048;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub d: usize,
    pub rho: f64,
    pub cubic: bool,
    pub seed: u64,
}

impl DataConfig {
    pub fn gaussian(d: usize, rho: f64) -> Self {
        Self { d, rho, cubic: false, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.d >= 1, Config, "dimension must be >= 1");
        ensure!((0.0..1.0).contains(&self.rho), Config, "rho must lie in [0, 1), got {}", self.rho);
        Ok(())
    }
}

/// `N` joint draws; row `i` of `xs` pairs with row `i` of `ys`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub xs: Matrix<T>,
    pub ys: Matrix<T>,
}

impl<T: Scalar> Batch<T> {
    pub fn new(xs: Matrix<T>, ys: Matrix<T>) -> Result<Self> {
        ensure!(xs.rows() == ys.rows(), Shape, "x has {} rows, y has {}", xs.rows(), ys.rows());
        Ok(Self { xs, ys })
    }

    pub fn len(&self) -> usize {
        self.xs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.rows() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MarginalStrategy {
    DerangeRandom,
    DerangeShift,
    NaivePermutation,
    AllPairs,
}

impl MarginalStrategy {
    pub fn name(self) -> &'static str {
        match self {
            MarginalStrategy::DerangeRandom => "derange-random",
            MarginalStrategy::DerangeShift => "derange-shift",
            MarginalStrategy::NaivePermutation => "permutation",
            MarginalStrategy::AllPairs => "all-pairs",
        }
    }
}

/// Draws `x, n ~ N(0, I_d)` and sets `y = rho x + sqrt(1 - rho^2) n`,
/// cubed element-wise when `config.cubic`.
pub fn sample_joint<T: Scalar, R: Rng + ?Sized>(config: &DataConfig, n: usize, rng: &mut R) -> Result<Batch<T>> {
    config.validate()?;
    ensure!(n >= 2, Config, "batch size must be >= 2, got {n}");
    let d = config.d;
    let rho = config.rho;
    let noise = (1.0 - rho * rho).sqrt();
    let mut xs = Vec::with_capacity(n * d);
    let mut ys = Vec::with_capacity(n * d);
    let mut row_x = vec![0.0f64; d];
    for _ in 0..n {
        for v in row_x.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for &x in &row_x {
            let e: f64 = rng.sample(StandardNormal);
            let y = rho * x + noise * e;
            ys.push(T::lit(if config.cubic { y * y * y } else { y }));
            xs.push(T::lit(x));
        }
    }
    Batch::new(Matrix::from_vec(n, d, xs)?, Matrix::from_vec(n, d, ys)?)
}

/// Correlation giving `target_mi` nats across `d` independent coordinate
/// pairs: `rho = sqrt(1 - exp(-2 I / d))`.
pub fn rho_for_target_mi(target_mi: f64, d: usize) -> Result<f64> {
    ensure!(target_mi >= 0.0 && target_mi.is_finite(), Domain, "target MI must be >= 0, got {target_mi}");
    ensure!(d >= 1, Domain, "dimension must be >= 1");
    Ok((-(-2.0 * target_mi / d as f64).exp_m1()).sqrt())
}

/// `i -> (i + 1) mod n`.
pub fn derange_shift(n: usize) -> Result<Vec<usize>> {
    ensure!(n >= 2, Config, "a derangement needs at least 2 elements, got {n}");
    Ok((0..n).map(|i| (i + 1) % n).collect())
}

/// Uniform permutation of `0..n`.
pub fn permute_random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut map: Vec<usize> = (0..n).collect();
    map.shuffle(rng);
    map
}

/// Uniform derangement by rejection: reshuffle until no fixed point remains.
pub fn derange_random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<usize>> {
    derange_random_counting(n, rng).map(|(m, _)| m)
}

/// [`derange_random`] that also reports how many shuffles were drawn.
pub fn derange_random_counting<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<(Vec<usize>, usize)> {
    ensure!(n >= 2, Config, "a derangement needs at least 2 elements, got {n}");
    let mut attempts = 0;
    loop {
        attempts += 1;
        let map = permute_random(n, rng);
        if count_fixed_points(&map) == 0 {
            return Ok((map, attempts));
        }
    }
}

pub fn count_fixed_points(map: &[usize]) -> usize {
    map.iter().enumerate().filter(|&(i, &j)| i == j).count()
}

pub fn is_bijection(map: &[usize]) -> bool {
    let mut seen = vec![false; map.len()];
    for &j in map {
        if j >= map.len() || seen[j] {
            return false;
        }
        seen[j] = true;
    }
    true
}

/// Index pairs `(x_row, y_row)` standing in for product-of-marginals draws.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarginalPairs {
    pub x_index: Vec<usize>,
    pub y_index: Vec<usize>,
}

impl MarginalPairs {
    pub fn len(&self) -> usize {
        self.x_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_index.is_empty()
    }

    /// Pairs `(i, map[i])`.
    pub fn from_map(map: Vec<usize>) -> Self {
        Self { x_index: (0..map.len()).collect(), y_index: map }
    }

    /// All `n(n-1)` pairs `(i, j)` with `i != j`, row-major in `i`.
    pub fn off_diagonal(n: usize) -> Self {
        let mut x_index = Vec::with_capacity(n * n.saturating_sub(1));
        let mut y_index = Vec::with_capacity(n * n.saturating_sub(1));
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    x_index.push(i);
                    y_index.push(j);
                }
            }
        }
        Self { x_index, y_index }
    }

    /// Materializes `(xs, ys)` matrices from a batch.
    pub fn gather<T: Scalar>(&self, batch: &Batch<T>) -> Result<(Matrix<T>, Matrix<T>)> {
        Ok((batch.xs.gather_rows(&self.x_index)?, batch.ys.gather_rows(&self.y_index)?))
    }
}

/// Marginal pairs for `strategy`. Only the random strategies draw from `rng`.
pub fn assemble_marginal_pairs<T: Scalar, R: Rng + ?Sized>(
    batch: &Batch<T>,
    strategy: MarginalStrategy,
    rng: &mut R,
) -> Result<MarginalPairs> {
    marginal_pairs_for(batch.len(), strategy, rng)
}

/// Same as [`assemble_marginal_pairs`] but from a batch size alone.
pub fn marginal_pairs_for<R: Rng + ?Sized>(n: usize, strategy: MarginalStrategy, rng: &mut R) -> Result<MarginalPairs> {
    ensure!(n >= 2, Config, "marginal pairs need a batch of at least 2, got {n}");
    Ok(match strategy {
        MarginalStrategy::DerangeShift => MarginalPairs::from_map(derange_shift(n)?),
        MarginalStrategy::DerangeRandom => MarginalPairs::from_map(derange_random(n, rng)?),
        MarginalStrategy::NaivePermutation => MarginalPairs::from_map(permute_random(n, rng)),
        MarginalStrategy::AllPairs => {
            ensure!(
                n <= ALL_PAIRS_MAX_BATCH,
                Resource,
                "all-pairs marginals for N={n} would need {} rows (limit N <= {ALL_PAIRS_MAX_BATCH})",
                n * (n - 1)
            );
            MarginalPairs::off_diagonal(n)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use proptest::prelude::*;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    fn column(m: &Matrix<f64>, c: usize) -> Vec<f64> {
        (0..m.rows()).map(|r| m.get(r, c)).collect()
    }

    #[test]
    fn independent_when_rho_zero() {
        let mut rng = seeded_rng(1);
        let b: Batch<f64> = sample_joint(&DataConfig::gaussian(3, 0.0), 10_000, &mut rng).unwrap();
        for j in 0..3 {
            assert!(corr(&column(&b.xs, j), &column(&b.ys, j)).abs() < 0.05);
        }
    }

    #[test]
    fn correlation_matches_rho() {
        let mut rng = seeded_rng(2);
        let b: Batch<f64> = sample_joint(&DataConfig::gaussian(1, 0.9), 100_000, &mut rng).unwrap();
        let c = corr(&column(&b.xs, 0), &column(&b.ys, 0));
        assert!((c - 0.9).abs() < 0.01, "corr {c}");
    }

    #[test]
    fn cubic_marginal_is_heavy_tailed() {
        // Z^3 has kurtosis E[Z^12]/E[Z^6]^2 = 10395/225 = 46.2
        let mut rng = seeded_rng(3);
        let cfg = DataConfig { cubic: true, ..DataConfig::gaussian(1, 0.0) };
        let b: Batch<f64> = sample_joint(&cfg, 100_000, &mut rng).unwrap();
        let y = column(&b.ys, 0);
        let n = y.len() as f64;
        let m = y.iter().sum::<f64>() / n;
        let m2 = y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
        let m4 = y.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
        assert!((m2 - 15.0).abs() < 1.5, "E[Z^6] = 15, got {m2}");
        assert!(m4 / (m2 * m2) > 10.0);
    }

    #[test]
    fn gaussian_moments_within_band() {
        let n = 20_000;
        let mut rng = seeded_rng(4);
        let b: Batch<f64> = sample_joint(&DataConfig::gaussian(4, 0.6), n, &mut rng).unwrap();
        let tol = 4.0 / (n as f64).sqrt();
        for m in [&b.xs, &b.ys] {
            for j in 0..4 {
                let c = column(m, j);
                let mean = c.iter().sum::<f64>() / n as f64;
                let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
                assert!(mean.abs() < tol);
                assert!((var - 1.0).abs() < 2.0 * tol);
            }
        }
    }

    #[test]
    fn sampling_rejects_bad_configs() {
        let mut rng = seeded_rng(0);
        assert!(matches!(sample_joint::<f64, _>(&DataConfig::gaussian(2, 0.5), 1, &mut rng), Err(Error::Config(_))));
        assert!(sample_joint::<f64, _>(&DataConfig::gaussian(2, 1.0), 8, &mut rng).is_err());
        assert!(sample_joint::<f64, _>(&DataConfig::gaussian(0, 0.5), 8, &mut rng).is_err());
    }

    #[test]
    fn rho_for_target_examples() {
        assert_eq!(rho_for_target_mi(0.0, 7).unwrap(), 0.0);
        assert!((rho_for_target_mi(2.0, 20).unwrap() - 0.425757262911648).abs() < 1e-12);
        assert!((rho_for_target_mi(10.0, 20).unwrap() - 0.7950600976206501).abs() < 1e-12);
        assert!(matches!(rho_for_target_mi(-0.1, 3), Err(Error::Domain(_))));
    }

    #[test]
    fn shift_derangement() {
        assert_eq!(derange_shift(4).unwrap(), vec![1, 2, 3, 0]);
        assert_eq!(derange_shift(2).unwrap(), vec![1, 0]);
        assert!(derange_shift(1).is_err());
        for n in 2..40 {
            let m = derange_shift(n).unwrap();
            assert_eq!(count_fixed_points(&m), 0);
            assert!(is_bijection(&m));
        }
    }

    #[test]
    fn random_derangement_of_three_is_uniform_over_both() {
        let mut rng = seeded_rng(5);
        let draws = 10_000;
        let mut first = 0;
        for _ in 0..draws {
            let m = derange_random(3, &mut rng).unwrap();
            if m == vec![1, 2, 0] {
                first += 1;
            } else {
                assert_eq!(m, vec![2, 0, 1]);
            }
        }
        let freq = first as f64 / draws as f64;
        assert!((freq - 0.5).abs() < 0.02, "freq {freq}");
        assert!(derange_random(1, &mut rng).is_err());
    }

    #[test]
    fn rejection_acceptance_rate_near_inverse_e() {
        let mut rng = seeded_rng(6);
        let draws = 20_000;
        let attempts: usize = (0..draws).map(|_| derange_random_counting(16, &mut rng).unwrap().1).sum();
        let rate = draws as f64 / attempts as f64;
        assert!((rate - (-1.0f64).exp()).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn fixed_point_counts() {
        assert_eq!(count_fixed_points(&[0, 1, 2, 3, 4]), 5);
        assert_eq!(count_fixed_points(&derange_shift(9).unwrap()), 0);
    }

    #[test]
    fn marginal_pair_layouts() {
        let b: Batch<f64> = Batch::new(
            Matrix::from_fn(3, 1, |r, _| r as f64),
            Matrix::from_fn(3, 1, |r, _| 10.0 + r as f64),
        )
        .unwrap();
        let mut rng = seeded_rng(7);
        let p = assemble_marginal_pairs(&b, MarginalStrategy::DerangeShift, &mut rng).unwrap();
        let (xs, ys) = p.gather(&b).unwrap();
        assert_eq!(xs.as_slice(), &[0.0, 1.0, 2.0]);
        assert_eq!(ys.as_slice(), &[11.0, 12.0, 10.0]);

        let all = assemble_marginal_pairs(&b, MarginalStrategy::AllPairs, &mut rng).unwrap();
        assert_eq!(all.len(), 6);
        assert!(all.x_index.iter().zip(&all.y_index).all(|(i, j)| i != j));

        let perm = assemble_marginal_pairs(&b, MarginalStrategy::NaivePermutation, &mut rng).unwrap();
        assert_eq!(perm.len(), 3);
        assert!(is_bijection(&perm.y_index));
    }

    #[test]
    fn naive_permutation_can_keep_fixed_points() {
        let mut rng = seeded_rng(8);
        let hits = (0..200)
            .filter(|_| {
                let p = marginal_pairs_for(8, MarginalStrategy::NaivePermutation, &mut rng).unwrap();
                count_fixed_points(&p.y_index) > 0
            })
            .count();
        assert!(hits > 0);
    }

    #[test]
    fn all_pairs_guard() {
        let mut rng = seeded_rng(9);
        assert!(matches!(
            marginal_pairs_for(ALL_PAIRS_MAX_BATCH + 1, MarginalStrategy::AllPairs, &mut rng),
            Err(Error::Resource(_))
        ));
    }

    proptest! {
        #[test]
        fn derangements_are_fixed_point_free_bijections(n in 2usize..200, seed in any::<u64>()) {
            let mut rng = seeded_rng(seed);
            for m in [derange_shift(n).unwrap(), derange_random(n, &mut rng).unwrap()] {
                prop_assert_eq!(count_fixed_points(&m), 0);
                prop_assert!(is_bijection(&m));
            }
        }

        #[test]
        fn rho_round_trips(i in 0.0f64..12.0, d in prop::sample::select(vec![1usize, 5, 20])) {
            let rho = rho_for_target_mi(i, d).unwrap();
            let back = -(d as f64) / 2.0 * ((1.0 - rho) * (1.0 + rho)).ln();
            let conditioning = d as f64 * rho / ((1.0 - rho) * (1.0 + rho));
            prop_assert!((back - i).abs() <= 1e-10f64.max(conditioning * 4.0 * f64::EPSILON));
        }
    }
}
