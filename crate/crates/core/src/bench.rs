//! Experiment drivers: MI staircases, windowed bias/variance/MSE, variance
//! versus batch size, permutation versus derangement, and wall-clock timing.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::estimators::{
    run_training, ArchitectureKind, EstimatorKind, RunRecord, SeriesPoint, StepOutcome, TrainConfig, Trainer,
};
use crate::oracle::true_mi_gaussian;
use crate::sampling::{rho_for_target_mi, DataConfig, MarginalStrategy};
use crate::scalar::Scalar;

/// Environment variable capping the number of parallel jobs.
pub const THREADS_ENV: &str = "FDIME_THREADS";

/// Windowed statistics of the estimates for one target MI.
///
/// `variance` is the population (divide-by-`n`) variance, so
/// `mse = bias^2 + variance` holds exactly up to rounding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub target_mi: f64,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
}

impl StepSummary {
    /// Placeholder for a step that never completed.
    pub fn diverged(target_mi: f64) -> Self {
        Self { target_mi, bias: f64::NAN, variance: f64::NAN, mse: f64::NAN }
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.variance.is_finite() && self.mse.is_finite()
    }
}

/// Bias, variance and MSE of the last `window` entries of `series`.
pub fn summarize(series: &[f64], window: usize, true_mi: f64) -> Result<StepSummary> {
    ensure!(window >= 1, Domain, "summary window must be non-empty");
    ensure!(window <= series.len(), Domain, "window {window} longer than series {}", series.len());
    let w = &series[series.len() - window..];
    let n = window as f64;
    let mean = w.iter().sum::<f64>() / n;
    let variance = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let mse = w.iter().map(|v| (v - true_mi).powi(2)).sum::<f64>() / n;
    Ok(StepSummary { target_mi: true_mi, bias: mean - true_mi, variance, mse })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaircaseConfig {
    pub steps: Vec<f64>,
    pub iters_per_step: usize,
    pub base: TrainConfig,
}

impl StaircaseConfig {
    pub const DEFAULT_STEPS: [f64; 5] = [2.0, 4.0, 6.0, 8.0, 10.0];

    /// Steps of 2, 4, ..., 10 nats with 4000 iterations each.
    pub fn new(base: TrainConfig) -> Self {
        Self { steps: Self::DEFAULT_STEPS.to_vec(), iters_per_step: 4000, base }
    }

    pub fn total_iterations(&self) -> usize {
        self.steps.len() * self.iters_per_step
    }

    /// Base config as trained: `iterations` equals one step.
    fn step_config(&self) -> TrainConfig {
        TrainConfig { iterations: self.iters_per_step, ..self.base.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.steps.is_empty(), Config, "staircase needs at least one step");
        ensure!(self.steps.iter().all(|s| *s >= 0.0 && s.is_finite()), Config, "steps must be finite and >= 0");
        ensure!(self.steps.windows(2).all(|w| w[0] < w[1]), Config, "steps must be strictly increasing");
        ensure!(self.iters_per_step >= 1, Config, "iters_per_step must be >= 1");
        self.step_config().validate()
    }
}

fn data_for(base: &DataConfig, target_mi: f64) -> Result<DataConfig> {
    Ok(DataConfig { rho: rho_for_target_mi(target_mi, base.d)?, ..*base })
}

const NAN_POINT: StepOutcome = StepOutcome { objective: f64::NAN, mi_estimate: f64::NAN };

/// Trains one network continuously through every step and summarizes the
/// final window of each step against its target.
pub fn run_staircase<T: Scalar>(config: &StaircaseConfig) -> Result<RunRecord> {
    config.validate()?;
    let mut trainer = Trainer::<T>::new(&config.step_config())?;
    let window = config.base.eval_window;
    let mut series = Vec::with_capacity(config.total_iterations());
    let mut summaries = Vec::with_capacity(config.steps.len());
    let mut diverged_at = None;
    for &target in &config.steps {
        let data = data_for(&config.base.data, target)?;
        let start = series.len();
        for _ in 0..config.iters_per_step {
            let iteration = series.len();
            let o = if diverged_at.is_some() {
                NAN_POINT
            } else {
                match trainer.step(&data) {
                    Ok(o) => o,
                    Err(Error::Numeric(_)) => {
                        diverged_at = Some(iteration);
                        NAN_POINT
                    }
                    Err(e) => return Err(e),
                }
            };
            series.push(SeriesPoint { iteration, objective: o.objective, mi_estimate: o.mi_estimate });
        }
        let est: Vec<f64> = series[start..].iter().map(|p| p.mi_estimate).collect();
        summaries.push(if diverged_at.is_some() { StepSummary::diverged(target) } else { summarize(&est, window, target)? });
    }
    Ok(RunRecord { series, summaries, window, diverged_at })
}

/// Number of parallel jobs: `FDIME_THREADS` if set to a positive integer,
/// otherwise the available parallelism.
pub fn worker_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `job` for every seed on a pool capped by [`worker_count`]; results
/// come back in seed order.
pub fn run_seeds<R, F>(seeds: &[u64], job: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(u64) -> Result<R> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| Error::Resource(format!("cannot start worker pool: {e}")))?;
    pool.install(|| seeds.par_iter().map(|&s| job(s)).collect())
}

/// `count` consecutive seeds starting at `base`.
pub fn consecutive_seeds(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| base.wrapping_add(i)).collect()
}

/// [`run_staircase`] for several seeds.
pub fn run_staircase_seeds<T: Scalar>(config: &StaircaseConfig, seeds: &[u64]) -> Result<Vec<RunRecord>> {
    run_seeds(seeds, |seed| {
        let mut c = config.clone();
        c.base.seed = seed;
        c.base.data.seed = seed;
        run_staircase::<T>(&c)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariancePoint {
    pub batch_size: usize,
    /// Windowed variance averaged over seeds.
    pub variance: f64,
    pub variance_times_n: f64,
    pub per_seed: Vec<f64>,
}

/// Windowed estimator variance at a fixed target MI for each batch size.
///
/// Every run trains `base.iterations` at `target_mi`; `base.batch_size` is
/// overridden by each entry of `batch_sizes`.
pub fn variance_vs_batch_sweep<T: Scalar>(
    base: &TrainConfig,
    batch_sizes: &[usize],
    target_mi: f64,
    seeds: &[u64],
) -> Result<Vec<VariancePoint>> {
    ensure!(!batch_sizes.is_empty() && !seeds.is_empty(), Config, "sweep needs batch sizes and seeds");
    ensure!(batch_sizes.windows(2).all(|w| w[0] < w[1]), Config, "batch sizes must be increasing");
    let data = data_for(&base.data, target_mi)?;
    batch_sizes
        .iter()
        .map(|&n| {
            let per_seed = run_seeds(seeds, |seed| {
                let c = TrainConfig { batch_size: n, seed, data: DataConfig { seed, ..data }, ..base.clone() };
                Ok(run_training::<T>(&c)?.summaries[0].variance)
            })?;
            let variance = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
            Ok(VariancePoint { batch_size: n, variance, variance_times_n: variance * n as f64, per_seed })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermVsDerange {
    pub permutation: RunRecord,
    pub derangement: RunRecord,
    pub log_n: f64,
    /// Windowed estimates of the final step.
    pub permutation_estimate: f64,
    pub derangement_estimate: f64,
    /// `permutation_estimate < ln N + 0.3`.
    pub permutation_below_bound: bool,
    /// `derangement_estimate > ln N`.
    pub derangement_above_log_n: bool,
}

/// Same staircase, same seed, once with naive permutations and once with
/// shift derangements as the marginal batch (deranged architecture).
pub fn permutation_vs_derangement<T: Scalar>(config: &StaircaseConfig) -> Result<PermVsDerange> {
    let arm = |strategy| {
        let mut c = config.clone();
        c.base.arch = ArchitectureKind::Deranged;
        c.base.marginal_strategy = strategy;
        c
    };
    let arms = [arm(MarginalStrategy::NaivePermutation), arm(MarginalStrategy::DerangeShift)];
    let mut records = run_seeds(&[0, 1], |i| run_staircase::<T>(&arms[i as usize]))?;
    let derangement = records.pop().expect("two arms");
    let permutation = records.pop().expect("two arms");
    let log_n = (config.base.batch_size as f64).ln();
    let last = |r: &RunRecord| {
        let est = r.estimates();
        let w = &est[est.len() - r.window..];
        w.iter().sum::<f64>() / w.len() as f64
    };
    let (pe, de) = (last(&permutation), last(&derangement));
    Ok(PermVsDerange {
        permutation_below_bound: pe < log_n + 0.3,
        derangement_above_log_n: de > log_n,
        permutation_estimate: pe,
        derangement_estimate: de,
        log_n,
        permutation,
        derangement,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub estimator: String,
    pub arch: String,
    pub d: usize,
    pub n: usize,
    pub seconds: f64,
}

/// Wall-clock seconds to build a trainer and run every step of `template`
/// (with `iters_per_step` possibly 0, which times setup only).
pub fn time_staircase<T: Scalar>(template: &StaircaseConfig) -> Result<f64> {
    let start = Instant::now();
    let mut trainer = Trainer::<T>::new(&TrainConfig {
        iterations: template.iters_per_step.max(1),
        eval_window: template.base.eval_window.min(template.iters_per_step.max(1)),
        ..template.base.clone()
    })?;
    for &target in &template.steps {
        let data = data_for(&template.base.data, target)?;
        for _ in 0..template.iters_per_step {
            trainer.step(&data)?;
        }
    }
    Ok(start.elapsed().as_secs_f64())
}

/// Times a staircase for every `(estimator, architecture)` entry at the
/// given `d` and `N`. Runs sequentially so timings do not contend.
pub fn timing_harness<T: Scalar>(
    entries: &[(EstimatorKind, ArchitectureKind)],
    d: usize,
    n: usize,
    template: &StaircaseConfig,
) -> Result<Vec<TimingRow>> {
    entries
        .iter()
        .map(|&(est, arch)| {
            let mut c = template.clone();
            c.base.estimator = est;
            c.base.arch = arch;
            c.base.data.d = d;
            c.base.batch_size = n;
            if arch == ArchitectureKind::Deranged && c.base.marginal_strategy == MarginalStrategy::AllPairs {
                c.base.marginal_strategy = MarginalStrategy::DerangeShift;
            }
            let seconds = time_staircase::<T>(&c)?;
            Ok(TimingRow { estimator: est.label(), arch: arch.name().into(), d, n, seconds })
        })
        .collect()
}

/// `estimator,arch,d,n,seconds` CSV.
pub fn timing_csv(rows: &[TimingRow]) -> String {
    let mut out = String::from("estimator,arch,d,n,seconds\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{:.6}\n", r.estimator, r.arch, r.d, r.n, r.seconds));
    }
    out
}

/// `Some(true)` when the deranged row for `estimator` at batch size `n` is
/// faster than the joint one; `None` if either is missing.
pub fn deranged_faster_than_joint(rows: &[TimingRow], estimator: &str, n: usize) -> Option<bool> {
    let find = |arch: &str| rows.iter().find(|r| r.estimator == estimator && r.arch == arch && r.n == n);
    Some(find("deranged")?.seconds < find("joint")?.seconds)
}

/// Convenience: true MI of the data a config describes.
pub fn true_mi_of(data: &DataConfig) -> Result<f64> {
    true_mi_gaussian(data.d, data.rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergences::DivergenceKind;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn summary_of_constant_series() {
        let s = summarize(&[1.5; 20], 10, 2.0).unwrap();
        assert_eq!(s, StepSummary { target_mi: 2.0, bias: -0.5, variance: 0.0, mse: 0.25 });
        let z = summarize(&[3.0; 4], 4, 3.0).unwrap();
        assert_eq!((z.bias, z.variance, z.mse), (0.0, 0.0, 0.0));
        assert!(summarize(&[1.0; 3], 0, 0.0).is_err());
        assert!(summarize(&[1.0; 3], 4, 0.0).is_err());
    }

    #[test]
    fn summary_moments_match_sampling_distribution() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(2.1, 0.2).unwrap();
        let xs: Vec<f64> = (0..100_000).map(|_| normal.sample(&mut rng)).collect();
        let s = summarize(&xs, xs.len(), 2.0).unwrap();
        assert!((s.bias - 0.1).abs() < 0.005);
        assert!((s.variance - 0.04).abs() < 0.002);
        assert!((s.mse - (s.bias * s.bias + s.variance)).abs() < 1e-9);
    }

    fn tiny_staircase() -> StaircaseConfig {
        let mut base = TrainConfig::new(EstimatorKind::FDime(DivergenceKind::GAN), DataConfig::gaussian(3, 0.0));
        base.hidden_dims = vec![16];
        base.batch_size = 16;
        base.eval_window = 10;
        StaircaseConfig { steps: vec![0.0, 1.0], iters_per_step: 30, base }
    }

    #[test]
    fn staircase_shape_and_determinism() {
        let c = tiny_staircase();
        let a = run_staircase::<f64>(&c).unwrap();
        assert_eq!(a.series.len(), 60);
        assert_eq!(a.summaries.len(), 2);
        assert_eq!(a.summaries[1].target_mi, 1.0);
        for s in &a.summaries {
            assert!((s.mse - (s.bias * s.bias + s.variance)).abs() < 1e-9);
        }
        assert_eq!(a, run_staircase::<f64>(&c).unwrap());
    }

    #[test]
    fn staircase_rejects_bad_steps() {
        let mut c = tiny_staircase();
        c.steps = vec![2.0, 2.0];
        assert!(run_staircase::<f64>(&c).is_err());
        c.steps = vec![1.0];
        c.iters_per_step = 5;
        assert!(run_staircase::<f64>(&c).is_err(), "window 10 > 5 iterations");
    }

    #[test]
    fn seeds_run_in_order() {
        let c = tiny_staircase();
        let runs = run_staircase_seeds::<f64>(&c, &consecutive_seeds(7, 3)).unwrap();
        assert_eq!(runs.len(), 3);
        let mut single = c.clone();
        single.base.seed = 8;
        single.base.data.seed = 8;
        assert_eq!(runs[1], run_staircase::<f64>(&single).unwrap());
    }

    #[test]
    fn zero_iteration_timing_is_setup_only() {
        let mut c = tiny_staircase();
        c.iters_per_step = 0;
        let s = time_staircase::<f64>(&c).unwrap();
        assert!(s < 0.5, "{s}");
        let rows = timing_harness::<f64>(
            &[(EstimatorKind::Nwj, ArchitectureKind::Deranged), (EstimatorKind::Nwj, ArchitectureKind::Joint)],
            3,
            16,
            &c,
        )
        .unwrap();
        let csv = timing_csv(&rows);
        assert!(csv.starts_with("estimator,arch,d,n,seconds\nnwj,deranged,3,16,"));
        assert!(deranged_faster_than_joint(&rows, "nwj", 16).is_some());
        assert!(deranged_faster_than_joint(&rows, "mine", 16).is_none());
    }

    #[test]
    fn variance_sweep_shape() {
        let mut base = tiny_staircase().base;
        base.iterations = 20;
        let pts = variance_vs_batch_sweep::<f64>(&base, &[8, 16], 0.5, &[1, 2]).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[1].batch_size, 16);
        assert_eq!(pts[0].per_seed.len(), 2);
        assert!(variance_vs_batch_sweep::<f64>(&base, &[16, 8], 0.5, &[1]).is_err());
    }

    #[test]
    fn worker_count_is_positive() {
        assert!(worker_count() >= 1);
    }
}
