//! Training loop shared by every estimator.

use super::critic::Critic;
use super::njee::Njee;
use super::objectives::{
    cpc_objective, fdime_objective, mine_objective, nwj_objective, smile_objective, Objective,
};
use super::{EstimatorKind, RunRecord, SeriesPoint, TrainConfig};
use crate::bench::{summarize, StepSummary};
use crate::divergences::{logit_terms, DivergenceKind};
use crate::error::{ensure, Error, Result};
use crate::oracle::true_mi_gaussian;
use crate::sampling::{sample_joint, seeded_rng, Batch, DataConfig, SeededRng};
use crate::scalar::{log_sum_exp, Scalar};

/// Objective value and MI estimate of one training iteration, in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub objective: f64,
    pub mi_estimate: f64,
}

#[derive(Debug, Clone)]
enum Model<T> {
    Critic(Critic<T>),
    Njee(Njee<T>),
}

/// Network, optimizer and sampling state of one run.
///
/// The data distribution is passed to every [`Trainer::step`], so the same
/// trainer can follow a staircase of target MI values without resetting.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    config: TrainConfig,
    model: Model<T>,
    rng: SeededRng,
    /// MINE's moving average of the log partition term.
    log_partition: Option<T>,
    iteration: usize,
}

/// Decorrelates the network seed from the data stream seed.
fn network_seed(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl<T: Scalar> Trainer<T> {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = (config.lr, config.beta1, config.beta2);
        let seed = network_seed(config.seed);
        let model = match config.estimator {
            EstimatorKind::Njee => {
                Model::Njee(Njee::new(config.data.d, config.batch_size, &config.hidden_dims, adam, seed)?)
            }
            _ => Model::Critic(Critic::new(config.arch, config.data.d, &config.hidden_dims, adam, seed)?),
        };
        Ok(Self { config: config.clone(), model, rng: seeded_rng(config.seed), log_partition: None, iteration: 0 })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// The critic, for every estimator but NJEE.
    pub fn critic(&self) -> Option<&Critic<T>> {
        match &self.model {
            Model::Critic(c) => Some(c),
            Model::Njee(_) => None,
        }
    }

    /// Draws a batch from `data`, reports the objective and MI estimate on
    /// it, and takes one optimizer step.
    ///
    /// A numeric error means the run diverged; parameters are left as they
    /// were before the failing step.
    pub fn step(&mut self, data: &DataConfig) -> Result<StepOutcome> {
        ensure!(data.d == self.config.data.d, Config, "data dimension {} differs from the trainer's {}", data.d, self.config.data.d);
        let n = self.config.batch_size;
        let batch: Batch<T> = sample_joint(data, n, &mut self.rng)?;
        let obj = match &mut self.model {
            Model::Njee(nj) => nj.step(&batch)?,
            Model::Critic(critic) => {
                let pairs = critic.marginal_pairs(n, self.config.marginal_strategy, &mut self.rng)?;
                let ema = &mut self.log_partition;
                match self.config.estimator {
                    EstimatorKind::FDime(kind) => critic.train_step(&batch, &pairs, |j, m| fdime_objective(kind, j, m))?,
                    EstimatorKind::Mine { ema_rate } => critic.train_step(&batch, &pairs, |j, m| {
                        let lp = log_sum_exp(m) - T::from_usize(m.len()).expect("count").ln();
                        let rate = T::lit(ema_rate);
                        let next = match *ema {
                            None => lp,
                            Some(prev) => log_sum_exp(&[rate.ln() + prev, (T::one() - rate).ln() + lp]),
                        };
                        if next.is_finite() {
                            *ema = Some(next);
                        }
                        mine_objective(j, m, Some(next))
                    })?,
                    EstimatorKind::Nwj => critic.train_step(&batch, &pairs, nwj_objective)?,
                    EstimatorKind::Smile { tau } => {
                        critic.train_step(&batch, &pairs, |j, m| smile_objective(j, m, T::lit(tau)))?
                    }
                    EstimatorKind::Cpc => critic.train_step(&batch, &pairs, cpc_objective)?,
                    EstimatorKind::Njee => unreachable!("NJEE has no critic"),
                }
            }
        };
        self.iteration += 1;
        finite_outcome(&obj)
    }
}

fn finite_outcome<T: Scalar>(obj: &Objective<T>) -> Result<StepOutcome> {
    let out = StepOutcome { objective: obj.value.to_f64_lossy(), mi_estimate: obj.estimate.to_f64_lossy() };
    if out.objective.is_finite() && out.mi_estimate.is_finite() {
        Ok(out)
    } else {
        Err(Error::Numeric("objective or estimate is not finite".into()))
    }
}

/// f-DIME readout on a batch: mean log density-ratio over the joint pairs.
/// Only `(x_i, y_i)` pairs are scored; no marginal samples are involved.
pub fn fdime_estimate<T: Scalar>(critic: &Critic<T>, kind: DivergenceKind, batch: &Batch<T>) -> Result<T> {
    let scores = critic.joint_scores(batch)?;
    ensure!(!scores.is_empty(), Shape, "estimate needs at least one joint pair");
    let total: T = scores.iter().map(|&z| logit_terms(kind, z).log_ratio).sum();
    Ok(total / T::from_usize(scores.len()).expect("count"))
}

/// Trains for `config.iterations` on `config.data` and summarizes the final
/// `config.eval_window` estimates against the true MI.
pub fn run_training<T: Scalar>(config: &TrainConfig) -> Result<RunRecord> {
    let mut trainer = Trainer::<T>::new(config)?;
    let truth = true_mi_gaussian(config.data.d, config.data.rho)?;
    let mut series = Vec::with_capacity(config.iterations);
    let mut diverged_at = None;
    for iteration in 0..config.iterations {
        let point = if diverged_at.is_some() {
            None
        } else {
            match trainer.step(&config.data) {
                Ok(o) => Some(o),
                Err(Error::Numeric(_)) => {
                    diverged_at = Some(iteration);
                    None
                }
                Err(e) => return Err(e),
            }
        };
        let o = point.unwrap_or(StepOutcome { objective: f64::NAN, mi_estimate: f64::NAN });
        series.push(SeriesPoint { iteration, objective: o.objective, mi_estimate: o.mi_estimate });
    }
    let summary = if diverged_at.is_some() {
        StepSummary::diverged(truth)
    } else {
        let est: Vec<f64> = series.iter().map(|p| p.mi_estimate).collect();
        summarize(&est, config.eval_window, truth)?
    };
    Ok(RunRecord { series, summaries: vec![summary], window: config.eval_window, diverged_at })
}
