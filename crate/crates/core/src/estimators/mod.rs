//! MI estimators: f-DIME (KL / GAN / HD), MINE, NWJ, SMILE, CPC and a
//! simplified NJEE, trained under the joint, separable or deranged critic
//! architectures.

mod critic;
mod njee;
mod objectives;
mod trainer;

use serde::{Deserialize, Serialize};

pub use critic::{discriminator_inputs, Critic, DiscriminatorInputs, CHUNK_ROWS};
pub use njee::{plug_in_entropy, quantize_column, Njee, NJEE_MAX_DIM};
pub use objectives::{
    cpc_objective, fdime_estimate_from_discriminator, fdime_objective, mine_objective, nwj_objective,
    smile_clipped_ratios, smile_objective, Objective,
};
pub use trainer::{fdime_estimate, run_training, StepOutcome, Trainer};

use crate::bench::StepSummary;
use crate::divergences::DivergenceKind;
use crate::error::{ensure, Result};
use crate::sampling::{DataConfig, MarginalStrategy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EstimatorKind {
    FDime(DivergenceKind),
    /// `ema_rate` is the weight kept on the running partition estimate.
    Mine { ema_rate: f64 },
    Nwj,
    /// `tau` may be `f64::INFINITY` (no clipping).
    Smile { tau: f64 },
    Cpc,
    Njee,
}

impl EstimatorKind {
    pub const MINE_DEFAULT: EstimatorKind = EstimatorKind::Mine { ema_rate: 0.99 };
    pub const SMILE_DEFAULT: EstimatorKind = EstimatorKind::Smile { tau: 1.0 };

    /// Short label, e.g. `gan-dime`, `smile-tau1`.
    pub fn label(&self) -> String {
        match self {
            EstimatorKind::FDime(k) => format!("{}-dime", k.name()),
            EstimatorKind::Mine { .. } => "mine".into(),
            EstimatorKind::Nwj => "nwj".into(),
            EstimatorKind::Smile { tau } if tau.is_infinite() => "smile-inf".into(),
            EstimatorKind::Smile { tau } => format!("smile-tau{tau}"),
            EstimatorKind::Cpc => "cpc".into(),
            EstimatorKind::Njee => "njee".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EstimatorKind::Mine { ema_rate } => {
                ensure!(ema_rate > 0.0 && ema_rate < 1.0, Config, "MINE ema_rate must lie in (0, 1), got {ema_rate}")
            }
            EstimatorKind::Smile { tau } => ensure!(tau > 0.0, Config, "SMILE tau must be > 0, got {tau}"),
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArchitectureKind {
    /// One network on concatenated `[x, y]`, all `N(N-1)` off-diagonal pairs.
    Joint,
    /// Two towers; score is the inner product of their embeddings.
    Separable { embed_dim: usize },
    /// One network on concatenated `[x, y]`, `N` marginal pairs.
    Deranged,
}

impl ArchitectureKind {
    pub const SEPARABLE_DEFAULT: ArchitectureKind = ArchitectureKind::Separable { embed_dim: 32 };

    pub fn default_for(estimator: &EstimatorKind) -> Self {
        match estimator {
            EstimatorKind::Cpc => Self::SEPARABLE_DEFAULT,
            _ => ArchitectureKind::Deranged,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ArchitectureKind::Joint => "joint",
            ArchitectureKind::Separable { .. } => "separable",
            ArchitectureKind::Deranged => "deranged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub estimator: EstimatorKind,
    pub arch: ArchitectureKind,
    pub data: DataConfig,
    pub batch_size: usize,
    pub iterations: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub hidden_dims: Vec<usize>,
    pub marginal_strategy: MarginalStrategy,
    pub eval_window: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Headline defaults: N = 64, 4000 iterations, Adam(5e-4, 0.9, 0.999),
    /// two hidden layers of 256, shift derangement, 500-iteration window.
    pub fn new(estimator: EstimatorKind, data: DataConfig) -> Self {
        Self {
            estimator,
            arch: ArchitectureKind::default_for(&estimator),
            data,
            batch_size: 64,
            iterations: 4000,
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            hidden_dims: vec![256, 256],
            marginal_strategy: MarginalStrategy::DerangeShift,
            eval_window: 500,
            seed: data.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.estimator.validate()?;
        self.data.validate()?;
        ensure!(self.batch_size >= 2, Config, "batch size must be >= 2, got {}", self.batch_size);
        ensure!(self.iterations >= 1, Config, "iterations must be >= 1");
        ensure!(
            self.eval_window >= 1 && self.eval_window <= self.iterations,
            Config,
            "eval window {} must lie in [1, iterations = {}]",
            self.eval_window,
            self.iterations
        );
        ensure!(self.lr > 0.0 && self.lr.is_finite(), Config, "learning rate must be > 0");
        ensure!((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2), Config, "Adam betas must lie in [0, 1)");
        ensure!(
            !self.hidden_dims.is_empty() && self.hidden_dims.iter().all(|&h| h >= 1),
            Config,
            "hidden_dims must be non-empty and positive"
        );
        match (self.estimator, self.arch) {
            (EstimatorKind::Njee, _) => {
                ensure!(
                    self.data.d <= NJEE_MAX_DIM,
                    Resource,
                    "NJEE needs 2d-1 classifiers; d = {} exceeds the limit of {NJEE_MAX_DIM}",
                    self.data.d
                );
            }
            (EstimatorKind::Cpc, ArchitectureKind::Deranged) => {
                return Err(crate::Error::Config("CPC needs the full score table: use joint or separable".into()));
            }
            (_, ArchitectureKind::Deranged) => ensure!(
                self.marginal_strategy != MarginalStrategy::AllPairs,
                Config,
                "the deranged architecture uses N marginal pairs; all-pairs means the joint architecture"
            ),
            (_, ArchitectureKind::Separable { embed_dim }) => {
                ensure!(embed_dim >= 1, Config, "embedding dimension must be >= 1")
            }
            (_, ArchitectureKind::Joint) => {}
        }
        if self.arch == ArchitectureKind::Joint {
            ensure!(
                self.batch_size <= crate::sampling::ALL_PAIRS_MAX_BATCH,
                Resource,
                "joint architecture with N = {} exceeds the all-pairs limit",
                self.batch_size
            );
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub iteration: usize,
    pub objective: f64,
    pub mi_estimate: f64,
}

/// Per-iteration series plus windowed summaries.
///
/// If training diverged, `diverged_at` holds the failing iteration and every
/// entry from there on is NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub series: Vec<SeriesPoint>,
    pub summaries: Vec<StepSummary>,
    pub window: usize,
    pub diverged_at: Option<usize>,
}

impl RunRecord {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.series.iter().map(|p| p.mi_estimate).collect()
    }

    /// Mean estimate over the final window.
    pub fn windowed_estimate(&self) -> f64 {
        let e = self.estimates();
        let w = &e[e.len().saturating_sub(self.window)..];
        w.iter().sum::<f64>() / w.len() as f64
    }
}
