//! Training loops: Jarzynski-weighted SMC (full and walker-mini-batched),
//! contrastive divergence and persistent contrastive divergence.
//!
//! Every trainer emits one [`TrainRecord`] for the initial state (`k = 0`)
//! and one per iteration after that, both to the caller's observer and into
//! the returned history. A run is a pure function of its inputs and the
//! seed; the thread count does not change any output bit.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use thiserror::Error as ThisError;

use crate::energy::{Dataset, EnergyModel};
use crate::error::{check_dim, Error, Result};
use crate::population::{data_means, Population};
use crate::resampling::Resampler;
use crate::rng::{stream_rng, Stream};

mod baselines;
mod jarzynski;
mod kernel;
mod optimizer;
mod protocol;

pub use baselines::{train_cd, train_pcd};
pub use jarzynski::{train_jarzynski, train_jarzynski_from};
pub use optimizer::{Optimizer, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use protocol::{run_protocol, ProtocolConfig, ProtocolStep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Algorithm {
    #[default]
    Jarzynski,
    Pcd,
    Cd,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Jarzynski => "jarzynski",
            Algorithm::Pcd => "pcd",
            Algorithm::Cd => "cd",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jarzynski" => Ok(Algorithm::Jarzynski),
            "pcd" => Ok(Algorithm::Pcd),
            "cd" => Ok(Algorithm::Cd),
            other => Err(Error::invalid(format!(
                "unknown algorithm {other:?} (expected jarzynski, pcd or cd)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    /// Number of parameter updates `K`.
    pub iterations: usize,
    /// ULA step size `h`.
    pub step_size: f64,
    /// One rate for every parameter block, or one per block.
    pub learning_rates: Vec<f64>,
    pub optimizer: OptimizerKind,
    /// Walker count `N`.
    pub walkers: usize,
    /// Walkers moved per iteration (`N′`). `None` moves all of them.
    pub walker_batch: Option<usize>,
    /// Data points per gradient evaluation. `None` uses the full set.
    pub data_batch: Option<usize>,
    pub resampler: Resampler,
    /// Resample when the ESS drops strictly below this value.
    pub ess_threshold: f64,
    /// First iteration at which resampling may happen.
    pub resample_from: usize,
    /// Inner ULA steps between CD restarts (`P`).
    pub cd_steps: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Jarzynski,
            iterations: 1000,
            step_size: 0.1,
            learning_rates: vec![0.1],
            optimizer: OptimizerKind::Sgd,
            walkers: 1000,
            walker_batch: None,
            data_batch: None,
            resampler: Resampler::Systematic,
            ess_threshold: 1.0 / 1.05,
            resample_from: 0,
            cd_steps: 4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate<M: EnergyModel + ?Sized>(&self, model: &M, theta0: &[f64], data: &Dataset) -> Result<()> {
        model.check_theta(theta0)?;
        check_dim(model.dim(), data.dim())?;
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::invalid("step size must be positive"));
        }
        if self.walkers == 0 {
            return Err(Error::invalid("walker count must be at least 1"));
        }
        if let Some(nb) = self.walker_batch {
            if nb == 0 || nb > self.walkers {
                return Err(Error::invalid(format!(
                    "walker batch {nb} must lie in 1..={}",
                    self.walkers
                )));
            }
        }
        if let Some(db) = self.data_batch {
            if db == 0 || db > data.len() {
                return Err(Error::invalid(format!(
                    "data batch {db} must lie in 1..={}",
                    data.len()
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.ess_threshold) {
            return Err(Error::invalid("ESS threshold must lie in [0, 1]"));
        }
        if self.algorithm == Algorithm::Cd && self.cd_steps == 0 {
            return Err(Error::invalid("CD needs at least one inner step"));
        }
        Optimizer::for_blocks(self.optimizer, &model.blocks(), &self.learning_rates).map(|_| ())
    }

    /// Threshold in force at iteration `k`.
    pub fn threshold_at(&self, k: usize) -> f64 {
        if k >= self.resample_from {
            self.ess_threshold
        } else {
            0.0
        }
    }
}

/// Diagnostics of one iteration. Fields a trainer cannot provide are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub k: usize,
    pub theta: Vec<f64>,
    pub ess: Option<f64>,
    /// Running `log Z_θ` estimate from the weights.
    pub log_z_est: Option<f64>,
    /// `log Z̃ + mean data energy`.
    pub ce_est: Option<f64>,
    /// Cross-entropy with the closed-form `log Z_θ`, when the model has one.
    pub ce_exact: Option<f64>,
    /// Mass of the first mode for two-mode models.
    pub p_k: Option<f64>,
    pub resampled: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub theta: Vec<f64>,
    /// Final walkers. Unweighted for CD and PCD.
    pub population: Population,
    pub history: Vec<TrainRecord>,
    pub resample_count: usize,
}

/// A run that stopped early, with everything recorded up to that point.
#[derive(Debug, Clone, ThisError)]
#[error("training stopped after {} records: {error}", .history.len())]
pub struct TrainAbort {
    #[source]
    pub error: Error,
    /// Last valid parameters.
    pub theta: Vec<f64>,
    pub history: Vec<TrainRecord>,
}

impl TrainAbort {
    pub(crate) fn at_start(error: Error, theta0: &[f64]) -> Self {
        Self {
            error,
            theta: theta0.to_vec(),
            history: Vec::new(),
        }
    }
}

pub type TrainResult = std::result::Result<TrainOutput, TrainAbort>;

/// Runs the trainer selected by `config.algorithm`.
pub fn train<M: EnergyModel + ?Sized>(
    model: &M,
    theta0: &[f64],
    data: &Dataset,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&TrainRecord),
) -> TrainResult {
    match config.algorithm {
        Algorithm::Jarzynski => train_jarzynski(model, theta0, data, config, observer),
        Algorithm::Pcd => train_pcd(model, theta0, data, config, observer),
        Algorithm::Cd => train_cd(model, theta0, data, config, observer),
    }
}

/// Starting point for two-mode Gaussian-mixture training: `a₁ = -0.1`,
/// `b₁ = 0.1`, the other mean coordinates drawn as `10⁻²` times a standard
/// normal, and `z = 0`. Layout `[a, b, z]`.
pub fn gmm_initial_theta(dim: usize, seed: u64) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = stream_rng(seed, Stream::Theta);
    let mut theta = vec![0.0; 2 * dim + 1];
    for (j, t) in theta[..2 * dim].iter_mut().enumerate() {
        let noise: f64 = StandardNormal.sample(&mut rng);
        *t = 1e-2 * noise;
        if j == 0 {
            *t = -0.1;
        } else if j == dim {
            *t = 0.1;
        }
    }
    theta
}

/// Data indices per iteration: the full set, or successive slices of a
/// per-epoch shuffle (sampling without replacement within an epoch).
pub(crate) struct DataBatcher {
    n: usize,
    batch: Option<usize>,
    seed: u64,
    epoch: Option<usize>,
    order: Vec<usize>,
}

impl DataBatcher {
    pub fn new(n: usize, batch: Option<usize>, seed: u64) -> Self {
        Self {
            n,
            batch: batch.filter(|&b| b < n),
            seed,
            epoch: None,
            order: Vec::new(),
        }
    }

    pub fn is_full(&self) -> bool {
        self.batch.is_none()
    }

    /// Indices for iteration `k`, or `None` for the full set.
    pub fn indices(&mut self, k: usize) -> Option<&[usize]> {
        let b = self.batch?;
        let per_epoch = self.n / b;
        let epoch = k / per_epoch;
        if self.epoch != Some(epoch) {
            self.order = (0..self.n).collect();
            let mut rng = stream_rng(self.seed, Stream::DataEpoch { epoch: epoch as u64 });
            self.order.shuffle(&mut rng);
            self.epoch = Some(epoch);
        }
        let start = (k % per_epoch) * b;
        Some(&self.order[start..start + b])
    }
}

/// Mean `∂_θU` over the data batch of iteration `k`.
pub(crate) fn data_term<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &[f64],
    data: &Dataset,
    batcher: &mut DataBatcher,
    k: usize,
    full_grad: &[f64],
) -> Vec<f64> {
    match batcher.indices(k) {
        None => full_grad.to_vec(),
        Some(idx) => data_means(model, theta, data, Some(idx), true).1,
    }
}

/// Record fields that depend only on `θ` and the data.
pub(crate) fn base_record<M: EnergyModel + ?Sized>(
    model: &M,
    k: usize,
    theta: &[f64],
    mean_data_energy: f64,
) -> TrainRecord {
    TrainRecord {
        k,
        theta: theta.to_vec(),
        ess: None,
        log_z_est: None,
        ce_est: None,
        ce_exact: model.log_partition(theta).map(|lz| lz + mean_data_energy),
        p_k: model.mode_mass(theta),
        resampled: false,
    }
}

pub(crate) fn check_descent(descent: &[f64], theta: &[f64], iteration: usize) -> Result<()> {
    if descent.iter().chain(theta).all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteGradient { iteration })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batcher_covers_each_epoch_once() {
        let mut b = DataBatcher::new(10, Some(3), 5);
        let mut seen: Vec<usize> = (0..3).flat_map(|k| b.indices(k).unwrap().to_vec()).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 9);
        let e0 = b.indices(0).unwrap().to_vec();
        let e1 = b.indices(3).unwrap().to_vec();
        assert_ne!(e0, e1);
        assert!(DataBatcher::new(10, Some(10), 5).indices(0).is_none());
        assert!(DataBatcher::new(10, None, 5).is_full());
    }

    #[test]
    fn initial_theta_layout() {
        let t = gmm_initial_theta(4, 1);
        assert_eq!(t.len(), 9);
        assert_eq!(t[0], -0.1);
        assert_eq!(t[4], 0.1);
        assert_eq!(t[8], 0.0);
        assert!(t[1..4].iter().chain(&t[5..8]).all(|v| v.abs() < 0.1 && *v != 0.0));
        assert_eq!(t, gmm_initial_theta(4, 1));
    }

    #[test]
    fn algorithm_names() {
        for a in [Algorithm::Jarzynski, Algorithm::Pcd, Algorithm::Cd] {
            assert_eq!(a.as_str().parse::<Algorithm>().unwrap(), a);
        }
        assert!("mala".parse::<Algorithm>().is_err());
    }

    #[test]
    fn threshold_schedule() {
        let cfg = TrainConfig {
            ess_threshold: 0.5,
            resample_from: 10,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.threshold_at(9), 0.0);
        assert_eq!(cfg.threshold_at(10), 0.5);
    }
}
