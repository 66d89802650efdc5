//! Sequential Monte-Carlo training of energy-based models.
//!
//! Walkers evolve by the unadjusted Langevin algorithm (ULA) while the model
//! parameters move. Each walker carries a Jarzynski log-weight, so weighted
//! averages stay unbiased for the current model. That gives an estimator for
//! the cross-entropy gradient and for the partition function at every
//! training step. Contrastive divergence (CD) and persistent CD (PCD) baselines,
//! three resampling schemes, analytic Gaussian-mixture models, quadrature
//! oracles and the reduced one-dimensional learning dynamics are included
//! for comparison.
//!
//! Parameter vectors are flat `[f64]` slices. Each model documents its block
//! layout (see [`energy::ParamBlock`]).

pub mod analysis;
pub mod dynamics;
pub mod energy;
mod error;
pub mod math;
mod par;
pub mod population;
pub mod resampling;
pub mod rng;
pub mod training;

pub use energy::{EnergyModel, GaussianModel, GmmModel, GmmParams, GmmZOnly, ModelKind};
pub use error::{Error, Result};
pub use population::{EssValue, Population};
pub use resampling::Resampler;
pub use training::{Algorithm, OptimizerKind, TrainConfig, TrainOutput, TrainRecord};
