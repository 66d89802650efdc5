//! Weighted walkers under a prescribed parameter schedule.
//!
//! The same move and weight update as the trainer, with `θ_k` supplied by
//! the caller instead of an optimizer. Used to check the Jarzynski identity
//! and to estimate free-energy differences along a fixed path.

use super::kernel::{advance, Advance, WalkerCache};
use crate::energy::EnergyModel;
use crate::error::{check_dim, Error, Result};
use crate::population::Population;
use crate::resampling::Resampler;
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    pub steps: usize,
    pub step_size: f64,
    /// ESS threshold and scheme. `None` never resamples.
    pub resample: Option<(f64, Resampler)>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolStep {
    pub k: usize,
    pub ess: f64,
    /// Estimate of `log Z_{θ_k} - log Z_{θ_0}`.
    pub log_z_ratio: f64,
    pub resampled: bool,
}

/// Evolves `pop` through `θ_0, θ_1, …, θ_steps` given by `schedule`. The
/// observer sees the state after every step, starting with `k = 0`.
pub fn run_protocol<M: EnergyModel + ?Sized>(
    model: &M,
    schedule: &dyn Fn(usize) -> Vec<f64>,
    pop: &mut Population,
    config: &ProtocolConfig,
    observer: &mut dyn FnMut(&ProtocolStep, &Population),
) -> Result<Vec<ProtocolStep>> {
    check_dim(model.dim(), pop.dim())?;
    if !(config.step_size.is_finite() && config.step_size > 0.0) {
        return Err(Error::invalid("step size must be positive"));
    }
    if let Some((c, _)) = config.resample {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::invalid("ESS threshold must lie in [0, 1]"));
        }
    }
    let theta0 = schedule(0);
    model.check_theta(&theta0)?;
    let mut cache = WalkerCache::compute(model, &theta0, pop.positions());
    let snapshot = |k, resampled, pop: &Population| ProtocolStep {
        k,
        ess: pop.ess().value(),
        log_z_ratio: pop.log_partition_estimate(0.0),
        resampled,
    };
    let mut steps = Vec::with_capacity(config.steps + 1);
    let first = snapshot(0, false, pop);
    observer(&first, pop);
    steps.push(first);
    for k in 0..config.steps {
        let next = schedule(k + 1);
        model.check_theta(&next)?;
        let (positions, log_weights) = pop.parts_mut();
        advance(
            model,
            &next,
            positions,
            log_weights,
            &mut cache,
            &Advance {
                h: config.step_size,
                seed: config.seed,
                iteration: k,
                substep: 0,
                weighted: true,
                moving: None,
            },
        )?;
        let mut resampled = false;
        if let Some((c, scheme)) = config.resample {
            if pop.ess().value() < c {
                let mut rng = stream_rng(config.seed, Stream::Resample { iteration: k as u64 + 1 });
                let ancestors = pop.resample(scheme, &mut rng)?;
                cache.permute(&ancestors);
                resampled = true;
            }
        }
        let s = snapshot(k + 1, resampled, pop);
        observer(&s, pop);
        steps.push(s);
    }
    Ok(steps)
}
