//! SMC training with Jarzynski weights.

use rand::seq::index::sample;

use super::kernel::{advance, Advance, WalkerCache};
use super::{
    base_record, check_descent, data_term, DataBatcher, Optimizer, TrainAbort, TrainConfig,
    TrainOutput, TrainRecord, TrainResult,
};
use crate::energy::{Dataset, EnergyModel};
use crate::error::{Error, Result};
use crate::population::{data_means, Population};
use crate::rng::{stream_rng, Stream};

/// Jarzynski-weighted training from walkers drawn exactly from `ρ_{θ₀}`.
///
/// With `walker_batch` below `walkers` only a random subset moves each
/// iteration; the others keep their position and pick up the energy
/// difference `U_{θ_k}(x) - U_{θ_{k+1}}(x)` in their weight. The gradient
/// estimate always uses every walker.
pub fn train_jarzynski<M: EnergyModel + ?Sized>(
    model: &M,
    theta0: &[f64],
    data: &Dataset,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&TrainRecord),
) -> TrainResult {
    config
        .validate(model, theta0, data)
        .map_err(|e| TrainAbort::at_start(e, theta0))?;
    let pop = Population::sample_from(model, theta0, config.walkers, config.seed)
        .map_err(|e| TrainAbort::at_start(e, theta0))?;
    train_jarzynski_from(model, theta0, pop, data, config, observer)
}

/// As [`train_jarzynski`] but from a caller-supplied population, which must
/// be distributed as `ρ_{θ₀}` for the weights to be exact. The walker count
/// in `config` is ignored in favour of the population size.
pub fn train_jarzynski_from<M: EnergyModel + ?Sized>(
    model: &M,
    theta0: &[f64],
    mut pop: Population,
    data: &Dataset,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&TrainRecord),
) -> TrainResult {
    let config = TrainConfig {
        walkers: pop.len(),
        ..config.clone()
    };
    let start = |e: Error| TrainAbort::at_start(e, theta0);
    config.validate(model, theta0, data).map_err(start)?;
    crate::error::check_dim(model.dim(), pop.dim()).map_err(start)?;
    let mut opt = Optimizer::for_blocks(config.optimizer, &model.blocks(), &config.learning_rates)
        .map_err(start)?;

    let log_z0 = model.log_partition(theta0);
    let n = pop.len();
    let mut theta = theta0.to_vec();
    let mut cache = WalkerCache::compute(model, &theta, pop.positions());
    let mut batcher = DataBatcher::new(data.len(), config.data_batch, config.seed);
    let full = batcher.is_full();
    let (mut mean_u, mut full_grad) = data_means(model, &theta, data, None, full);

    let mut history = Vec::with_capacity(config.iterations + 1);
    let mut emit = |rec: TrainRecord, history: &mut Vec<TrainRecord>| {
        observer(&rec);
        history.push(rec);
    };
    emit(weighted_record(model, 0, &theta, mean_u, &pop, log_z0, false), &mut history);

    let mut resample_count = 0;
    for k in 0..config.iterations {
        let step = (|| -> Result<bool> {
            let p = pop.normalized_weights();
            let walker_term = cache.weighted_grad_theta(Some(&p));
            let data_mean = data_term(model, &theta, data, &mut batcher, k, &full_grad);
            let descent: Vec<f64> = walker_term.iter().zip(&data_mean).map(|(w, d)| w - d).collect();
            check_descent(&descent, &theta, k)?;
            let mut next = theta.clone();
            opt.step(&mut next, &descent)?;
            check_descent(&descent, &next, k)?;

            let mask = config.walker_batch.filter(|&b| b < n).map(|b| {
                let mut rng = stream_rng(config.seed, Stream::WalkerBatch { iteration: k as u64 });
                let mut m = vec![false; n];
                for i in sample(&mut rng, n, b) {
                    m[i] = true;
                }
                m
            });
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
                    moving: mask.as_deref(),
                },
            )?;
            theta = next;

            let threshold = config.threshold_at(k + 1);
            let resampled = pop.ess().value() < threshold;
            if resampled {
                let mut rng = stream_rng(config.seed, Stream::Resample { iteration: k as u64 + 1 });
                let ancestors = pop.resample(config.resampler, &mut rng)?;
                cache.permute(&ancestors);
            }
            (mean_u, full_grad) = data_means(model, &theta, data, None, full);
            Ok(resampled)
        })();
        match step {
            Ok(resampled) => {
                resample_count += usize::from(resampled);
                emit(
                    weighted_record(model, k + 1, &theta, mean_u, &pop, log_z0, resampled),
                    &mut history,
                );
            }
            Err(error) => {
                let theta = history.last().map_or_else(|| theta0.to_vec(), |r| r.theta.clone());
                return Err(TrainAbort { error, theta, history });
            }
        }
    }
    Ok(TrainOutput {
        theta,
        population: pop,
        history,
        resample_count,
    })
}

fn weighted_record<M: EnergyModel + ?Sized>(
    model: &M,
    k: usize,
    theta: &[f64],
    mean_u: f64,
    pop: &Population,
    log_z0: Option<f64>,
    resampled: bool,
) -> TrainRecord {
    let log_z_est = log_z0.map(|lz| pop.log_partition_estimate(lz));
    TrainRecord {
        ess: Some(pop.ess().value()),
        log_z_est,
        ce_est: log_z_est.map(|lz| lz + mean_u),
        resampled,
        ..base_record(model, k, theta, mean_u)
    }
}
