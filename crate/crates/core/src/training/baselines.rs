//! Unweighted baselines: contrastive divergence and its persistent variant.

use rand::Rng;

use super::kernel::{advance, Advance, WalkerCache};
use super::{
    base_record, check_descent, data_term, DataBatcher, Optimizer, TrainAbort, TrainConfig,
    TrainOutput, TrainRecord, TrainResult,
};
use crate::energy::{Dataset, EnergyModel};
use crate::error::{Error, Result};
use crate::population::{data_means, Population};
use crate::rng::{stream_rng, Stream};

/// Walker `i` restarted at a data point drawn uniformly with replacement.
fn draw_from_data(data: &Dataset, n: usize, seed: u64, iteration: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * data.dim());
    for i in 0..n {
        let mut rng = stream_rng(
            seed,
            Stream::Restart {
                iteration: iteration as u64,
                walker: i as u64,
            },
        );
        out.extend_from_slice(data.point(rng.random_range(0..data.len())));
    }
    out
}

/// Persistent contrastive divergence. Walkers start at data points drawn
/// with replacement, follow ULA under the current parameters and are never
/// reweighted or restarted.
pub fn train_pcd<M: EnergyModel + ?Sized>(
    model: &M,
    theta0: &[f64],
    data: &Dataset,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&TrainRecord),
) -> TrainResult {
    let start = |e: Error| TrainAbort::at_start(e, theta0);
    config.validate(model, theta0, data).map_err(start)?;
    let mut opt = Optimizer::for_blocks(config.optimizer, &model.blocks(), &config.learning_rates)
        .map_err(start)?;
    let mut pop = Population::new(model.dim(), draw_from_data(data, config.walkers, config.seed, 0))
        .map_err(start)?;
    let mut theta = theta0.to_vec();
    let mut cache = WalkerCache::compute(model, &theta, pop.positions());
    let mut batcher = DataBatcher::new(data.len(), config.data_batch, config.seed);
    let full = batcher.is_full();
    let (mut mean_u, mut full_grad) = data_means(model, &theta, data, None, full);

    let mut history = Vec::with_capacity(config.iterations + 1);
    let rec = base_record(model, 0, &theta, mean_u);
    observer(&rec);
    history.push(rec);

    for k in 0..config.iterations {
        let step = (|| -> Result<()> {
            let walker_term = cache.weighted_grad_theta(None);
            let data_mean = data_term(model, &theta, data, &mut batcher, k, &full_grad);
            let descent: Vec<f64> = walker_term.iter().zip(&data_mean).map(|(w, d)| w - d).collect();
            let mut next = theta.clone();
            opt.step(&mut next, &descent)?;
            check_descent(&descent, &next, k)?;
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
                    weighted: false,
                    moving: None,
                },
            )?;
            theta = next;
            (mean_u, full_grad) = data_means(model, &theta, data, None, full);
            Ok(())
        })();
        if let Err(error) = step {
            let theta = history.last().map_or_else(|| theta0.to_vec(), |r| r.theta.clone());
            return Err(TrainAbort { error, theta, history });
        }
        let rec = base_record(model, k + 1, &theta, mean_u);
        observer(&rec);
        history.push(rec);
    }
    Ok(TrainOutput {
        theta,
        population: pop,
        history,
        resample_count: 0,
    })
}

/// Contrastive divergence. Every iteration restarts `N` walkers at data
/// points drawn with replacement, runs `P` ULA steps under the current
/// parameters, and uses the unweighted walker average in the gradient.
pub fn train_cd<M: EnergyModel + ?Sized>(
    model: &M,
    theta0: &[f64],
    data: &Dataset,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&TrainRecord),
) -> TrainResult {
    let start = |e: Error| TrainAbort::at_start(e, theta0);
    config.validate(model, theta0, data).map_err(start)?;
    let mut opt = Optimizer::for_blocks(config.optimizer, &model.blocks(), &config.learning_rates)
        .map_err(start)?;
    let dim = model.dim();
    let n = config.walkers;
    let mut theta = theta0.to_vec();
    let mut positions = draw_from_data(data, n, config.seed, 0);
    let mut batcher = DataBatcher::new(data.len(), config.data_batch, config.seed);
    let full = batcher.is_full();
    let (mut mean_u, mut full_grad) = data_means(model, &theta, data, None, full);

    let mut history = Vec::with_capacity(config.iterations + 1);
    let rec = base_record(model, 0, &theta, mean_u);
    observer(&rec);
    history.push(rec);

    let mut scratch = vec![0.0; n];
    for k in 0..config.iterations {
        let step = (|| -> Result<()> {
            positions = draw_from_data(data, n, config.seed, k);
            let mut cache = WalkerCache::compute(model, &theta, &positions);
            for p in 0..config.cd_steps {
                advance(
                    model,
                    &theta,
                    &mut positions,
                    &mut scratch,
                    &mut cache,
                    &Advance {
                        h: config.step_size,
                        seed: config.seed,
                        iteration: k,
                        substep: p,
                        weighted: false,
                        moving: None,
                    },
                )?;
            }
            let walker_term = cache.weighted_grad_theta(None);
            let data_mean = data_term(model, &theta, data, &mut batcher, k, &full_grad);
            let descent: Vec<f64> = walker_term.iter().zip(&data_mean).map(|(w, d)| w - d).collect();
            let mut next = theta.clone();
            opt.step(&mut next, &descent)?;
            check_descent(&descent, &next, k)?;
            theta = next;
            (mean_u, full_grad) = data_means(model, &theta, data, None, full);
            Ok(())
        })();
        if let Err(error) = step {
            let theta = history.last().map_or_else(|| theta0.to_vec(), |r| r.theta.clone());
            return Err(TrainAbort { error, theta, history });
        }
        let rec = base_record(model, k + 1, &theta, mean_u);
        observer(&rec);
        history.push(rec);
    }
    let population =
        Population::new(dim, positions).map_err(|e| TrainAbort { error: e, theta: theta.clone(), history: history.clone() })?;
    Ok(TrainOutput {
        theta,
        population,
        history,
        resample_count: 0,
    })
}
