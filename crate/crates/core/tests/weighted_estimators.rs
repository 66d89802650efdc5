//! Statistical checks of the weighted estimators against independent
//! references: closed-form partition functions, quadrature, and the
//! path-density form of the weights.

use proptest::prelude::*;
use smc_ebm::analysis::{quadrature_expectation, GridSpec};
use smc_ebm::dynamics::log_transition_density;
use smc_ebm::energy::Dataset;
use smc_ebm::rng::{stream_rng, Stream};
use smc_ebm::training::{run_protocol, ProtocolConfig};
use smc_ebm::{EnergyModel, GmmModel, GmmParams, GmmZOnly, Population, Resampler};

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn frozen(theta: Vec<f64>) -> impl Fn(usize) -> Vec<f64> {
    move |_| theta.clone()
}

#[test]
fn static_log_partition_estimate_is_unbiased() {
    let model = GmmModel::new(1);
    let theta = vec![-3.0, 2.0, 0.4];
    let log_z = model.log_partition(&theta).unwrap();
    let estimates: Vec<f64> = (0..100)
        .map(|r| {
            let mut pop = Population::sample_from(&model, &theta, 1000, 1000 + r).unwrap();
            let cfg = ProtocolConfig { steps: 20, step_size: 0.1, resample: None, seed: r };
            run_protocol(&model, &frozen(theta.clone()), &mut pop, &cfg, &mut |_, _| {}).unwrap();
            pop.log_partition_estimate(log_z)
        })
        .collect();
    let (mean, se) = mean_and_se(&estimates);
    assert!((mean - log_z).abs() < 3.0 * se, "mean {mean}, truth {log_z}, se {se}");
}

#[test]
fn weighted_dz_estimate_matches_quadrature() {
    let model = GmmZOnly::one_d(-4.0, 3.0);
    let theta = [0.3];
    let grid = GridSpec::around(&[&[-4.0], &[3.0]], 12.0).unwrap();
    let oracle = quadrature_expectation(&model, &theta, &|x| model.dz_energy(0.3, x), &grid).unwrap();
    let data = Dataset::new(1, vec![-4.2, -3.5, 2.0, 3.3, 3.9]).unwrap();
    let data_mean: f64 = data.iter().map(|x| model.dz_energy(0.3, x)).sum::<f64>() / 5.0;
    let estimates: Vec<f64> = (0..200)
        .map(|r| {
            let mut pop = Population::sample_from(&model, &theta, 500, 50 + r).unwrap();
            let cfg = ProtocolConfig { steps: 10, step_size: 0.2, resample: None, seed: r };
            run_protocol(&model, &frozen(theta.to_vec()), &mut pop, &cfg, &mut |_, _| {}).unwrap();
            pop.grad_estimator(&model, &theta, &data).unwrap()[0]
        })
        .collect();
    let (mean, se) = mean_and_se(&estimates);
    let expect = oracle - data_mean;
    assert!((mean - expect).abs() < 3.0 * se, "mean {mean}, oracle {expect}, se {se}");
}

#[test]
fn moving_protocol_keeps_log_z_continuous_across_resamples() {
    let model = GmmModel::new(1);
    let sched = |k: usize| vec![-10.0, 6.0, -(3f64.ln()) * k as f64 / 200.0];
    let mut pop = Population::sample_from(&model, &sched(0), 2000, 5).unwrap();
    let cfg = ProtocolConfig {
        steps: 200,
        step_size: 0.1,
        resample: Some((0.99, Resampler::Systematic)),
        seed: 5,
    };
    let steps = run_protocol(&model, &sched, &mut pop, &cfg, &mut |s, p| {
        if s.resampled {
            assert_eq!(p.ess().value(), 1.0);
        }
    })
    .unwrap();
    assert!(steps.iter().any(|s| s.resampled));
    let end = steps.last().unwrap().log_z_ratio;
    assert!((end - 2f64.ln()).abs() < 0.05 * 2f64.ln(), "{end}");
}

/// `log e^{A_k}` from the path densities:
/// `U_0(X_0) - U_k(X_k) + Σ_q [log β_q(X_q, X_{q-1}) - log β_{q-1}(X_{q-1}, X_q)]`.
fn path_log_weight(model: &GmmModel, thetas: &[Vec<f64>], path: &[Vec<f64>], h: f64) -> f64 {
    let k = path.len() - 1;
    let mut s = model.energy(&thetas[0], &path[0]) - model.energy(&thetas[k], &path[k]);
    for q in 1..=k {
        s += log_transition_density(model, &thetas[q], &path[q], &path[q - 1], h).unwrap()
            - log_transition_density(model, &thetas[q - 1], &path[q - 1], &path[q], h).unwrap();
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn weights_match_the_path_density_ratio(seed in any::<u64>()) {
        use rand_distr::{Distribution, StandardNormal};
        let d = 2;
        let model = GmmModel::new(d);
        let base = GmmParams::aligned(d, -2.0, 2.5, 0.2).to_flat();
        let mut rng = stream_rng(seed, Stream::Theta);
        let thetas: Vec<Vec<f64>> = (0..=30)
            .map(|_| base.iter().map(|t| t + 0.05 * { let n: f64 = StandardNormal.sample(&mut rng); n }).collect::<Vec<f64>>())
            .collect();
        let h = 0.05;
        let mut pop = Population::sample_from(&model, &thetas[0], 4, seed).unwrap();
        let mut paths: Vec<Vec<Vec<f64>>> = vec![Vec::new(); 4];
        let cfg = ProtocolConfig { steps: 30, step_size: h, resample: None, seed };
        let sched = |k: usize| thetas[k].clone();
        run_protocol(&model, &sched, &mut pop, &cfg, &mut |_, p| {
            for (i, path) in paths.iter_mut().enumerate() {
                path.push(p.position(i).to_vec());
            }
        }).unwrap();
        for (i, path) in paths.iter().enumerate() {
            let expect = path_log_weight(&model, &thetas, path, h).exp();
            let got = pop.log_weights()[i].exp();
            prop_assert!((got - expect).abs() <= 1e-8 * expect.abs(), "{} vs {}", got, expect);
        }
    }
}
