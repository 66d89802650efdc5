//! The per-walker update shared by every trainer.

use rayon::prelude::*;

use crate::dynamics::{alpha_from_parts, fill_normal, ula_move};
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::par::ordered_sum;
use crate::population::permute_rows;
use crate::rng::{stream_rng, Stream};

/// `U`, `∇_xU` and `∂_θU` of every walker at the current parameters.
#[derive(Debug, Clone)]
pub(crate) struct WalkerCache {
    pub energy: Vec<f64>,
    pub grad_x: Vec<f64>,
    pub grad_theta: Vec<f64>,
    dim: usize,
    np: usize,
}

impl WalkerCache {
    pub fn compute<M: EnergyModel + ?Sized>(model: &M, theta: &[f64], positions: &[f64]) -> Self {
        let (dim, np) = (model.dim(), model.num_params());
        let n = positions.len() / dim;
        let mut cache = Self {
            energy: vec![0.0; n],
            grad_x: vec![0.0; n * dim],
            grad_theta: vec![0.0; n * np],
            dim,
            np,
        };
        positions
            .par_chunks(dim)
            .zip(cache.energy.par_iter_mut())
            .zip(cache.grad_x.par_chunks_mut(dim))
            .zip(cache.grad_theta.par_chunks_mut(np))
            .for_each(|(((x, u), gx), gt)| {
                *u = model.evaluate(theta, x, gx, Some(gt));
            });
        cache
    }

    pub fn permute(&mut self, ancestors: &[usize]) {
        self.energy = ancestors.iter().map(|&j| self.energy[j]).collect();
        self.grad_x = permute_rows(&self.grad_x, self.dim, ancestors);
        self.grad_theta = permute_rows(&self.grad_theta, self.np, ancestors);
    }

    /// `Σ_i p_i ∂_θU(X_i)`, or the plain mean when `p` is `None`.
    pub fn weighted_grad_theta(&self, p: Option<&[f64]>) -> Vec<f64> {
        let n = self.energy.len();
        let inv = 1.0 / n as f64;
        ordered_sum(n, self.np, |i, acc| {
            let w = p.map_or(inv, |p| p[i]);
            let g = &self.grad_theta[i * self.np..(i + 1) * self.np];
            for (a, v) in acc.iter_mut().zip(g) {
                *a += w * v;
            }
        })
    }
}

/// What one call to [`advance`] does to the walkers.
pub(crate) struct Advance<'a> {
    pub h: f64,
    pub seed: u64,
    pub iteration: usize,
    pub substep: usize,
    /// Accumulate Jarzynski increments into the log-weights.
    pub weighted: bool,
    /// Walkers that take a ULA step; the rest stay put. `None` moves all.
    pub moving: Option<&'a [bool]>,
}

/// Moves walkers one ULA step using the cached gradients at the old
/// parameters, re-evaluates everything at `theta_next` and, if weighted,
/// adds `α_old(x, y) - α_new(y, x)` for movers and `U_old(x) - U_new(x)` for
/// frozen walkers. The cache ends up holding values at `theta_next`.
pub(crate) fn advance<M: EnergyModel + ?Sized>(
    model: &M,
    theta_next: &[f64],
    positions: &mut [f64],
    log_weights: &mut [f64],
    cache: &mut WalkerCache,
    step: &Advance<'_>,
) -> Result<()> {
    let dim = model.dim();
    let np = model.num_params();
    let h = step.h;
    positions
        .par_chunks_mut(dim)
        .zip(log_weights.par_iter_mut())
        .zip(cache.energy.par_iter_mut())
        .zip(cache.grad_x.par_chunks_mut(dim))
        .zip(cache.grad_theta.par_chunks_mut(np))
        .enumerate()
        .for_each(|(i, ((((x, a), u), gx), gt))| {
            let moves = step.moving.is_none_or(|m| m[i]);
            if moves {
                let mut rng = stream_rng(
                    step.seed,
                    Stream::Langevin {
                        iteration: step.iteration as u64,
                        walker: i as u64,
                        substep: step.substep as u64,
                    },
                );
                let mut noise = vec![0.0; dim];
                fill_normal(&mut rng, &mut noise);
                let mut y = vec![0.0; dim];
                ula_move(x, gx, h, &noise, &mut y);
                let forward = alpha_from_parts(*u, gx, x, &y, h);
                let mut gy = vec![0.0; dim];
                let uy = model.evaluate(theta_next, &y, &mut gy, Some(gt));
                if step.weighted {
                    *a += forward - alpha_from_parts(uy, &gy, &y, x, h);
                }
                x.copy_from_slice(&y);
                gx.copy_from_slice(&gy);
                *u = uy;
            } else {
                let ux = model.evaluate(theta_next, x, gx, Some(gt));
                if step.weighted {
                    *a += *u - ux;
                }
                *u = ux;
            }
        });
    let bad = (0..log_weights.len()).find(|&i| {
        !log_weights[i].is_finite()
            || !cache.energy[i].is_finite()
            || positions[i * dim..(i + 1) * dim].iter().any(|v| !v.is_finite())
    });
    match bad {
        Some(walker) => Err(Error::NumericalBlowup {
            iteration: step.iteration,
            walker,
        }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{frozen_weight_increment, ula_step, weight_increment, StepParams};
    use crate::energy::{GmmModel, GmmParams};

    fn setup() -> (GmmModel, Vec<f64>, Vec<f64>, Vec<f64>) {
        let model = GmmModel::new(2);
        let t0 = GmmParams::aligned(2, -2.0, 3.0, 0.4).to_flat();
        let mut t1 = t0.clone();
        t1[0] += 0.05;
        t1[3] -= 0.02;
        t1[4] += 0.1;
        let x = vec![-2.5, 0.3, 1.0, -1.0, 2.9, 0.2, 0.0, 0.0];
        (model, t0, t1, x)
    }

    #[test]
    fn movers_match_the_standalone_step_and_increment() {
        let (model, t0, t1, x0) = setup();
        let mut x = x0.clone();
        let mut a = vec![0.1, -0.2, 0.0, 0.3];
        let mut cache = WalkerCache::compute(&model, &t0, &x);
        let step = Advance { h: 0.1, seed: 4, iteration: 7, substep: 0, weighted: true, moving: None };
        advance(&model, &t1, &mut x, &mut a, &mut cache, &step).unwrap();
        for i in 0..4 {
            let xi = &x0[2 * i..2 * i + 2];
            let mut rng = stream_rng(4, Stream::Langevin { iteration: 7, walker: i as u64, substep: 0 });
            let y = ula_step(&model, &t0, xi, &StepParams::new(0.1), &mut rng).unwrap();
            assert_eq!(&x[2 * i..2 * i + 2], &y[..]);
            let inc = weight_increment(&model, &t0, &t1, xi, &y, 0.1);
            let before = [0.1, -0.2, 0.0, 0.3][i];
            assert!((a[i] - before - inc).abs() < 1e-12);
            assert!((cache.energy[i] - model.energy(&t1, &y)).abs() < 1e-14);
        }
    }

    #[test]
    fn frozen_walkers_take_the_energy_difference() {
        let (model, t0, t1, x0) = setup();
        let mut x = x0.clone();
        let mut a = vec![0.0; 4];
        let mut cache = WalkerCache::compute(&model, &t0, &x);
        let mask = [true, false, false, true];
        let step = Advance { h: 0.1, seed: 4, iteration: 0, substep: 0, weighted: true, moving: Some(&mask) };
        advance(&model, &t1, &mut x, &mut a, &mut cache, &step).unwrap();
        for i in [1, 2] {
            let xi = &x0[2 * i..2 * i + 2];
            assert_eq!(&x[2 * i..2 * i + 2], xi);
            assert!((a[i] - frozen_weight_increment(&model, &t0, &t1, xi)).abs() < 1e-14);
        }
        assert_ne!(&x[..2], &x0[..2]);
    }

    #[test]
    fn unweighted_advance_keeps_weights() {
        let (model, t0, t1, mut x) = setup();
        let mut a = vec![0.0; 4];
        let mut cache = WalkerCache::compute(&model, &t0, &x);
        let step = Advance { h: 0.1, seed: 1, iteration: 0, substep: 0, weighted: false, moving: None };
        advance(&model, &t1, &mut x, &mut a, &mut cache, &step).unwrap();
        assert_eq!(a, vec![0.0; 4]);
    }

    #[test]
    fn blowup_names_the_first_bad_walker() {
        let (model, t0, _, mut x) = setup();
        let mut a = vec![0.0; 4];
        let mut cache = WalkerCache::compute(&model, &t0, &x);
        let step = Advance { h: 1e300, seed: 1, iteration: 3, substep: 0, weighted: true, moving: None };
        let err = advance(&model, &t0, &mut x, &mut a, &mut cache, &step).unwrap_err();
        assert!(matches!(err, Error::NumericalBlowup { iteration: 3, walker: 0 }), "{err:?}");
    }

    #[test]
    fn permutation_follows_ancestors() {
        let (model, t0, _, x) = setup();
        let mut cache = WalkerCache::compute(&model, &t0, &x);
        let e = cache.energy.clone();
        cache.permute(&[3, 3, 0, 1]);
        assert_eq!(cache.energy, vec![e[3], e[3], e[0], e[1]]);
        let fresh = WalkerCache::compute(&model, &t0, &permute_rows(&x, 2, &[3, 3, 0, 1]));
        assert_eq!(cache.grad_theta, fresh.grad_theta);
    }
}
