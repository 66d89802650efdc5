//! The ULA transition and the Jarzynski weight bookkeeping.
//!
//! A walker moves by
//!
//! ```text
//! X_{k+1} = X_k - h ∇U_{θ_k}(X_k) + √(2h) ξ_k
//! ```
//!
//! and its log-weight changes by `α_k(X_k, X_{k+1}) - α_{k+1}(X_{k+1}, X_k)`.
//! With `X_0 ~ ρ_{θ_0}` and `A_0 = 0` this gives `E[e^{A_k}] = Z_{θ_k}/Z_{θ_0}`
//! exactly, for any parameter protocol and any step size. No Metropolis
//! correction is involved.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::energy::EnergyModel;
use crate::error::{check_dim, Error, Result};
use crate::math::{dot, squared_distance, squared_norm};
use crate::rng::StreamRng;

/// Step size plus the optional injected noise used by deterministic tests.
#[derive(Debug, Clone, Copy)]
pub struct StepParams<'a> {
    pub h: f64,
    /// Standard-normal vector to use instead of drawing from the rng.
    pub noise: Option<&'a [f64]>,
    /// Reported in the blowup error.
    pub iteration: usize,
    pub walker: usize,
}

impl<'a> StepParams<'a> {
    pub fn new(h: f64) -> Self {
        Self {
            h,
            noise: None,
            iteration: 0,
            walker: 0,
        }
    }

    pub fn with_noise(mut self, noise: &'a [f64]) -> Self {
        self.noise = Some(noise);
        self
    }

    pub fn at(mut self, iteration: usize, walker: usize) -> Self {
        self.iteration = iteration;
        self.walker = walker;
        self
    }
}

/// `α(x, y) = U(x) + ½ (y-x)·∇U(x) + ¼ h |∇U(x)|²` from precomputed `U(x)`
/// and `∇U(x)`.
#[inline]
pub fn alpha_from_parts(energy: f64, grad: &[f64], x: &[f64], y: &[f64], h: f64) -> f64 {
    let mut cross = 0.0;
    for i in 0..x.len() {
        cross += (y[i] - x[i]) * grad[i];
    }
    energy + 0.5 * cross + 0.25 * h * squared_norm(grad)
}

/// `α_θ(x, y)` evaluated with the model.
pub fn alpha<M: EnergyModel + ?Sized>(model: &M, theta: &[f64], x: &[f64], y: &[f64], h: f64) -> f64 {
    let mut g = vec![0.0; model.dim()];
    let u = model.evaluate(theta, x, &mut g, None);
    alpha_from_parts(u, &g, x, y, h)
}

/// Writes `x - h g + √(2h) ξ` into `out`.
#[inline]
pub fn ula_move(x: &[f64], grad: &[f64], h: f64, noise: &[f64], out: &mut [f64]) {
    let s = (2.0 * h).sqrt();
    for i in 0..x.len() {
        out[i] = x[i] - h * grad[i] + s * noise[i];
    }
}

/// Fills `out` with standard normals.
#[inline]
pub fn fill_normal(rng: &mut StreamRng, out: &mut [f64]) {
    for v in out {
        *v = rng.sample(StandardNormal);
    }
}

/// One ULA step from `x` under `θ`.
pub fn ula_step<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &[f64],
    x: &[f64],
    step: &StepParams<'_>,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    model.check(theta, x)?;
    if step.h <= 0.0 || !step.h.is_finite() {
        return Err(Error::invalid("step size must be positive"));
    }
    let d = model.dim();
    let noise = match step.noise {
        Some(n) => {
            check_dim(d, n.len())?;
            n.to_vec()
        }
        None => {
            let mut n = vec![0.0; d];
            fill_normal(rng, &mut n);
            n
        }
    };
    let mut g = vec![0.0; d];
    model.grad_x(theta, x, &mut g);
    let mut out = vec![0.0; d];
    ula_move(x, &g, step.h, &noise, &mut out);
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::NumericalBlowup {
            iteration: step.iteration,
            walker: step.walker,
        })
    }
}

/// Log-weight increment of a walker that moved from `x_prev` to `x_next`
/// under `θ_prev` while the parameters changed to `θ_next`:
/// `α_prev(x_prev, x_next) - α_next(x_next, x_prev)`.
///
/// Note the argument order of the second `α`: it is evaluated at the new
/// point, looking back.
pub fn weight_increment<M: EnergyModel + ?Sized>(
    model: &M,
    theta_prev: &[f64],
    theta_next: &[f64],
    x_prev: &[f64],
    x_next: &[f64],
    h: f64,
) -> f64 {
    alpha(model, theta_prev, x_prev, x_next, h) - alpha(model, theta_next, x_next, x_prev, h)
}

/// Log-weight increment of a walker that stays put while the parameters
/// change: `U_prev(x) - U_next(x)`.
pub fn frozen_weight_increment<M: EnergyModel + ?Sized>(
    model: &M,
    theta_prev: &[f64],
    theta_next: &[f64],
    x: &[f64],
) -> f64 {
    model.energy(theta_prev, x) - model.energy(theta_next, x)
}

/// Log-density of the ULA kernel:
/// `-(d/2) log(4πh) - |y - x + h∇U(x)|² / (4h)`.
pub fn log_transition_density<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &[f64],
    x: &[f64],
    y: &[f64],
    h: f64,
) -> Result<f64> {
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::invalid("transition density needs h > 0"));
    }
    model.check(theta, x)?;
    check_dim(model.dim(), y.len())?;
    let d = model.dim();
    let mut g = vec![0.0; d];
    model.grad_x(theta, x, &mut g);
    let mean: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - h * gi).collect();
    let r2 = squared_distance(y, &mean);
    Ok(-0.5 * d as f64 * (4.0 * std::f64::consts::PI * h).ln() - r2 / (4.0 * h))
}

/// Returned when `h` is at or above the stability limit `2/L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizeWarning {
    pub h: f64,
    pub hessian_bound: f64,
}

impl std::fmt::Display for StepSizeWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "step size h = {} is not below 2/L = {} (Hessian bound L = {})",
            self.h,
            2.0 / self.hessian_bound,
            self.hessian_bound
        )
    }
}

/// Advisory check of `h < 2/L`. The bound is model-dependent and often loose,
/// so this never fails a run.
pub fn check_step_size<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &[f64],
    h: f64,
) -> Option<StepSizeWarning> {
    let l = model.hessian_bound(theta)?;
    (h * l >= 2.0).then_some(StepSizeWarning {
        h,
        hessian_bound: l,
    })
}

/// `-(∂U/∂θ)·δ`, the first-order prediction of a frozen-walker increment
/// for a parameter change `δ`.
pub fn linearised_frozen_increment<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &[f64],
    delta: &[f64],
    x: &[f64],
) -> f64 {
    let mut g = vec![0.0; model.num_params()];
    model.grad_theta(theta, x, &mut g);
    -dot(&g, delta)
}
