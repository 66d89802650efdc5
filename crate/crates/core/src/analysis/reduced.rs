//! Learning the log-odds `z` of a one-dimensional two-mode mixture with
//! known means.
//!
//! Two views of the same problem. The reduced ODEs replace the walkers by the
//! fraction `q̂(0)` that starts near the second mode; they are exact up to
//! exponentially small mode-overlap terms when the modes are far apart. The
//! empirical system integrates the walkers, the weights and `z` together.

use std::fmt;
use std::str::FromStr;

use crate::dynamics::fill_normal;
use crate::energy::{EnergyModel, GmmZOnly};
use crate::error::{Error, Result};
use crate::math::{log_sum_exp, sigmoid};
use crate::rng::{stream_rng, Stream, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Walkers drawn from the initial model, no weights.
    Unweighted,
    /// Walkers start at the data, no weights.
    Pcd,
    /// Walkers drawn from the initial model, Jarzynski weights.
    Jarzynski,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Unweighted => "unweighted",
            Regime::Pcd => "pcd",
            Regime::Jarzynski => "jarzynski",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unweighted" => Ok(Regime::Unweighted),
            "pcd" => Ok(Regime::Pcd),
            "jarzynski" => Ok(Regime::Jarzynski),
            other => Err(Error::invalid(format!("unknown regime {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedState {
    pub z: f64,
    pub regime: Regime,
    /// Fraction of walkers that start near the second mode.
    pub q0: f64,
    /// Empirical target log-odds; the data fraction near the second mode is
    /// `e^{-ẑ}/(1+e^{-ẑ})`.
    pub z_star_hat: f64,
}

impl ReducedState {
    fn validate(&self) -> Result<()> {
        if !(self.q0 > 0.0 && self.q0 < 1.0) {
            return Err(Error::invalid("initial walker fraction must lie in (0, 1)"));
        }
        if !(self.z.is_finite() && self.z_star_hat.is_finite()) {
            return Err(Error::invalid("log-odds must be finite"));
        }
        Ok(())
    }
}

/// Right-hand side `ż` of the reduced system at `z`.
pub fn reduced_rhs(state: &ReducedState, z: f64) -> f64 {
    let q_star = sigmoid(-state.z_star_hat);
    match state.regime {
        Regime::Unweighted => state.q0 - q_star,
        Regime::Pcd => 0.0,
        Regime::Jarzynski => {
            let p0 = 1.0 - state.q0;
            let w = state.q0 * (-z).exp();
            w / (p0 + w) - q_star
        }
    }
}

/// Forward-Euler trajectory `z_0, z_1, …` from `state.z` up to time `t_end`.
pub fn reduced_ode_trajectory(state: &ReducedState, step: f64, t_end: f64) -> Result<Vec<f64>> {
    state.validate()?;
    if !(step.is_finite() && step > 0.0) || !(t_end.is_finite() && t_end >= 0.0) {
        return Err(Error::invalid("step must be positive and the horizon non-negative"));
    }
    let n = (t_end / step).round() as usize;
    let mut traj = Vec::with_capacity(n + 1);
    let mut z = state.z;
    traj.push(z);
    for _ in 0..n {
        z += step * reduced_rhs(state, z);
        traj.push(z);
    }
    Ok(traj)
}

/// Closed-form stable point of the Jarzynski system, `ẑ + log(q̂(0)/p̂(0))`.
pub fn jarzynski_fixed_point(q0: f64, z_star_hat: f64) -> f64 {
    z_star_hat + (q0 / (1.0 - q0)).ln()
}

/// Zero of the Jarzynski right-hand side by bisection. The other regimes
/// have no isolated fixed point.
pub fn solve_fixed_point(state: &ReducedState) -> Result<f64> {
    state.validate()?;
    if state.regime != Regime::Jarzynski {
        return Err(Error::invalid(format!(
            "the {} regime has no isolated fixed point",
            state.regime
        )));
    }
    let (mut lo, mut hi) = (-60.0, 60.0);
    if reduced_rhs(state, lo) <= 0.0 || reduced_rhs(state, hi) >= 0.0 {
        return Err(Error::invalid("fixed point outside [-60, 60]"));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if reduced_rhs(state, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalConfig {
    pub a: f64,
    pub b: f64,
    pub z0: f64,
    /// Teacher log-odds used to generate the data.
    pub z_star: f64,
    /// Walker count, equal to the data count.
    pub walkers: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Walker speed.
    pub alpha: f64,
    pub regime: Regime,
    /// Store the state every this many Euler steps.
    pub record_every: usize,
    pub seed: u64,
}

impl Default for EmpiricalConfig {
    fn default() -> Self {
        Self {
            a: 0.0,
            b: 10.0,
            z0: 0.0,
            z_star: 3f64.ln(),
            walkers: 200,
            dt: 0.01,
            t_end: 1e4,
            alpha: 1.0,
            regime: Regime::Jarzynski,
            record_every: 100,
            seed: 0,
        }
    }
}

/// A walker crossing the midpoint between the modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopEvent {
    pub time: f64,
    pub walker: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalOutput {
    pub times: Vec<f64>,
    pub z: Vec<f64>,
    /// Weighted fraction of walkers in `[b-4, b+4]`.
    pub weighted_fraction_b: Vec<f64>,
    pub hops: Vec<HopEvent>,
    /// Fraction of initial walkers in `[b-4, b+4]`.
    pub q_hat0: f64,
    /// Fraction of data in `[b-4, b+4]`.
    pub q_hat_star: f64,
    pub started_near_b: Vec<bool>,
    pub final_positions: Vec<f64>,
    pub final_log_weights: Vec<f64>,
}

impl EmpiricalOutput {
    /// Model mass of the second mode, `e^{-z}/(1+e^{-z})`, along the run.
    pub fn q_model(&self) -> Vec<f64> {
        self.z.iter().map(|&z| sigmoid(-z)).collect()
    }

    /// `log((1 - q̂*)/q̂*)`.
    pub fn z_star_hat(&self) -> f64 {
        ((1.0 - self.q_hat_star) / self.q_hat_star).ln()
    }
}

fn near(x: f64, centre: f64) -> bool {
    (x - centre).abs() <= 4.0
}

/// Euler integration of `ż = Σ e^{A}∂_zU(X)/Σ e^{A} - mean ∂_zU(x*)`,
/// `dX = -α∇U dt + √(2α) dW` and, in the Jarzynski regime,
/// `Ȧ = -∂_zU(X) ż`.
pub fn empirical_1d_dynamics(config: &EmpiricalConfig) -> Result<EmpiricalOutput> {
    let c = config;
    if ((c.a - c.b).abs() - 10.0).abs() > 1e-9 {
        return Err(Error::invalid("the modes must be 10 apart"));
    }
    if c.walkers == 0 || c.record_every == 0 {
        return Err(Error::invalid("walker count and record interval must be positive"));
    }
    if !(c.dt > 0.0 && c.alpha > 0.0 && c.t_end >= 0.0) || !(c.z0.is_finite() && c.z_star.is_finite()) {
        return Err(Error::invalid("dt and alpha must be positive, T non-negative"));
    }
    let model = GmmZOnly::one_d(c.a, c.b);
    let n = c.walkers;
    let sample = |z: f64, stream: &dyn Fn(usize) -> Stream| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let mut rng = stream_rng(c.seed, stream(i));
                let mut x = [0.0];
                model.sample(&[z], &mut rng, &mut x);
                x[0]
            })
            .collect()
    };
    let data = sample(c.z_star, &|i| Stream::Custom { tag: 1, a: i as u64, b: 0 });
    let mut x = match c.regime {
        Regime::Pcd => data.clone(),
        _ => sample(c.z0, &|i| Stream::Init { walker: i as u64 }),
    };
    let mut a = vec![0.0; n];
    let count_b = |pts: &[f64]| pts.iter().filter(|&&v| near(v, c.b)).count() as f64 / n as f64;
    let q_hat0 = count_b(&x);
    let q_hat_star = count_b(&data);
    let started_near_b: Vec<bool> = x.iter().map(|&v| near(v, c.b)).collect();
    let mid = 0.5 * (c.a + c.b);
    let mut side: Vec<bool> = x.iter().map(|&v| v > mid).collect();
    let mut rngs: Vec<StreamRng> = (0..n)
        .map(|i| stream_rng(c.seed, Stream::Langevin { iteration: 0, walker: i as u64, substep: 0 }))
        .collect();

    let steps = (c.t_end / c.dt).round() as usize;
    let mut z = c.z0;
    let mut out = EmpiricalOutput {
        times: Vec::with_capacity(steps / c.record_every + 1),
        z: Vec::new(),
        weighted_fraction_b: Vec::new(),
        hops: Vec::new(),
        q_hat0,
        q_hat_star,
        started_near_b,
        final_positions: Vec::new(),
        final_log_weights: Vec::new(),
    };
    let weighted_b = |x: &[f64], a: &[f64]| {
        let lse = log_sum_exp(a);
        x.iter()
            .zip(a)
            .filter(|(v, _)| near(**v, c.b))
            .map(|(_, ai)| (ai - lse).exp())
            .sum::<f64>()
    };
    let noise_scale = (2.0 * c.alpha * c.dt).sqrt();
    let mut dz = vec![0.0; n];
    let mut gx = vec![0.0; n];
    let mut xi = [0.0];
    for s in 0..=steps {
        if s % c.record_every == 0 {
            out.times.push(s as f64 * c.dt);
            out.z.push(z);
            out.weighted_fraction_b.push(weighted_b(&x, &a));
        }
        if s == steps {
            break;
        }
        let theta = [z];
        for i in 0..n {
            let mut g = [0.0];
            let mut gz = [0.0];
            model.evaluate(&theta, &x[i..i + 1], &mut g, Some(&mut gz));
            gx[i] = g[0];
            dz[i] = gz[0];
        }
        let walker_term = if c.regime == Regime::Jarzynski {
            let lse = log_sum_exp(&a);
            a.iter().zip(&dz).map(|(ai, d)| (ai - lse).exp() * d).sum::<f64>()
        } else {
            dz.iter().sum::<f64>() / n as f64
        };
        let data_term = data.iter().map(|&y| model.dz_energy(z, &[y])).sum::<f64>() / n as f64;
        let zdot = walker_term - data_term;
        if c.regime == Regime::Jarzynski {
            for i in 0..n {
                a[i] -= dz[i] * zdot * c.dt;
            }
        }
        z += zdot * c.dt;
        for i in 0..n {
            fill_normal(&mut rngs[i], &mut xi);
            x[i] += -c.alpha * gx[i] * c.dt + noise_scale * xi[0];
            if !x[i].is_finite() || !a[i].is_finite() {
                return Err(Error::NumericalBlowup { iteration: s, walker: i });
            }
            let now = x[i] > mid;
            if now != side[i] {
                side[i] = now;
                out.hops.push(HopEvent { time: (s + 1) as f64 * c.dt, walker: i });
            }
        }
        if !z.is_finite() {
            return Err(Error::NumericalBlowup { iteration: s, walker: 0 });
        }
    }
    out.final_positions = x;
    out.final_log_weights = a;
    Ok(out)
}

/// Qualitative end state of a `z` trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Some mode mass fell below 0.05.
    Collapsed,
    /// `z` never left `z(0) ± 0.05`.
    Frozen,
    /// Final second-mode mass within 0.05 of the target.
    Settled,
    Other,
}

pub fn classify_trajectory(z: &[f64], q_target: f64) -> Outcome {
    let Some((&z0, &z_end)) = z.first().zip(z.last()) else {
        return Outcome::Other;
    };
    if z.iter().any(|&v| {
        let q = sigmoid(-v);
        q.min(1.0 - q) < 0.05
    }) {
        Outcome::Collapsed
    } else if z.iter().all(|&v| (v - z0).abs() < 0.05) {
        Outcome::Frozen
    } else if (sigmoid(-z_end) - q_target).abs() < 0.05 {
        Outcome::Settled
    } else {
        Outcome::Other
    }
}
