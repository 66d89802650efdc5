//! Energy models `U_θ(x)` with `ρ_θ ∝ e^{-U_θ}`.
//!
//! Three analytic models are provided:
//!
//! * [`GmmModel`]: the two-mode mixture
//!   `U(x) = -log(e^{-|x-a|²/2} + e^{-|x-b|²/2 - z})`, parameters `(a, b, z)`.
//! * [`GaussianModel`]: `U(x) = |x-μ|²/2`, parameters `μ`. Its partition
//!   function does not depend on `μ`, which makes it a clean test protocol.
//! * [`GmmZOnly`]: the mixture with both means frozen and `z` as the only
//!   parameter.
//!
//! All three are confining (quadratic growth at infinity) with Hessians
//! bounded by [`EnergyModel::hessian_bound`], so `Z_θ` is finite.
//!
//! The [`EnergyModel`] methods do not check slice lengths; callers validate
//! once with [`EnergyModel::check`]. The `gmm_*` free functions are the
//! checked entry points for the mixture.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::math::{log_add_exp, sigmoid, softplus, squared_distance};
use crate::rng::StreamRng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A named, contiguous slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamBlock {
    pub name: &'static str,
    pub range: Range<usize>,
}

pub trait EnergyModel: Send + Sync {
    fn name(&self) -> &'static str;

    /// Dimension `d` of the configuration space.
    fn dim(&self) -> usize;

    /// Length of the flat parameter vector.
    fn num_params(&self) -> usize;

    /// Parameter blocks in flat order. Learning rates are set per block.
    fn blocks(&self) -> Vec<ParamBlock>;

    fn energy(&self, theta: &[f64], x: &[f64]) -> f64;

    /// Writes `∇_x U_θ(x)` into `out` (length `d`).
    fn grad_x(&self, theta: &[f64], x: &[f64], out: &mut [f64]);

    /// Writes `∂_θ U_θ(x)` into `out` (length `num_params`).
    fn grad_theta(&self, theta: &[f64], x: &[f64], out: &mut [f64]);

    /// Energy plus both gradients in one pass. Models override this when
    /// the three share work.
    fn evaluate(
        &self,
        theta: &[f64],
        x: &[f64],
        grad_x: &mut [f64],
        grad_theta: Option<&mut [f64]>,
    ) -> f64 {
        self.grad_x(theta, x, grad_x);
        if let Some(g) = grad_theta {
            self.grad_theta(theta, x, g);
        }
        self.energy(theta, x)
    }

    /// `log Z_θ` when it is known in closed form.
    fn log_partition(&self, _theta: &[f64]) -> Option<f64> {
        None
    }

    /// Draws an exact sample of `ρ_θ` into `out`. Returns `false` if the
    /// model has no exact sampler.
    fn sample(&self, _theta: &[f64], _rng: &mut StreamRng, _out: &mut [f64]) -> bool {
        false
    }

    /// An upper bound on the operator norm of `∇∇U_θ` over all `x`.
    fn hessian_bound(&self, _theta: &[f64]) -> Option<f64> {
        None
    }

    /// Mass of the first mode for two-mode models.
    fn mode_mass(&self, _theta: &[f64]) -> Option<f64> {
        None
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        check_dim(self.num_params(), theta.len())?;
        if theta.iter().all(|t| t.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid("parameters must be finite"))
        }
    }

    fn check(&self, theta: &[f64], x: &[f64]) -> Result<()> {
        self.check_theta(theta)?;
        check_dim(self.dim(), x.len())
    }
}

/// Model names accepted by the experiment configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Gmm,
    Gaussian,
    GmmZOnly,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gmm => "gmm",
            ModelKind::Gaussian => "gaussian",
            ModelKind::GmmZOnly => "gmm1d-z",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gmm" => Ok(ModelKind::Gmm),
            "gaussian" => Ok(ModelKind::Gaussian),
            "gmm1d-z" => Ok(ModelKind::GmmZOnly),
            other => Err(Error::invalid(format!(
                "unknown model `{other}` (expected gmm, gaussian or gmm1d-z)"
            ))),
        }
    }
}

/// `n` points in `ℝ^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    points: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dataset dimension must be positive"));
        }
        if points.is_empty() || points.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "dataset needs a positive multiple of {dim} coordinates, got {}",
                points.len()
            )));
        }
        if !points.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite coordinates"));
        }
        Ok(Self { dim, points })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        Self::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.points.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.points
    }
}

/// Parameters `(a, b, z)` of the two-mode mixture.
///
/// Flattened as `[a_1..a_d, b_1..b_d, z]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub z: f64,
}

impl GmmParams {
    pub fn new(a: Vec<f64>, b: Vec<f64>, z: f64) -> Result<Self> {
        check_dim(a.len(), b.len())?;
        let p = Self { a, b, z };
        if p.a.is_empty() {
            return Err(Error::invalid("mixture means must be non-empty"));
        }
        if !p.to_flat().iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("mixture parameters must be finite"));
        }
        Ok(p)
    }

    /// Means that are zero except in the first coordinate.
    pub fn aligned(dim: usize, a1: f64, b1: f64, z: f64) -> Self {
        let mut a = vec![0.0; dim];
        let mut b = vec![0.0; dim];
        a[0] = a1;
        b[0] = b1;
        Self { a, b, z }
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// Mass `p = 1/(1+e^{-z})` of the mode at `a`.
    pub fn mode_mass(&self) -> f64 {
        sigmoid(self.z)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.a.len() + 1);
        v.extend_from_slice(&self.a);
        v.extend_from_slice(&self.b);
        v.push(self.z);
        v
    }

    pub fn from_flat(dim: usize, theta: &[f64]) -> Result<Self> {
        check_dim(2 * dim + 1, theta.len())?;
        Ok(Self {
            a: theta[..dim].to_vec(),
            b: theta[dim..2 * dim].to_vec(),
            z: theta[2 * dim],
        })
    }
}

// Log-weights of the two mixture components at x, and their softmax.
#[inline]
fn gmm_components(a: &[f64], b: &[f64], z: f64, x: &[f64]) -> (f64, f64, f64) {
    let la = -0.5 * squared_distance(x, a);
    let lb = -0.5 * squared_distance(x, b) - z;
    let lse = log_add_exp(la, lb);
    let r_b = (lb - lse).exp();
    (-lse, 1.0 - r_b, r_b)
}

/// `U(x) = -log(e^{-|x-a|²/2} + e^{-z-|x-b|²/2})`.
pub fn gmm_energy(theta: &GmmParams, x: &[f64]) -> Result<f64> {
    check_dim(theta.dim(), x.len())?;
    Ok(gmm_components(&theta.a, &theta.b, theta.z, x).0)
}

/// `(r_a, r_b)`, the posterior probabilities of the two components at `x`.
pub fn gmm_responsibilities(theta: &GmmParams, x: &[f64]) -> Result<(f64, f64)> {
    check_dim(theta.dim(), x.len())?;
    let (_, ra, rb) = gmm_components(&theta.a, &theta.b, theta.z, x);
    Ok((ra, rb))
}

/// `∂_θ U` as a parameter-shaped value: `(-r_a(x-a), -r_b(x-b), r_b)`.
pub fn gmm_grad_theta(theta: &GmmParams, x: &[f64]) -> Result<GmmParams> {
    check_dim(theta.dim(), x.len())?;
    let (_, ra, rb) = gmm_components(&theta.a, &theta.b, theta.z, x);
    Ok(GmmParams {
        a: x.iter().zip(&theta.a).map(|(xi, ai)| -ra * (xi - ai)).collect(),
        b: x.iter().zip(&theta.b).map(|(xi, bi)| -rb * (xi - bi)).collect(),
        z: rb,
    })
}

/// `log Z_θ = (d/2) log 2π + log(1 + e^{-z})`; independent of the means.
pub fn gmm_log_partition(theta: &GmmParams) -> f64 {
    mixture_log_partition(theta.dim(), theta.z)
}

fn mixture_log_partition(dim: usize, z: f64) -> f64 {
    0.5 * dim as f64 * LN_2PI + softplus(-z)
}

fn sample_mixture(a: &[f64], b: &[f64], z: f64, rng: &mut StreamRng, out: &mut [f64]) {
    let pick_a = rng.random::<f64>() < sigmoid(z);
    let mean = if pick_a { a } else { b };
    for (o, m) in out.iter_mut().zip(mean) {
        *o = m + rng.sample::<f64, _>(StandardNormal);
    }
}

/// Draws `n` points from the mixture `ρ_θ`: mode `a` with probability
/// `1/(1+e^{-z})`, then a unit Gaussian around the chosen mean.
pub fn gmm_sample_target(theta: &GmmParams, n: usize, rng: &mut StreamRng) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    let d = theta.dim();
    let mut points = vec![0.0; n * d];
    for row in points.chunks_exact_mut(d) {
        sample_mixture(&theta.a, &theta.b, theta.z, rng, row);
    }
    Dataset::new(d, points)
}

/// The two-mode mixture with parameters `(a, b, z)` all trainable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GmmModel {
    dim: usize,
}

impl GmmModel {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self { dim }
    }
}

impl EnergyModel for GmmModel {
    fn name(&self) -> &'static str {
        "gmm"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn num_params(&self) -> usize {
        2 * self.dim + 1
    }

    fn blocks(&self) -> Vec<ParamBlock> {
        let d = self.dim;
        vec![
            ParamBlock { name: "a", range: 0..d },
            ParamBlock { name: "b", range: d..2 * d },
            ParamBlock { name: "z", range: 2 * d..2 * d + 1 },
        ]
    }

    fn energy(&self, theta: &[f64], x: &[f64]) -> f64 {
        let d = self.dim;
        gmm_components(&theta[..d], &theta[d..2 * d], theta[2 * d], x).0
    }

    fn grad_x(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        self.evaluate(theta, x, out, None);
    }

    fn grad_theta(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let mut gx = vec![0.0; self.dim];
        self.evaluate(theta, x, &mut gx, Some(out));
    }

    fn evaluate(
        &self,
        theta: &[f64],
        x: &[f64],
        grad_x: &mut [f64],
        grad_theta: Option<&mut [f64]>,
    ) -> f64 {
        let d = self.dim;
        let (a, b, z) = (&theta[..d], &theta[d..2 * d], theta[2 * d]);
        let (u, ra, rb) = gmm_components(a, b, z, x);
        for i in 0..d {
            grad_x[i] = ra * (x[i] - a[i]) + rb * (x[i] - b[i]);
        }
        if let Some(g) = grad_theta {
            for i in 0..d {
                g[i] = -ra * (x[i] - a[i]);
                g[d + i] = -rb * (x[i] - b[i]);
            }
            g[2 * d] = rb;
        }
        u
    }

    fn log_partition(&self, theta: &[f64]) -> Option<f64> {
        Some(mixture_log_partition(self.dim, theta[2 * self.dim]))
    }

    fn sample(&self, theta: &[f64], rng: &mut StreamRng, out: &mut [f64]) -> bool {
        let d = self.dim;
        sample_mixture(&theta[..d], &theta[d..2 * d], theta[2 * d], rng, out);
        true
    }

    // ∇∇U = I - r_a r_b (a-b)(a-b)ᵀ and r_a r_b ≤ 1/4.
    fn hessian_bound(&self, theta: &[f64]) -> Option<f64> {
        let d = self.dim;
        Some(1.0 + squared_distance(&theta[..d], &theta[d..2 * d]) / 4.0)
    }

    fn mode_mass(&self, theta: &[f64]) -> Option<f64> {
        Some(sigmoid(theta[2 * self.dim]))
    }
}

/// `U(x) = |x-μ|²/2`, parameters `μ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GaussianModel {
    dim: usize,
}

impl GaussianModel {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self { dim }
    }
}

impl EnergyModel for GaussianModel {
    fn name(&self) -> &'static str {
        "gaussian"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn num_params(&self) -> usize {
        self.dim
    }

    fn blocks(&self) -> Vec<ParamBlock> {
        vec![ParamBlock {
            name: "mu",
            range: 0..self.dim,
        }]
    }

    fn energy(&self, theta: &[f64], x: &[f64]) -> f64 {
        0.5 * squared_distance(x, theta)
    }

    fn grad_x(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        for ((o, xi), mi) in out.iter_mut().zip(x).zip(theta) {
            *o = xi - mi;
        }
    }

    fn grad_theta(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        for ((o, xi), mi) in out.iter_mut().zip(x).zip(theta) {
            *o = mi - xi;
        }
    }

    fn log_partition(&self, _theta: &[f64]) -> Option<f64> {
        Some(0.5 * self.dim as f64 * LN_2PI)
    }

    fn sample(&self, theta: &[f64], rng: &mut StreamRng, out: &mut [f64]) -> bool {
        for (o, m) in out.iter_mut().zip(theta) {
            *o = m + rng.sample::<f64, _>(StandardNormal);
        }
        true
    }

    fn hessian_bound(&self, _theta: &[f64]) -> Option<f64> {
        Some(1.0)
    }
}

/// The mixture with frozen means; `θ = [z]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmZOnly {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl GmmZOnly {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        check_dim(a.len(), b.len())?;
        if a.is_empty() {
            return Err(Error::invalid("mixture means must be non-empty"));
        }
        Ok(Self { a, b })
    }

    /// One-dimensional model with means `a` and `b`.
    pub fn one_d(a: f64, b: f64) -> Self {
        Self {
            a: vec![a],
            b: vec![b],
        }
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// `∂_z U_z(x) = r_b(x)`.
    pub fn dz_energy(&self, z: f64, x: &[f64]) -> f64 {
        gmm_components(&self.a, &self.b, z, x).2
    }
}

impl EnergyModel for GmmZOnly {
    fn name(&self) -> &'static str {
        "gmm1d-z"
    }

    fn dim(&self) -> usize {
        self.a.len()
    }

    fn num_params(&self) -> usize {
        1
    }

    fn blocks(&self) -> Vec<ParamBlock> {
        vec![ParamBlock {
            name: "z",
            range: 0..1,
        }]
    }

    fn energy(&self, theta: &[f64], x: &[f64]) -> f64 {
        gmm_components(&self.a, &self.b, theta[0], x).0
    }

    fn grad_x(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        self.evaluate(theta, x, out, None);
    }

    fn grad_theta(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        out[0] = self.dz_energy(theta[0], x);
    }

    fn evaluate(
        &self,
        theta: &[f64],
        x: &[f64],
        grad_x: &mut [f64],
        grad_theta: Option<&mut [f64]>,
    ) -> f64 {
        let (u, ra, rb) = gmm_components(&self.a, &self.b, theta[0], x);
        for i in 0..x.len() {
            grad_x[i] = ra * (x[i] - self.a[i]) + rb * (x[i] - self.b[i]);
        }
        if let Some(g) = grad_theta {
            g[0] = rb;
        }
        u
    }

    fn log_partition(&self, theta: &[f64]) -> Option<f64> {
        Some(mixture_log_partition(self.a.len(), theta[0]))
    }

    fn sample(&self, theta: &[f64], rng: &mut StreamRng, out: &mut [f64]) -> bool {
        sample_mixture(&self.a, &self.b, theta[0], rng, out);
        true
    }

    fn hessian_bound(&self, _theta: &[f64]) -> Option<f64> {
        Some(1.0 + squared_distance(&self.a, &self.b) / 4.0)
    }

    fn mode_mass(&self, theta: &[f64]) -> Option<f64> {
        Some(sigmoid(theta[0]))
    }
}
