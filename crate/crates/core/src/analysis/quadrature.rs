//! Trapezoidal quadrature over a dense grid, for models in one or two
//! dimensions.

use rayon::prelude::*;

use crate::energy::EnergyModel;
use crate::error::{check_dim, Error, Result};
use crate::math::log_sum_exp;

/// A rectangular grid with the same spacing along every axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub spacing: f64,
}

impl GridSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, spacing: f64) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() || lower.len() > 2 {
            return Err(Error::invalid(format!(
                "quadrature supports 1 or 2 dimensions, got {}",
                lower.len()
            )));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::invalid("grid spacing must be positive"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u)) {
            return Err(Error::invalid("grid bounds must be finite with lower < upper"));
        }
        Ok(Self { lower, upper, spacing })
    }

    /// Box spanning every centre ± `margin` on each axis. The spacing is
    /// 0.005 in one dimension and 0.02 in two.
    pub fn around(centres: &[&[f64]], margin: f64) -> Result<Self> {
        let dim = centres.first().map_or(0, |c| c.len());
        let mut lower = vec![f64::INFINITY; dim];
        let mut upper = vec![f64::NEG_INFINITY; dim];
        for c in centres {
            check_dim(dim, c.len())?;
            for j in 0..dim {
                lower[j] = lower[j].min(c[j] - margin);
                upper[j] = upper[j].max(c[j] + margin);
            }
        }
        let spacing = if dim == 1 { 0.005 } else { 0.02 };
        Self::new(lower, upper, spacing)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Nodes and trapezoid weights along axis `j`. The node count is rounded
    /// up so the actual spacing never exceeds the requested one.
    fn axis(&self, j: usize) -> (Vec<f64>, Vec<f64>) {
        let (lo, hi) = (self.lower[j], self.upper[j]);
        let cells = ((hi - lo) / self.spacing).ceil().max(1.0) as usize;
        let step = (hi - lo) / cells as f64;
        let nodes: Vec<f64> = (0..=cells).map(|i| lo + step * i as f64).collect();
        let mut w = vec![step; cells + 1];
        w[0] *= 0.5;
        w[cells] *= 0.5;
        (nodes, w)
    }
}

/// `(log Σ w e^{-U}, Σ w e^{-U} f / Σ w e^{-U})` over the grid nodes.
fn integrate<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &[f64],
    grid: &GridSpec,
    observable: Option<&(dyn Fn(&[f64]) -> f64 + Sync)>,
) -> Result<(f64, f64)> {
    model.check_theta(theta)?;
    check_dim(model.dim(), grid.dim())?;
    let (x0, w0) = grid.axis(0);
    let second = (grid.dim() == 2).then(|| grid.axis(1));
    // Each row returns its log-mass and its mass-weighted observable mean.
    let rows: Vec<(f64, f64)> = (0..x0.len())
        .into_par_iter()
        .map(|i| {
            let mut logs = Vec::new();
            let mut values = Vec::new();
            let mut point = vec![x0[i]; grid.dim()];
            let mut push = |p: &[f64], lw: f64| {
                logs.push(lw - model.energy(theta, p));
                values.push(observable.map_or(0.0, |f| f(p)));
            };
            match &second {
                None => push(&point.clone(), w0[i].ln()),
                Some((x1, w1)) => {
                    for (y, wy) in x1.iter().zip(w1) {
                        point[1] = *y;
                        push(&point, (w0[i] * wy).ln());
                    }
                }
            }
            let lse = log_sum_exp(&logs);
            let mean = if observable.is_some() && lse.is_finite() {
                logs.iter().zip(&values).map(|(l, v)| (l - lse).exp() * v).sum()
            } else {
                0.0
            };
            (lse, mean)
        })
        .collect();
    let row_logs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let total = log_sum_exp(&row_logs);
    if !total.is_finite() {
        return Err(Error::invalid("integrand vanishes or overflows on the grid"));
    }
    let mean = rows
        .iter()
        .filter(|r| r.0.is_finite())
        .map(|(l, m)| (l - total).exp() * m)
        .sum();
    Ok((total, mean))
}

/// `log ∫ e^{-U_θ}` by the trapezoidal rule.
pub fn quadrature_log_partition<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &[f64],
    grid: &GridSpec,
) -> Result<f64> {
    integrate(model, theta, grid, None).map(|r| r.0)
}

/// `E_θ[f]` by the trapezoidal rule.
pub fn quadrature_expectation<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &[f64],
    observable: &(dyn Fn(&[f64]) -> f64 + Sync),
    grid: &GridSpec,
) -> Result<f64> {
    integrate(model, theta, grid, Some(observable)).map(|r| r.1)
}
