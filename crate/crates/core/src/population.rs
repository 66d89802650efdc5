//! The weighted walker ensemble.
//!
//! A [`Population`] holds `N` walker positions, their log-weights `A_i` and
//! the accumulated log-partition offset that carries the `Z` estimate across
//! resampling events. All weight arithmetic is in the log domain.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::energy::{Dataset, EnergyModel};
use crate::error::{check_dim, Error, Result};
use crate::math::{log_mean_exp, log_sum_exp, softmax};
use crate::par::ordered_sum;
use crate::resampling::Resampler;
use crate::rng::{stream_rng, Stream, StreamRng};

/// Effective sample size normalised to `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct EssValue(f64);

impl EssValue {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// `N` walkers with log-weights and a running log-partition offset.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    dim: usize,
    positions: Vec<f64>,
    log_weights: Vec<f64>,
    log_z_offset: f64,
}

impl Population {
    /// Unweighted population at the given flat positions (`N × dim`).
    pub fn new(dim: usize, positions: Vec<f64>) -> Result<Self> {
        if dim == 0 || positions.is_empty() || positions.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "{} coordinates do not form a non-empty population in dimension {dim}",
                positions.len()
            )));
        }
        if positions.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("walker positions must be finite"));
        }
        let n = positions.len() / dim;
        Ok(Self {
            dim,
            positions,
            log_weights: vec![0.0; n],
            log_z_offset: 0.0,
        })
    }

    /// Population with explicit log-weights.
    pub fn with_log_weights(dim: usize, positions: Vec<f64>, log_weights: Vec<f64>) -> Result<Self> {
        let mut pop = Self::new(dim, positions)?;
        check_dim(pop.len(), log_weights.len())?;
        if log_weights.iter().any(|a| a.is_nan() || *a == f64::INFINITY) {
            return Err(Error::invalid("log-weights must be finite or -inf"));
        }
        pop.log_weights = log_weights;
        Ok(pop)
    }

    /// `n` exact samples of `ρ_θ`. Walker `i` draws from its own stream, so
    /// the result does not depend on the thread count.
    pub fn sample_from<M: EnergyModel + ?Sized>(
        model: &M,
        theta: &[f64],
        n: usize,
        seed: u64,
    ) -> Result<Self> {
        model.check_theta(theta)?;
        if n == 0 {
            return Err(Error::invalid("population needs at least one walker"));
        }
        let dim = model.dim();
        let mut positions = vec![0.0; n * dim];
        let ok = positions
            .par_chunks_mut(dim)
            .enumerate()
            .map(|(i, out)| {
                let mut rng = stream_rng(seed, Stream::Init { walker: i as u64 });
                model.sample(theta, &mut rng, out)
            })
            .reduce(|| true, |a, b| a && b);
        if !ok {
            return Err(Error::invalid(format!(
                "model {} has no exact sampler for initialisation",
                model.name()
            )));
        }
        Self::new(dim, positions)
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn log_z_offset(&self) -> f64 {
        self.log_z_offset
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.positions, &mut self.log_weights)
    }

    /// Softmax of the log-weights.
    pub fn normalized_weights(&self) -> Vec<f64> {
        softmax(&self.log_weights)
    }

    /// `(N⁻¹Σe^{A})² / (N⁻¹Σe^{2A})`.
    pub fn ess(&self) -> EssValue {
        let a = &self.log_weights;
        let first = a[0];
        if a.iter().all(|&v| v == first) {
            return EssValue(1.0);
        }
        let n = a.len() as f64;
        let doubled: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        let log_ess = 2.0 * log_sum_exp(a) - n.ln() - log_sum_exp(&doubled);
        EssValue(log_ess.exp().clamp(1.0 / n, 1.0))
    }

    /// Weighted walker average of `∂_θU` minus its data average. Moving
    /// `θ` along the result descends the cross-entropy.
    pub fn grad_estimator<M: EnergyModel + ?Sized>(
        &self,
        model: &M,
        theta: &[f64],
        data: &Dataset,
    ) -> Result<Vec<f64>> {
        model.check_theta(theta)?;
        check_dim(model.dim(), self.dim)?;
        check_dim(model.dim(), data.dim())?;
        let p = self.normalized_weights();
        let np = model.num_params();
        let walker = ordered_sum(self.len(), np, |i, acc| {
            let mut g = vec![0.0; np];
            model.grad_theta(theta, self.position(i), &mut g);
            for (a, v) in acc.iter_mut().zip(&g) {
                *a += p[i] * v;
            }
        });
        let (_, data_mean) = data_means(model, theta, data, None, true);
        Ok(walker.iter().zip(&data_mean).map(|(w, d)| w - d).collect())
    }

    /// `log Z_{θ₀} + offset + log N⁻¹Σe^{A}`.
    pub fn log_partition_estimate(&self, log_z0: f64) -> f64 {
        log_z0 + self.log_z_offset + log_mean_exp(&self.log_weights)
    }

    /// Partition-function estimate plus the mean data energy.
    pub fn cross_entropy_estimate<M: EnergyModel + ?Sized>(
        &self,
        model: &M,
        theta: &[f64],
        data: &Dataset,
        log_z0: f64,
    ) -> Result<f64> {
        model.check_theta(theta)?;
        check_dim(model.dim(), data.dim())?;
        let (mean_u, _) = data_means(model, theta, data, None, false);
        Ok(self.log_partition_estimate(log_z0) + mean_u)
    }

    /// Resamples when `ESS < threshold`. Returns whether it did.
    pub fn maybe_resample(
        &mut self,
        threshold: f64,
        scheme: Resampler,
        rng: &mut StreamRng,
    ) -> Result<bool> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::invalid(format!(
                "ESS threshold {threshold} outside [0, 1]"
            )));
        }
        if self.ess().value() < threshold {
            self.resample(scheme, rng)?;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Unconditional resample. Folds the mean weight into the offset,
    /// copies the selected walkers, zeroes the weights and returns the
    /// ancestor of each new walker.
    pub fn resample(&mut self, scheme: Resampler, rng: &mut StreamRng) -> Result<Vec<usize>> {
        let p = self.normalized_weights();
        let ancestors = scheme.select(&p, rng)?;
        self.log_z_offset += log_mean_exp(&self.log_weights);
        self.positions = permute_rows(&self.positions, self.dim, &ancestors);
        self.log_weights.fill(0.0);
        Ok(ancestors)
    }

    /// Writes one row per walker: `x_1,…,x_d,A` with a header line.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = (1..=self.dim)
            .map(|j| format!("x_{j}"))
            .chain(std::iter::once("A".to_string()))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.len() {
            let row: Vec<String> = self
                .position(i)
                .iter()
                .chain(std::iter::once(&self.log_weights[i]))
                .map(|v| format!("{v:e}"))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()
    }

    /// Reads a dump produced by [`Population::write_dump`]. The offset is
    /// not part of the dump and comes back as zero.
    pub fn read_dump<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = match lines.next() {
            Some(Ok(h)) => h,
            _ => return Err(Error::invalid("walker dump is empty")),
        };
        let cols = header.split(',').count();
        if cols < 2 || header.split(',').last() != Some("A") {
            return Err(Error::invalid("walker dump header must end in A"));
        }
        let dim = cols - 1;
        let mut positions = Vec::new();
        let mut log_weights = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::invalid(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let values: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::invalid(format!("walker dump row {}: {e}", row + 1)))?;
            check_dim(cols, values.len())?;
            positions.extend_from_slice(&values[..dim]);
            log_weights.push(values[dim]);
        }
        Self::with_log_weights(dim, positions, log_weights)
    }
}

/// Rows of `flat` (row width `width`) in the order given by `index`.
pub(crate) fn permute_rows(flat: &[f64], width: usize, index: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(index.len() * width);
    for &j in index {
        out.extend_from_slice(&flat[j * width..(j + 1) * width]);
    }
    out
}

/// Mean energy and, if asked, mean `∂_θU` over the data points in `subset`
/// (all of them when `None`).
pub(crate) fn data_means<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &[f64],
    data: &Dataset,
    subset: Option<&[usize]>,
    with_grad: bool,
) -> (f64, Vec<f64>) {
    let np = model.num_params();
    let count = subset.map_or(data.len(), <[usize]>::len);
    let width = if with_grad { np + 1 } else { 1 };
    let sums = ordered_sum(count, width, |j, acc| {
        let x = data.point(subset.map_or(j, |s| s[j]));
        if with_grad {
            let mut gx = vec![0.0; model.dim()];
            let mut gt = vec![0.0; np];
            acc[0] += model.evaluate(theta, x, &mut gx, Some(&mut gt));
            for (a, v) in acc[1..].iter_mut().zip(&gt) {
                *a += v;
            }
        } else {
            acc[0] += model.energy(theta, x);
        }
    });
    let inv = 1.0 / count as f64;
    let grad = if with_grad {
        sums[1..].iter().map(|s| s * inv).collect()
    } else {
        Vec::new()
    };
    (sums[0] * inv, grad)
}
