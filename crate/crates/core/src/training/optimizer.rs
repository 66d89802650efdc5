//! Parameter updates from a descent direction.

use std::fmt;
use std::str::FromStr;

use crate::energy::ParamBlock;
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    /// `θ ← θ + γ D`.
    #[default]
    Sgd,
    /// Adam on the cross-entropy gradient `-D`.
    Adam,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::invalid(format!(
                "unknown optimizer {other:?} (expected sgd or adam)"
            ))),
        }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Optimizer with one learning rate per parameter.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    rates: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() || rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        let n = rates.len();
        Ok(Self {
            kind,
            rates,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        })
    }

    /// Spreads per-block rates over the parameters. A single rate applies to
    /// every block.
    pub fn for_blocks(kind: OptimizerKind, blocks: &[ParamBlock], block_rates: &[f64]) -> Result<Self> {
        let per_block: Vec<f64> = match block_rates.len() {
            1 => vec![block_rates[0]; blocks.len()],
            n if n == blocks.len() => block_rates.to_vec(),
            n => {
                return Err(Error::invalid(format!(
                    "{n} learning rates given for {} parameter blocks",
                    blocks.len()
                )))
            }
        };
        let np = blocks.iter().map(|b| b.range.end).max().unwrap_or(0);
        let mut rates = vec![0.0; np];
        for (b, r) in blocks.iter().zip(per_block) {
            rates[b.range.clone()].fill(r);
        }
        Self::new(kind, rates)
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Moves `theta` along the descent direction.
    pub fn step(&mut self, theta: &mut [f64], descent: &[f64]) -> Result<()> {
        check_dim(self.rates.len(), theta.len())?;
        check_dim(self.rates.len(), descent.len())?;
        match self.kind {
            OptimizerKind::Sgd => {
                for ((t, d), r) in theta.iter_mut().zip(descent).zip(&self.rates) {
                    *t += r * d;
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
                let c2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
                for i in 0..theta.len() {
                    let g = -descent[i];
                    self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
                    self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = self.m[i] / c1;
                    let v_hat = self.v[i] / c2;
                    theta[i] -= self.rates[i] * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
        }
        Ok(())
    }
}
