//! Index selection for resampling a weighted population.
//!
//! Every scheme draws `N` points `u_n ∈ (0, 1]` and maps each through the
//! cumulative sum `P` of the weights: extraction `n` picks ancestor `m` when
//! `P_{m-1} < u_n ≤ P_m`. The schemes differ only in how the `u_n` are drawn.
//!
//! * multinomial: `N` independent uniforms on `(0, 1]`;
//! * stratified: one uniform per stratum `((n-1)/N, n/N]`;
//! * systematic: a single uniform `u_1` on `(0, 1/N]`, then `u_n = u_1 + (n-1)/N`.
//!
//! All three are unbiased: ancestor `i` is picked `N p_i` times on average.
//! Indices are zero-based.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Resampler {
    Multinomial,
    Stratified,
    #[default]
    Systematic,
}

impl Resampler {
    pub fn as_str(self) -> &'static str {
        match self {
            Resampler::Multinomial => "multinomial",
            Resampler::Stratified => "stratified",
            Resampler::Systematic => "systematic",
        }
    }

    /// Ancestor indices for weights `p`.
    pub fn select(self, p: &[f64], rng: &mut StreamRng) -> Result<Vec<usize>> {
        match self {
            Resampler::Multinomial => multinomial_select(p, rng),
            Resampler::Stratified => stratified_select(p, rng),
            Resampler::Systematic => systematic_select(p, rng),
        }
    }
}

impl fmt::Display for Resampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Resampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multinomial" => Ok(Resampler::Multinomial),
            "stratified" => Ok(Resampler::Stratified),
            "systematic" => Ok(Resampler::Systematic),
            other => Err(Error::invalid(format!(
                "unknown resampler `{other}` (expected multinomial, stratified or systematic)"
            ))),
        }
    }
}

/// `P_n = Σ_{i≤n} p_i`, with the final entry pinned to exactly 1.
pub fn cumulative_sum(p: &[f64]) -> Result<Vec<f64>> {
    if p.is_empty() {
        return Err(Error::invalid("cannot resample an empty weight vector"));
    }
    if let Some(bad) = p.iter().find(|&&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::invalid(format!("weights must be finite and non-negative, got {bad}")));
    }
    let mut acc = 0.0;
    let mut out: Vec<f64> = p
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    if (acc - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("weights sum to {acc}, not 1")));
    }
    // Pin from the last positive weight on, so trailing zero weights keep
    // an empty interval.
    let last = p.iter().rposition(|&w| w > 0.0).unwrap_or(p.len() - 1);
    out[last..].fill(1.0);
    Ok(out)
}

// First m with u ≤ P_m. Zero-weight entries share P with their left
// neighbour and can never satisfy P_{m-1} < u.
fn invert(cum: &[f64], u: f64) -> usize {
    cum.partition_point(|&c| c < u).min(cum.len() - 1)
}

/// Maps each `u_n` to its ancestor. `u` need not be sorted.
pub fn select_with_uniforms(p: &[f64], u: &[f64]) -> Result<Vec<usize>> {
    let cum = cumulative_sum(p)?;
    if let Some(bad) = u.iter().find(|&&v| !(v > 0.0 && v <= 1.0)) {
        return Err(Error::invalid(format!("uniform draw {bad} outside (0, 1]")));
    }
    Ok(u.iter().map(|&v| invert(&cum, v)).collect())
}

// Uniform on (0, 1].
#[inline]
fn open_closed_unit(rng: &mut StreamRng) -> f64 {
    1.0 - rng.random::<f64>()
}

pub fn multinomial_select(p: &[f64], rng: &mut StreamRng) -> Result<Vec<usize>> {
    let u: Vec<f64> = (0..p.len()).map(|_| open_closed_unit(rng)).collect();
    select_with_uniforms(p, &u)
}

/// Stratified selection from one offset per stratum, each in `(0, 1]`.
pub fn stratified_from_offsets(p: &[f64], offsets: &[f64]) -> Result<Vec<usize>> {
    let n = p.len() as f64;
    let u: Vec<f64> = offsets
        .iter()
        .enumerate()
        .map(|(i, &o)| ((i as f64 + o) / n).min(1.0))
        .collect();
    select_with_uniforms(p, &u)
}

pub fn stratified_select(p: &[f64], rng: &mut StreamRng) -> Result<Vec<usize>> {
    let offsets: Vec<f64> = (0..p.len()).map(|_| open_closed_unit(rng)).collect();
    stratified_from_offsets(p, &offsets)
}

/// Systematic selection given the first point `u_1 ∈ (0, 1/N]`.
pub fn systematic_from_first(p: &[f64], u1: f64) -> Result<Vec<usize>> {
    let n = p.len();
    if !(u1 > 0.0 && u1 <= 1.0 / n as f64) {
        return Err(Error::invalid(format!("systematic offset {u1} outside (0, 1/N]")));
    }
    let u: Vec<f64> = (0..n)
        .map(|i| (u1 + i as f64 / n as f64).min(1.0))
        .collect();
    select_with_uniforms(p, &u)
}

/// Consumes exactly one uniform from `rng`.
pub fn systematic_select(p: &[f64], rng: &mut StreamRng) -> Result<Vec<usize>> {
    let u1 = open_closed_unit(rng) / p.len().max(1) as f64;
    systematic_from_first(p, u1)
}

/// How many times each ancestor was picked.
pub fn counts(indices: &[usize], n: usize) -> Vec<usize> {
    let mut c = vec![0; n];
    for &i in indices {
        c[i] += 1;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use proptest::prelude::*;
    use rand::Rng;

    const P: [f64; 4] = [0.5, 0.25, 0.125, 0.125];

    fn rng(tag: u64) -> StreamRng {
        stream_rng(11, Stream::Custom { tag, a: 0, b: 0 })
    }

    #[test]
    fn cumulative_sum_examples() {
        assert_eq!(cumulative_sum(&P).unwrap(), vec![0.5, 0.75, 0.875, 1.0]);
        assert_eq!(cumulative_sum(&[0.25; 4]).unwrap(), vec![0.25, 0.5, 0.75, 1.0]);
        assert_eq!(cumulative_sum(&[1.0]).unwrap(), vec![1.0]);
        let tenth = cumulative_sum(&[0.1; 10]).unwrap();
        assert_eq!(*tenth.last().unwrap(), 1.0);
    }

    #[test]
    fn cumulative_sum_rejects_bad_weights() {
        assert!(cumulative_sum(&[0.5, -0.1, 0.6]).is_err());
        assert!(cumulative_sum(&[0.5, 0.4]).is_err());
        assert!(cumulative_sum(&[f64::NAN, 1.0]).is_err());
        assert!(cumulative_sum(&[]).is_err());
    }

    #[test]
    fn degenerate_weights_pick_the_only_candidate() {
        let p = [1.0, 0.0, 0.0];
        for scheme in [Resampler::Multinomial, Resampler::Stratified, Resampler::Systematic] {
            assert_eq!(scheme.select(&p, &mut rng(1)).unwrap(), vec![0, 0, 0]);
        }
        let p = [0.0, 0.0, 1.0];
        assert_eq!(select_with_uniforms(&p, &[1e-12, 0.5, 1.0]).unwrap(), vec![2, 2, 2]);
    }

    #[test]
    fn stratified_hand_trace() {
        let idx = stratified_from_offsets(&P, &[0.4, 0.2, 0.4, 0.6]).unwrap();
        // u = (0.1, 0.3, 0.6, 0.9)
        assert_eq!(idx, vec![0, 0, 1, 3]);
    }

    #[test]
    fn systematic_hand_trace() {
        assert_eq!(systematic_from_first(&P, 0.1).unwrap(), vec![0, 0, 1, 2]);
        assert!(systematic_from_first(&P, 0.3).is_err());
        assert!(systematic_from_first(&P, 0.0).is_err());
    }

    #[test]
    fn uniform_weights_select_each_walker_once() {
        let p = [0.125; 8];
        for _ in 0..100 {
            let idx = systematic_select(&p, &mut rng(2)).unwrap();
            assert_eq!(idx, (0..8).collect::<Vec<_>>());
        }
        let mut r = rng(3);
        for _ in 0..100 {
            assert_eq!(stratified_select(&p, &mut r).unwrap(), (0..8).collect::<Vec<_>>());
        }
    }

    #[test]
    fn right_closed_boundary_convention() {
        // u exactly at P_1 belongs to the first interval.
        assert_eq!(select_with_uniforms(&P, &[0.5, 0.75, 1.0]).unwrap(), vec![0, 1, 3]);
        assert!(select_with_uniforms(&P, &[0.0]).is_err());
    }

    #[test]
    fn systematic_consumes_one_draw() {
        let mut a = rng(4);
        let mut b = rng(4);
        systematic_select(&P, &mut a).unwrap();
        let _: f64 = b.random();
        assert_eq!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn fixed_stream_is_deterministic() {
        for scheme in [Resampler::Multinomial, Resampler::Stratified, Resampler::Systematic] {
            let x = scheme.select(&P, &mut rng(5)).unwrap();
            let y = scheme.select(&P, &mut rng(5)).unwrap();
            assert_eq!(x, y);
        }
    }

    #[test]
    fn multinomial_two_way_split_is_balanced() {
        let p = [0.5, 0.5];
        let mut r = rng(6);
        let trials = 100_000;
        let first: usize = (0..trials)
            .map(|_| counts(&multinomial_select(&p, &mut r).unwrap(), 2)[0])
            .sum();
        // Each trial is Binomial(2, 1/2) for index 0.
        let mean = first as f64 / trials as f64;
        let se = (2.0 * 0.25 / trials as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean = {mean}");
    }

    #[test]
    fn names_round_trip() {
        for s in ["multinomial", "stratified", "systematic"] {
            assert_eq!(s.parse::<Resampler>().unwrap().as_str(), s);
        }
        assert!("residual".parse::<Resampler>().is_err());
        assert_eq!(Resampler::default(), Resampler::Systematic);
    }

    fn normalise(w: Vec<f64>) -> Vec<f64> {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    }

    proptest! {
        #[test]
        fn systematic_counts_bracket_expected(
            w in prop::collection::vec(0.0..1.0f64, 1..40),
            frac in 1e-9..1.0f64,
        ) {
            prop_assume!(w.iter().sum::<f64>() > 1e-3);
            let p = normalise(w);
            let n = p.len();
            let idx = systematic_from_first(&p, frac / n as f64).unwrap();
            prop_assert_eq!(idx.len(), n);
            for (i, c) in counts(&idx, n).into_iter().enumerate() {
                let expect = n as f64 * p[i];
                prop_assert!((c as f64 - expect).abs() < 1.0 + 1e-9,
                    "index {} count {} expected {}", i, c, expect);
            }
        }

        #[test]
        fn every_scheme_returns_valid_indices(
            w in prop::collection::vec(0.0..1.0f64, 1..40),
            seed in any::<u64>(),
        ) {
            prop_assume!(w.iter().sum::<f64>() > 1e-3);
            let p = normalise(w);
            for scheme in [Resampler::Multinomial, Resampler::Stratified, Resampler::Systematic] {
                let mut r = stream_rng(seed, Stream::Resample { iteration: 0 });
                let idx = scheme.select(&p, &mut r).unwrap();
                prop_assert_eq!(idx.len(), p.len());
                prop_assert!(idx.iter().all(|&i| i < p.len() && p[i] > 0.0));
            }
        }
    }
}
