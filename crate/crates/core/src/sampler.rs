//! Sato–Tate rejection sampler.
//!
//! Draws `theta` uniform on `[0, pi]` and `y` uniform on `[0, 2/pi]`, keeping
//! `theta` when `y < (2/pi) sin^2 theta`. The accepted angle gives
//! `x~ = cos theta`, distributed as `(2/pi) sqrt(1 - x^2) dx`, and the integer
//! surrogate trace `x_p = round(2 x~ sqrt p)`.
//!
//! Every random vector owns a ChaCha8 stream selected by its index, so vectors
//! can be generated in any order (or in parallel) with identical results.

use std::f64::consts::{FRAC_2_PI, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{TraceSource, TraceVector};
use crate::error::{Error, Result};
use crate::primes::first_primes;

pub const MAX_PROPOSALS: u64 = 1_000_000;

/// Acceptance test for a single `(theta, y)` proposal.
pub fn accepts(theta: f64, y: f64) -> bool {
    let s = theta.sin();
    y < FRAC_2_PI * s * s
}

/// Proposal counts from one call to [`sample_theta_counted`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProposalStats {
    pub proposals: u64,
    pub accepted: u64,
}

pub fn sample_theta<R: Rng + ?Sized>(rng: &mut R) -> Result<f64> {
    sample_theta_counted(rng, &mut ProposalStats::default())
}

pub fn sample_theta_counted<R: Rng + ?Sized>(rng: &mut R, stats: &mut ProposalStats) -> Result<f64> {
    for _ in 0..MAX_PROPOSALS {
        let theta = rng.random::<f64>() * PI;
        let y = rng.random::<f64>() * FRAC_2_PI;
        stats.proposals += 1;
        if accepts(theta, y) {
            stats.accepted += 1;
            return Ok(theta);
        }
    }
    Err(Error::SamplerExhausted(MAX_PROPOSALS))
}

/// `round(2 x~ sqrt p)`, ties away from zero.
pub fn round_trace(x_tilde: f64, p: u64) -> i64 {
    (2.0 * x_tilde * (p as f64).sqrt()).round() as i64
}

/// One `(x~_p, x_p)` pair.
pub fn sample_trace<R: Rng + ?Sized>(rng: &mut R, p: u64) -> Result<(f64, i64)> {
    let x = sample_theta(rng)?.cos();
    Ok((x, round_trace(x, p)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomTraceVector {
    pub tilde_values: Vec<f64>,
    pub int_values: Vec<i64>,
    pub seed: u64,
    pub index: u64,
    pub primes: Vec<u64>,
}

impl RandomTraceVector {
    pub fn source(&self) -> TraceSource {
        TraceSource::Random {
            seed: self.seed,
            index: self.index,
        }
    }

    /// The integer surrogate as a trace vector.
    pub fn to_trace_vector(&self) -> TraceVector {
        TraceVector {
            values: self.int_values.clone(),
            primes: self.primes.clone(),
            source: self.source(),
        }
    }

    /// `x_p / (2 sqrt p)` clamped to `[-1, 1]`, with the number of clamped entries.
    pub fn normalized_rounded(&self) -> (Vec<f64>, usize) {
        let mut clamped = 0;
        let v = self
            .int_values
            .iter()
            .zip(&self.primes)
            .map(|(&x, &p)| {
                let z = x as f64 / (2.0 * (p as f64).sqrt());
                if z.abs() > 1.0 {
                    clamped += 1;
                }
                z.clamp(-1.0, 1.0)
            })
            .collect();
        (v, clamped)
    }
}

/// Stream for vector `index` under `seed`.
pub fn vector_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn random_vector(seed: u64, index: u64, primes: &[u64]) -> Result<RandomTraceVector> {
    let mut rng = vector_rng(seed, index);
    let mut tilde_values = Vec::with_capacity(primes.len());
    let mut int_values = Vec::with_capacity(primes.len());
    for &p in primes {
        let (x, xi) = sample_trace(&mut rng, p)?;
        tilde_values.push(x);
        int_values.push(xi);
    }
    Ok(RandomTraceVector {
        tilde_values,
        int_values,
        seed,
        index,
        primes: primes.to_vec(),
    })
}

/// `count` vectors of length `n`; indices `first_index..first_index + count`.
pub fn random_dataset_from(seed: u64, first_index: u64, count: usize, n: usize) -> Result<Vec<RandomTraceVector>> {
    let primes = first_primes(n);
    (0..count as u64)
        .into_par_iter()
        .map(|i| random_vector(seed, first_index + i, &primes))
        .collect()
}

pub fn random_dataset(count: usize, n: usize, seed: u64) -> Result<Vec<RandomTraceVector>> {
    random_dataset_from(seed, 0, count, n)
}

/// Manifest written next to a random dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomManifest {
    pub seed: u64,
    pub first_index: u64,
    pub count: usize,
    pub n: usize,
    /// Entries with `|x_p| > 2 sqrt p` after rounding (clamped at encoding time).
    pub clamped_entries: usize,
    pub rounding: String,
}

impl RandomManifest {
    pub fn describe(seed: u64, first_index: u64, n: usize, data: &[RandomTraceVector]) -> Self {
        let clamped_entries = data.iter().map(|v| v.normalized_rounded().1).sum();
        RandomManifest {
            seed,
            first_index,
            count: data.len(),
            n,
            clamped_entries,
            rounding: "nearest, ties away from zero".into(),
        }
    }
}

/// Semicircle CDF on `[-1, 1]`.
pub fn semicircle_cdf(x: f64) -> f64 {
    let x = x.clamp(-1.0, 1.0);
    0.5 + (x * (1.0 - x * x).sqrt() + x.asin()) / PI
}

/// Kolmogorov–Smirnov distance of a sample to the semicircle law.
pub fn ks_distance(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = semicircle_cdf(x);
            (f - i as f64 / n).abs().max((((i + 1) as f64) / n - f).abs())
        })
        .fold(0.0, f64::max)
}
