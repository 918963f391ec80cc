//! Labelled datasets for the classifiers, with provenance.

use std::collections::BTreeMap;
use std::sync::Arc;

use ectwist_nn::Tensor;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::curve::{within_hasse, TraceVector};
use crate::encode::{curve_sequence, real_sequence, TwistBasis};
use crate::error::{Error, Result};
use crate::sampler::RandomTraceVector;

pub const CURVE: u8 = 1;
pub const RANDOM: u8 = 0;

/// How random vectors are presented next to genuine curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputMode {
    /// Integer surrogates `x_p` (1-d) and `x_p / (2 sqrt p)` (2-d), so both
    /// classes share the same value lattice.
    AntiLeak,
    /// Continuous `x~_p` in both encodings, as the experiment is literally worded.
    Literal,
}

impl InputMode {
    pub fn name(self) -> &'static str {
        match self {
            InputMode::AntiLeak => "anti-leak",
            InputMode::Literal => "literal",
        }
    }
}

/// Sample storage. Twist fields are produced on demand from the normalised
/// sequences, since a materialised 2-d dataset would not fit in memory.
#[derive(Debug, Clone)]
pub enum Inputs {
    Dense {
        shape: Vec<usize>,
        values: Vec<f32>,
    },
    Twist {
        basis: Arc<TwistBasis>,
        z: Vec<Vec<Complex64>>,
    },
}

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub inputs: Inputs,
    pub labels: Vec<u8>,
    /// Provenance key per sample (curve label or random seed/index).
    pub keys: Vec<String>,
}

/// Counts of how many random entries fell outside the Hasse interval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblyReport {
    pub hasse_violations: usize,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-sample shape: `(1, N)` or `(2, N, N)`.
    pub fn sample_shape(&self) -> Vec<usize> {
        match &self.inputs {
            Inputs::Dense { shape, .. } => shape.clone(),
            Inputs::Twist { basis, .. } => vec![2, basis.rows(), basis.cols()],
        }
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape().iter().product()
    }

    pub fn fill_sample(&self, i: usize, out: &mut [f32]) -> Result<()> {
        match &self.inputs {
            Inputs::Dense { values, .. } => {
                let n = out.len();
                out.copy_from_slice(&values[i * n..(i + 1) * n]);
                Ok(())
            }
            Inputs::Twist { basis, z } => basis.fill_channels(&z[i], out),
        }
    }

    pub fn sample(&self, i: usize) -> Result<Vec<f32>> {
        let mut out = vec![0.0; self.sample_len()];
        self.fill_sample(i, &mut out)?;
        Ok(out)
    }

    /// Batch tensor for the given sample indices.
    pub fn batch(&self, indices: &[usize]) -> Result<Tensor<f32>> {
        let per = self.sample_len();
        let mut data = vec![0.0; indices.len() * per];
        for (chunk, &i) in data.chunks_mut(per).zip(indices) {
            self.fill_sample(i, chunk)?;
        }
        let mut shape = vec![indices.len()];
        shape.extend(self.sample_shape());
        Ok(Tensor::from_vec(&shape, data))
    }

    pub fn label_counts(&self) -> BTreeMap<u8, usize> {
        let mut m = BTreeMap::new();
        for &l in &self.labels {
            *m.entry(l).or_insert(0) += 1;
        }
        m
    }

    /// SHA-256 over provenance keys and labels, in order.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (k, l) in self.keys.iter().zip(&self.labels) {
            h.update(k.as_bytes());
            h.update([0, *l]);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Subset by indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        let inputs = match &self.inputs {
            Inputs::Dense { shape, values } => {
                let n: usize = shape.iter().product();
                let mut v = Vec::with_capacity(indices.len() * n);
                for &i in indices {
                    v.extend_from_slice(&values[i * n..(i + 1) * n]);
                }
                Inputs::Dense {
                    shape: shape.clone(),
                    values: v,
                }
            }
            Inputs::Twist { basis, z } => Inputs::Twist {
                basis: basis.clone(),
                z: indices.iter().map(|&i| z[i].clone()).collect(),
            },
        };
        LabeledDataset {
            inputs,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            keys: indices.iter().map(|&i| self.keys[i].clone()).collect(),
        }
    }

    /// Positions of samples carrying `label`.
    pub fn indices_of(&self, label: u8) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == label).collect()
    }
}

fn check_len(n: usize, got: usize) -> Result<()> {
    if got == n {
        Ok(())
    } else {
        Err(Error::Length { expected: n, got })
    }
}

/// 1-d dataset: `(1, N)` inputs; label 1 for curves, 0 for random vectors.
pub fn assemble_1d(
    curves: &[TraceVector],
    random: &[RandomTraceVector],
    n: usize,
    mode: InputMode,
) -> Result<(LabeledDataset, AssemblyReport)> {
    let mut values = Vec::with_capacity((curves.len() + random.len()) * n);
    let mut labels = Vec::new();
    let mut keys = Vec::new();
    let mut report = AssemblyReport::default();
    for t in curves {
        check_len(n, t.len())?;
        values.extend(t.values.iter().map(|&a| a as f32));
        labels.push(CURVE);
        keys.push(t.source.key());
    }
    for r in random {
        check_len(n, r.int_values.len())?;
        report.hasse_violations += r
            .int_values
            .iter()
            .zip(&r.primes)
            .filter(|&(&x, &p)| !within_hasse(x, p))
            .count();
        match mode {
            InputMode::AntiLeak => values.extend(r.int_values.iter().map(|&x| x as f32)),
            InputMode::Literal => values.extend(r.tilde_values.iter().map(|&x| x as f32)),
        }
        labels.push(RANDOM);
        keys.push(r.source().key());
    }
    Ok((
        LabeledDataset {
            inputs: Inputs::Dense {
                shape: vec![1, n],
                values,
            },
            labels,
            keys,
        },
        report,
    ))
}

/// Normalised sequence used to twist a random vector.
pub fn random_sequence(r: &RandomTraceVector, mode: InputMode) -> Vec<Complex64> {
    match mode {
        InputMode::AntiLeak => real_sequence(&r.normalized_rounded().0),
        InputMode::Literal => real_sequence(&r.tilde_values),
    }
}

/// 2-d dataset of `(2, N, N)` twist fields over `basis`.
pub fn assemble_2d(
    curves: &[TraceVector],
    random: &[RandomTraceVector],
    basis: Arc<TwistBasis>,
    mode: InputMode,
) -> Result<(LabeledDataset, AssemblyReport)> {
    let n = basis.rows();
    let mut z = Vec::with_capacity(curves.len() + random.len());
    let mut labels = Vec::new();
    let mut keys = Vec::new();
    let mut report = AssemblyReport::default();
    for t in curves {
        check_len(n, t.len())?;
        z.push(curve_sequence(t)?);
        labels.push(CURVE);
        keys.push(t.source.key());
    }
    for r in random {
        check_len(n, r.int_values.len())?;
        report.hasse_violations += r.normalized_rounded().1;
        z.push(random_sequence(r, mode));
        labels.push(RANDOM);
        keys.push(r.source().key());
    }
    Ok((
        LabeledDataset {
            inputs: Inputs::Twist { basis, z },
            labels,
            keys,
        },
        report,
    ))
}

/// 2-d twist fields of curves labelled by rank; curves above `max_rank` are dropped.
pub fn assemble_rank_2d(
    curves: &[(TraceVector, u32)],
    basis: Arc<TwistBasis>,
    max_rank: u32,
) -> Result<LabeledDataset> {
    let n = basis.rows();
    let mut z = Vec::new();
    let mut labels = Vec::new();
    let mut keys = Vec::new();
    for (t, rank) in curves {
        if *rank > max_rank {
            continue;
        }
        check_len(n, t.len())?;
        z.push(curve_sequence(t)?);
        labels.push(*rank as u8);
        keys.push(t.source.key());
    }
    Ok(LabeledDataset {
        inputs: Inputs::Twist { basis, z },
        labels,
        keys,
    })
}

/// Stratified split: within each label, a seeded shuffle and the first
/// `floor(count * train_percent / 100)` go to training. Both index lists are sorted.
pub fn split(labels: &[u8], train_percent: u32, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut by_label: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_label.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (_, mut idx) in by_label {
        idx.shuffle(&mut rng);
        let k = idx.len() * train_percent as usize / 100;
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}
