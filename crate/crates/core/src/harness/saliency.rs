//! Input-gradient saliency over twist fields.

use std::io::Write;
use std::path::Path;

use ectwist_nn::{Mode, Sequential, Tensor};
use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use super::train::Task;
use crate::encode::image::{write_png_file, Image};
use crate::error::{Error, Result};

/// Which output is differentiated for multi-class models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SaliencyTarget {
    /// The logit of each sample's predicted class.
    Predicted,
    Fixed(usize),
}

/// Dataset-averaged `|d logit / d input|`, rows = primes, cols = characters.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub rows: usize,
    pub cols: usize,
    pub s_r: Vec<f64>,
    pub s_b: Vec<f64>,
    pub samples: usize,
    pub epoch: usize,
}

impl SaliencyMap {
    pub fn mean(&self) -> Vec<f64> {
        self.s_r.iter().zip(&self.s_b).map(|(r, b)| (r + b) / 2.0).collect()
    }

    /// Per-twist marginal: column means (average over primes).
    pub fn per_twist(values: &[f64], rows: usize, cols: usize) -> Vec<f64> {
        debug_assert_eq!(values.len(), rows * cols);
        (0..cols)
            .map(|c| (0..rows).map(|r| values[r * cols + c]).sum::<f64>() / rows as f64)
            .collect()
    }

    /// Per-prime marginal: row means (average over twists).
    pub fn per_prime(values: &[f64], rows: usize, cols: usize) -> Vec<f64> {
        debug_assert_eq!(values.len(), rows * cols);
        values
            .chunks(cols)
            .map(|row| row.iter().sum::<f64>() / cols as f64)
            .collect()
    }

    /// Mean of column 0 over the mean of all other columns, on the averaged map.
    pub fn first_column_ratio(&self) -> f64 {
        let cols = SaliencyMap::per_twist(&self.mean(), self.rows, self.cols);
        let rest = cols[1..].iter().sum::<f64>() / (cols.len() - 1).max(1) as f64;
        cols[0] / rest
    }

    /// `row,col,s_r,s_b,mean`
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "row,col,s_r,s_b,mean")?;
        for r in 0..self.rows {
            for c in 0..self.cols {
                let i = r * self.cols + c;
                writeln!(
                    w,
                    "{r},{c},{},{},{}",
                    self.s_r[i],
                    self.s_b[i],
                    (self.s_r[i] + self.s_b[i]) / 2.0
                )?;
            }
        }
        Ok(())
    }

    /// `axis,index,s_r,s_b,mean` with axis `prime` (row means) or `twist` (column means).
    pub fn write_marginals_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "axis,index,s_r,s_b,mean")?;
        let mean = self.mean();
        let (rows, cols) = (self.rows, self.cols);
        let groups = [
            (
                "prime",
                SaliencyMap::per_prime(&self.s_r, rows, cols),
                SaliencyMap::per_prime(&self.s_b, rows, cols),
                SaliencyMap::per_prime(&mean, rows, cols),
            ),
            (
                "twist",
                SaliencyMap::per_twist(&self.s_r, rows, cols),
                SaliencyMap::per_twist(&self.s_b, rows, cols),
                SaliencyMap::per_twist(&mean, rows, cols),
            ),
        ];
        for (axis, r, b, m) in groups {
            for i in 0..r.len() {
                writeln!(w, "{axis},{i},{},{},{}", r[i], b[i], m[i])?;
            }
        }
        Ok(())
    }

    /// Writes `saliency.csv`, `saliency_marginals.csv` and three heatmaps into `dir`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let open = |name: &str| {
            let p = dir.join(name);
            std::fs::File::create(&p)
                .map(std::io::BufWriter::new)
                .map_err(|e| Error::io(p, e))
        };
        self.write_csv(open("saliency.csv")?)?;
        self.write_marginals_csv(open("saliency_marginals.csv")?)?;
        for (name, v) in [
            ("saliency_r.png", &self.s_r),
            ("saliency_b.png", &self.s_b),
            ("saliency_mean.png", &self.mean()),
        ] {
            write_png_file(&dir.join(name), &Image::heatmap(v, self.cols, self.rows))?;
        }
        Ok(())
    }
}

/// Averages absolute input gradients over `indices`, with the model in
/// evaluation mode so samples do not interact through batch statistics.
pub fn saliency(
    model: &mut Sequential<f32>,
    data: &LabeledDataset,
    indices: &[usize],
    task: Task,
    target: SaliencyTarget,
    batch_size: usize,
) -> Result<SaliencyMap> {
    let shape = data.sample_shape();
    if shape.len() != 3 || shape[0] != 2 {
        return Err(Error::Format(format!("saliency needs (2, N, N) inputs, got {shape:?}")));
    }
    if indices.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (rows, cols) = (shape[1], shape[2]);
    let plane = rows * cols;
    let mut s_r = vec![0.0; plane];
    let mut s_b = vec![0.0; plane];
    for chunk in indices.chunks(batch_size.max(1)) {
        let y = model.forward(data.batch(chunk)?, Mode::Eval)?;
        let k = y.item_len();
        let mut seed = Tensor::zeros(&y.shape);
        for (b, row) in y.data.chunks(k).enumerate() {
            let class = match (task, target) {
                (Task::Binary { .. }, _) => 0,
                (_, SaliencyTarget::Predicted) => task.predict(row) as usize,
                (_, SaliencyTarget::Fixed(c)) => c,
            };
            seed.data[b * k + class] = 1.0;
        }
        let dx = model.backward(seed, true)?.expect("input gradient requested");
        for item in dx.data.chunks(2 * plane) {
            for (acc, g) in s_r.iter_mut().zip(&item[..plane]) {
                *acc += g.abs() as f64;
            }
            for (acc, g) in s_b.iter_mut().zip(&item[plane..]) {
                *acc += g.abs() as f64;
            }
        }
    }
    model.clear_cache();
    let n = indices.len() as f64;
    for v in s_r.iter_mut().chain(s_b.iter_mut()) {
        *v /= n;
    }
    Ok(SaliencyMap {
        rows,
        cols,
        s_r,
        s_b,
        samples: indices.len(),
        epoch: 0,
    })
}
