//! Confusion matrices, precision/recall/F1 and the metrics CSV.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// `counts[truth][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: Vec<Vec<u64>>,
}

impl Confusion {
    pub fn new(classes: usize) -> Self {
        Confusion {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_pairs(classes: usize, truth: &[u8], predicted: &[u8]) -> Self {
        let mut c = Confusion::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            c.add(t, p);
        }
        c
    }

    pub fn add(&mut self, truth: u8, predicted: u8) {
        self.counts[truth as usize][predicted as usize] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let correct: u64 = (0..self.counts.len()).map(|i| self.counts[i][i]).sum();
        ratio(correct, self.total())
    }

    /// Precision, recall and F1 for class `positive`; 0/0 counts as 0.
    pub fn prf(&self, positive: usize) -> (f64, f64, f64) {
        let tp = self.counts[positive][positive];
        let predicted: u64 = self.counts.iter().map(|row| row[positive]).sum();
        let actual: u64 = self.counts[positive].iter().sum();
        let p = ratio(tp, predicted);
        let r = ratio(tp, actual);
        (p, r, f1(p, r))
    }

    /// Share of the most frequent true class.
    pub fn majority_baseline(&self) -> f64 {
        let best = self.counts.iter().map(|row| row.iter().sum::<u64>()).max().unwrap_or(0);
        ratio(best, self.total())
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub confusion: Confusion,
}

impl MetricsRecord {
    /// Binary metrics use class 1 as positive; multi-class ones report macro averages.
    pub fn from_confusion(epoch: usize, split: &str, loss: f64, confusion: Confusion) -> Self {
        let k = confusion.counts.len();
        let (precision, recall, f1) = if k == 2 {
            confusion.prf(1)
        } else {
            let all: Vec<_> = (0..k).map(|c| confusion.prf(c)).collect();
            let mean = |f: fn(&(f64, f64, f64)) -> f64| all.iter().map(f).sum::<f64>() / k as f64;
            (mean(|t| t.0), mean(|t| t.1), mean(|t| t.2))
        };
        MetricsRecord {
            epoch,
            split: split.to_string(),
            loss,
            precision,
            recall,
            f1,
            accuracy: confusion.accuracy(),
            confusion,
        }
    }
}

/// `epoch,split,loss,precision,recall,f1`
pub fn write_metrics_csv<W: Write>(mut w: W, records: &[MetricsRecord]) -> Result<()> {
    writeln!(w, "epoch,split,loss,precision,recall,f1")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.epoch, r.split, r.loss, r.precision, r.recall, r.f1
        )?;
    }
    Ok(())
}

/// `epoch,split,loss,accuracy`, used by the rank task.
pub fn write_accuracy_csv<W: Write>(mut w: W, records: &[MetricsRecord]) -> Result<()> {
    writeln!(w, "epoch,split,loss,accuracy")?;
    for r in records {
        writeln!(w, "{},{},{},{}", r.epoch, r.split, r.loss, r.accuracy)?;
    }
    Ok(())
}

/// Parses a metrics CSV back into `(epoch, split, loss, precision, recall, f1)` rows.
pub fn read_metrics_csv(text: &str) -> Result<Vec<(usize, String, [f64; 4])>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| crate::Error::Format(format!("bad metrics row {rec:?}")))
        };
        out.push((
            num(0)? as usize,
            rec.get(1).unwrap_or_default().to_string(),
            [num(2)?, num(3)?, num(4)?, num(5)?],
        ));
    }
    Ok(out)
}
