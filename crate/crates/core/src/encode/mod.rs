//! Encodings of trace data as matrices, vector fields and images.
//!
//! Conductor families become a curves × primes matrix with entries
//! `1/2 - a_p / (4 sqrt p)` and an 8-bit greyscale image `floor(255 m)`.
//! Twist families become a primes × characters vector field: with
//! `X + iY = z_p chi(p)`, red is `1/2 - X/2`, blue is `1/2 - Y/2` and green is
//! fixed at 127.

pub mod cvtf;
pub mod image;

use num_complex::Complex64;

use crate::characters::DirichletCharacter;
use crate::curve::{normalized_trace, TraceSource, TraceVector};
use crate::error::{Error, Result};

pub use self::image::{read_png, write_png, write_png_file, ColorKind, Image};

/// Green channel of every twist image.
pub const GREEN: u8 = 127;

/// Slack allowed on `|z_p| <= 1` before an input is rejected.
pub const CLAMP_TOLERANCE: f64 = 1e-12;

/// `floor(255 v)` for `v` in `[0, 1]`.
pub fn quantize(v: f64) -> u8 {
    (255.0 * v).floor().clamp(0.0, 255.0) as u8
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConductorFamilyMatrix {
    /// Row-major, `rows = curves`, `cols = primes`.
    pub entries: Vec<f64>,
    pub row_labels: Vec<String>,
    pub primes: Vec<u64>,
}

impl ConductorFamilyMatrix {
    pub fn rows(&self) -> usize {
        self.row_labels.len()
    }

    pub fn cols(&self) -> usize {
        self.primes.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.cols() + col]
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["label".to_string()];
        header.extend(self.primes.iter().map(u64::to_string));
        w.write_record(&header)?;
        for (r, label) in self.row_labels.iter().enumerate() {
            let mut rec = vec![label.clone()];
            rec.extend((0..self.cols()).map(|c| format!("{}", self.get(r, c))));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn conductor_matrix(traces: &[TraceVector]) -> Result<ConductorFamilyMatrix> {
    let primes = traces.first().map(|t| t.primes.clone()).unwrap_or_default();
    let mut entries = Vec::with_capacity(traces.len() * primes.len());
    let mut row_labels = Vec::with_capacity(traces.len());
    for t in traces {
        if t.primes != primes {
            return Err(Error::Length {
                expected: primes.len(),
                got: t.primes.len(),
            });
        }
        for (&a, &p) in t.values.iter().zip(&t.primes) {
            entries.push(0.5 - normalized_trace(a, p)? / 2.0);
        }
        row_labels.push(match &t.source {
            TraceSource::Curve(l) => l.clone(),
            other => other.key(),
        });
    }
    Ok(ConductorFamilyMatrix {
        entries,
        row_labels,
        primes,
    })
}

pub fn grey_quantize(m: &ConductorFamilyMatrix) -> Image {
    Image {
        width: m.cols() as u32,
        height: m.rows() as u32,
        color: ColorKind::Grey,
        data: m.entries.iter().map(|&v| quantize(v)).collect(),
    }
}

/// Character values at the first primes: `values[row * cols + col] = chi_col(p_row)`.
#[derive(Debug, Clone)]
pub struct TwistBasis {
    pub primes: Vec<u64>,
    pub chars: Vec<DirichletCharacter>,
    pub values: Vec<Complex64>,
}

impl TwistBasis {
    pub fn new(primes: &[u64], chars: &[DirichletCharacter]) -> Self {
        let mut values = Vec::with_capacity(primes.len() * chars.len());
        for &p in primes {
            for chi in chars {
                values.push(chi.evaluate_complex(p as i64));
            }
        }
        TwistBasis {
            primes: primes.to_vec(),
            chars: chars.to_vec(),
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.primes.len()
    }

    pub fn cols(&self) -> usize {
        self.chars.len()
    }

    /// Column indices of real characters.
    pub fn real_columns(&self) -> Vec<usize> {
        self.chars
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.is_real().then_some(i))
            .collect()
    }

    /// Writes the red and blue planes for the sequence `z` into `out`
    /// (`2 * rows * cols` values, red plane first).
    pub fn fill_channels(&self, z: &[Complex64], out: &mut [f32]) -> Result<()> {
        let (rows, cols) = (self.rows(), self.cols());
        if z.len() != rows {
            return Err(Error::Length {
                expected: rows,
                got: z.len(),
            });
        }
        let (red, blue) = out.split_at_mut(rows * cols);
        for (r, &zr) in z.iter().enumerate() {
            let zr = checked_unit(zr)?;
            for c in 0..cols {
                let w = twist(zr, self.values[r * cols + c]);
                red[r * cols + c] = (0.5 - w.re / 2.0) as f32;
                blue[r * cols + c] = (0.5 - w.im / 2.0) as f32;
            }
        }
        Ok(())
    }
}

fn checked_unit(z: Complex64) -> Result<Complex64> {
    let n = z.norm();
    if n.is_nan() || n > 1.0 + CLAMP_TOLERANCE {
        return Err(Error::OutOfRange {
            value: n,
            lo: 0.0,
            hi: 1.0,
        });
    }
    Ok(if n > 1.0 { z / n } else { z })
}

/// `z * chi`, with real `z` kept exact so real characters give `Y = 0` exactly.
fn twist(z: Complex64, chi: Complex64) -> Complex64 {
    if z.im == 0.0 {
        Complex64::new(z.re * chi.re, z.re * chi.im)
    } else {
        z * chi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwistField {
    pub rows: usize,
    pub cols: usize,
    /// Full-precision red plane, row-major (rows = primes, cols = characters).
    pub red: Vec<f64>,
    pub blue: Vec<f64>,
    pub source: Option<TraceSource>,
}

impl TwistField {
    pub fn red_at(&self, r: usize, c: usize) -> f64 {
        self.red[r * self.cols + c]
    }

    pub fn blue_at(&self, r: usize, c: usize) -> f64 {
        self.blue[r * self.cols + c]
    }

    /// 24-bit image `(floor(255 R), 127, floor(255 B))`.
    pub fn quantized(&self) -> Image {
        let mut data = Vec::with_capacity(self.rows * self.cols * 3);
        for (&r, &b) in self.red.iter().zip(&self.blue) {
            data.extend([quantize(r), GREEN, quantize(b)]);
        }
        Image {
            width: self.cols as u32,
            height: self.rows as u32,
            color: ColorKind::Rgb,
            data,
        }
    }

    /// `(2, rows, cols)` tensor: red plane then blue plane, no quantisation.
    pub fn to_tensor(&self) -> (Vec<usize>, Vec<f32>) {
        let mut data = Vec::with_capacity(2 * self.rows * self.cols);
        data.extend(self.red.iter().map(|&v| v as f32));
        data.extend(self.blue.iter().map(|&v| v as f32));
        (vec![2, self.rows, self.cols], data)
    }
}

pub fn twist_field(z: &[Complex64], basis: &TwistBasis) -> Result<TwistField> {
    let (rows, cols) = (basis.rows(), basis.cols());
    if z.len() != rows {
        return Err(Error::Length {
            expected: rows,
            got: z.len(),
        });
    }
    let mut red = Vec::with_capacity(rows * cols);
    let mut blue = Vec::with_capacity(rows * cols);
    for (r, &zr) in z.iter().enumerate() {
        let zr = checked_unit(zr)?;
        for c in 0..cols {
            let w = twist(zr, basis.values[r * cols + c]);
            red.push(0.5 - w.re / 2.0);
            blue.push(0.5 - w.im / 2.0);
        }
    }
    Ok(TwistField {
        rows,
        cols,
        red,
        blue,
        source: None,
    })
}

/// `z_p = a_p / (2 sqrt p)` for a curve's trace vector.
pub fn curve_sequence(t: &TraceVector) -> Result<Vec<Complex64>> {
    t.values
        .iter()
        .zip(&t.primes)
        .map(|(&a, &p)| Ok(Complex64::new(normalized_trace(a, p)?, 0.0)))
        .collect()
}

pub fn real_sequence(values: &[f64]) -> Vec<Complex64> {
    values.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}
