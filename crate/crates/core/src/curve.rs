//! Elliptic curves over Q in long Weierstrass form
//! `y^2 + w1 xy + w3 y = x^3 + w2 x^2 + w4 x + w6`, and their Frobenius traces.
//!
//! Traces at good primes come from point counting over F_p. At bad primes the
//! trace is `p - #E_ns(F_p)`, read off the smooth locus of the reduced minimal
//! model, which is 1, -1 or 0 for split multiplicative, non-split
//! multiplicative and additive reduction respectively.

use std::io::{Read, Write};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primes::{factorize, first_primes, is_prime};

/// The thirteen rational j-invariants of elliptic curves with complex multiplication.
pub const CM_J_INVARIANTS: [i128; 13] = [
    0,
    1728,
    -3375,
    8000,
    -32768,
    54000,
    287496,
    -884736,
    -12288000,
    16581375,
    -884736000,
    -147197952000,
    -262537412640768000,
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeierstrassCurve {
    pub label: String,
    pub conductor: u64,
    pub rank: u32,
    /// `[w1, w2, w3, w4, w6]`
    pub coeffs: [i64; 5],
    pub is_minimal: bool,
}

/// b- and c-invariants of a model, exact.
#[derive(Debug, Clone)]
pub struct Invariants {
    pub b2: BigInt,
    pub b4: BigInt,
    pub b6: BigInt,
    pub b8: BigInt,
    pub c4: BigInt,
    pub discriminant: BigInt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reduction {
    Good,
    SplitMultiplicative,
    NonSplitMultiplicative,
    Additive,
}

impl WeierstrassCurve {
    /// A minimal model with placeholder metadata, for tests and ad-hoc use.
    pub fn from_coeffs(coeffs: [i64; 5]) -> Self {
        WeierstrassCurve {
            label: format!("{coeffs:?}"),
            conductor: 0,
            rank: 0,
            coeffs,
            is_minimal: true,
        }
    }

    pub fn invariants(&self) -> Invariants {
        let [w1, w2, w3, w4, w6] = self.coeffs.map(BigInt::from);
        let b2 = &w1 * &w1 + 4 * &w2;
        let b4 = 2 * &w4 + &w1 * &w3;
        let b6 = &w3 * &w3 + 4 * &w6;
        let b8 = &w1 * &w1 * &w6 + 4 * &w2 * &w6 - &w1 * &w3 * &w4 + &w2 * &w3 * &w3 - &w4 * &w4;
        let b2b2b8: BigInt = &b2 * &b2 * &b8;
        let discriminant = -b2b2b8 - 8 * &b4 * &b4 * &b4 - 27 * &b6 * &b6 + 9 * &b2 * &b4 * &b6;
        let c4 = &b2 * &b2 - 24 * &b4;
        Invariants {
            b2,
            b4,
            b6,
            b8,
            c4,
            discriminant,
        }
    }

    pub fn discriminant(&self) -> BigInt {
        self.invariants().discriminant
    }

    /// Discriminant reduced mod `p`, without big-integer arithmetic.
    fn discriminant_mod(&self, p: u64) -> u64 {
        let m = p as i128;
        let [w1, w2, w3, w4, w6] = self.coeffs.map(|c| (c as i128).rem_euclid(m));
        let r = |x: i128| x.rem_euclid(m);
        let b2 = r(w1 * w1 + 4 * w2);
        let b4 = r(2 * w4 + w1 * w3);
        let b6 = r(w3 * w3 + 4 * w6);
        let b8 = r(r(w1 * w1 * w6) + r(4 * w2 * w6) - r(w1 * w3 * w4) + r(w2 * w3 * w3) - r(w4 * w4));
        let d = -r(r(b2 * b2) * b8) - r(8 * r(b4 * b4) * b4) - r(27 * r(b6 * b6)) + r(9 * r(b2 * b4) * b6);
        r(d) as u64
    }

    pub fn is_good_prime(&self, p: u64) -> bool {
        self.discriminant_mod(p) != 0
    }

    fn coeffs_mod(&self, p: u64) -> [u64; 5] {
        self.coeffs.map(|c| (c as i128).rem_euclid(p as i128) as u64)
    }

    /// Affine points of the reduction mod p, singular or not.
    fn affine_points(&self, p: u64) -> u64 {
        let [w1, w2, w3, w4, w6] = self.coeffs_mod(p);
        if p == 2 {
            let mut n = 0;
            for x in 0..2u64 {
                for y in 0..2u64 {
                    let lhs = y * y + w1 * x * y + w3 * y;
                    let rhs = x * x * x + w2 * x * x + w4 * x + w6;
                    if lhs % 2 == rhs % 2 {
                        n += 1;
                    }
                }
            }
            return n;
        }
        // (2y + w1 x + w3)^2 = 4(x^3 + w2 x^2 + w4 x + w6) + (w1 x + w3)^2
        let mut is_square = vec![false; p as usize];
        for t in 0..p {
            is_square[((t * t) % p) as usize] = true;
        }
        let mut n = 0;
        for x in 0..p {
            let f = ((x * x % p * x) + w2 * x % p * x + w4 * x + w6) % p;
            let h = (w1 * x + w3) % p;
            let g = (4 * f + h * h) % p;
            n += if g == 0 {
                1
            } else if is_square[g as usize] {
                2
            } else {
                0
            };
        }
        n
    }

    /// `#E(F_p)` including the point at infinity. Rejects primes of bad reduction.
    pub fn count_points(&self, p: u64) -> Result<u64> {
        if !is_prime(p) {
            return Err(Error::NotPrime(p));
        }
        if !self.is_good_prime(p) {
            return Err(Error::BadPrime {
                label: self.label.clone(),
                p,
            });
        }
        Ok(1 + self.affine_points(p))
    }

    pub fn ap_good(&self, p: u64) -> Result<i64> {
        Ok(p as i64 + 1 - self.count_points(p)? as i64)
    }

    /// Trace at a prime dividing the discriminant of the minimal model.
    pub fn ap_bad(&self, p: u64) -> Result<i64> {
        if !is_prime(p) {
            return Err(Error::NotPrime(p));
        }
        if !self.is_minimal {
            return Err(Error::NotMinimal(self.label.clone()));
        }
        if self.is_good_prime(p) {
            return Err(Error::GoodPrime {
                label: self.label.clone(),
                p,
            });
        }
        // the unique singular point is an affine F_p-point; E_ns = affine - 1 + infinity
        let ap = p as i64 - self.affine_points(p) as i64;
        if !(-1..=1).contains(&ap) {
            return Err(Error::ReductionType {
                label: self.label.clone(),
                p,
                ap,
            });
        }
        Ok(ap)
    }

    pub fn ap(&self, p: u64) -> Result<i64> {
        if self.is_good_prime(p) {
            self.ap_good(p)
        } else {
            self.ap_bad(p)
        }
    }

    pub fn reduction(&self, p: u64) -> Result<Reduction> {
        if self.is_good_prime(p) {
            return Ok(Reduction::Good);
        }
        Ok(match self.ap_bad(p)? {
            1 => Reduction::SplitMultiplicative,
            -1 => Reduction::NonSplitMultiplicative,
            _ => Reduction::Additive,
        })
    }

    /// Exact j-invariant membership test against the rational CM j-invariants.
    pub fn is_cm(&self) -> Result<bool> {
        let inv = self.invariants();
        if inv.discriminant.is_zero() {
            return Err(Error::SingularModel);
        }
        let c4_cubed = &inv.c4 * &inv.c4 * &inv.c4;
        let (j, rem) = c4_cubed.div_rem(&inv.discriminant);
        if !rem.is_zero() {
            return Ok(false);
        }
        Ok(j.to_i128().is_some_and(|j| CM_J_INVARIANTS.contains(&j)))
    }

    /// Primes dividing the discriminant of this model.
    pub fn discriminant_primes(&self) -> Result<Vec<u64>> {
        let mut d = self.discriminant().abs();
        if d.is_zero() {
            return Err(Error::SingularModel);
        }
        let mut out = Vec::new();
        let mut p = 2u64;
        while d > BigInt::from(1) {
            let bp = BigInt::from(p);
            if (&d % &bp).is_zero() {
                out.push(p);
                while (&d % &bp).is_zero() {
                    d /= &bp;
                }
            }
            p += 1;
            // the cofactor is prime once p^2 exceeds it
            if BigInt::from(p) * BigInt::from(p) > d && d > BigInt::from(1) {
                out.push(d.to_u64().expect("prime cofactor exceeds u64"));
                break;
            }
        }
        Ok(out)
    }

    /// Bad primes of the model coincide with the primes dividing the ingested conductor.
    pub fn conductor_consistent(&self) -> Result<bool> {
        let from_conductor: Vec<u64> = factorize(self.conductor).into_iter().map(|(p, _)| p).collect();
        // only primes of the conductor can divide a minimal discriminant, so strip those first
        let mut d = self.discriminant().abs();
        if d.is_zero() {
            return Err(Error::SingularModel);
        }
        for &p in &from_conductor {
            let bp = BigInt::from(p);
            if !(&d % &bp).is_zero() {
                return Ok(false);
            }
            while (&d % &bp).is_zero() {
                d /= &bp;
            }
        }
        Ok(d == BigInt::from(1))
    }

    pub fn trace_vector(&self, n: usize) -> Result<TraceVector> {
        let primes = first_primes(n);
        self.trace_vector_at(&primes)
    }

    pub fn trace_vector_at(&self, primes: &[u64]) -> Result<TraceVector> {
        if !self.is_minimal {
            return Err(Error::NotMinimal(self.label.clone()));
        }
        let values = primes.iter().map(|&p| self.ap(p)).collect::<Result<Vec<_>>>()?;
        Ok(TraceVector {
            values,
            primes: primes.to_vec(),
            source: TraceSource::Curve(self.label.clone()),
        })
    }
}

/// `a_p / (2 sqrt p)`, rejecting values outside the Hasse interval.
pub fn normalized_trace(ap: i64, p: u64) -> Result<f64> {
    if !within_hasse(ap, p) {
        return Err(Error::Hasse { ap, p });
    }
    Ok(ap as f64 / (2.0 * (p as f64).sqrt()))
}

/// `a^2 <= 4p`, exact.
pub fn within_hasse(ap: i64, p: u64) -> bool {
    (ap as i128) * (ap as i128) <= 4 * p as i128
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceSource {
    Curve(String),
    Random { seed: u64, index: u64 },
}

impl TraceSource {
    /// Stable provenance key, used for disjointness checks between datasets.
    pub fn key(&self) -> String {
        match self {
            TraceSource::Curve(label) => format!("curve:{label}"),
            TraceSource::Random { seed, index } => format!("random:{seed}:{index}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceVector {
    pub values: Vec<i64>,
    pub primes: Vec<u64>,
    pub source: TraceSource,
}

impl TraceVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn satisfies_hasse(&self) -> bool {
        self.values.iter().zip(&self.primes).all(|(&a, &p)| within_hasse(a, p))
    }
}

/// Trace vectors for many curves; parallel, with output in input order.
pub fn trace_vectors(curves: &[WeierstrassCurve], n: usize) -> Result<Vec<TraceVector>> {
    let primes = first_primes(n);
    curves.par_iter().map(|c| c.trace_vector_at(&primes)).collect()
}

#[derive(Debug, Deserialize, Serialize)]
struct CurveRow {
    label: String,
    conductor: u64,
    rank: u32,
    w1: i64,
    w2: i64,
    w3: i64,
    w4: i64,
    w6: i64,
}

/// Reads the ingestion CSV (`label,conductor,rank,w1,w2,w3,w4,w6`). Every row
/// is taken to be a minimal model.
pub fn read_curves<R: Read>(reader: R) -> Result<Vec<WeierstrassCurve>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let r: CurveRow = row?;
        out.push(WeierstrassCurve {
            label: r.label,
            conductor: r.conductor,
            rank: r.rank,
            coeffs: [r.w1, r.w2, r.w3, r.w4, r.w6],
            is_minimal: true,
        });
    }
    Ok(out)
}

pub fn write_curves<W: Write>(writer: W, curves: &[WeierstrassCurve]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for c in curves {
        let [w1, w2, w3, w4, w6] = c.coeffs;
        w.serialize(CurveRow {
            label: c.label.clone(),
            conductor: c.conductor,
            rank: c.rank,
            w1,
            w2,
            w3,
            w4,
            w6,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Trace CSV: `label` then one column per prime.
pub fn write_traces<W: Write>(writer: W, traces: &[TraceVector]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if let Some(first) = traces.first() {
        let mut header = vec!["label".to_string()];
        header.extend(first.primes.iter().map(|p| p.to_string()));
        w.write_record(&header)?;
    }
    for t in traces {
        let label = match &t.source {
            TraceSource::Curve(l) => l.clone(),
            other => other.key(),
        };
        let mut rec = vec![label];
        rec.extend(t.values.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_traces<R: Read>(reader: R) -> Result<Vec<TraceVector>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let primes: Vec<u64> = rdr
        .headers()?
        .iter()
        .skip(1)
        .map(|h| h.parse().map_err(|_| Error::Format(format!("bad prime header {h:?}"))))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let label = rec.get(0).unwrap_or_default().to_string();
        let values = rec
            .iter()
            .skip(1)
            .map(|v| v.parse().map_err(|_| Error::Format(format!("bad trace value {v:?}"))))
            .collect::<Result<Vec<i64>>>()?;
        if values.len() != primes.len() {
            return Err(Error::Length {
                expected: primes.len(),
                got: values.len(),
            });
        }
        out.push(TraceVector {
            values,
            primes: primes.clone(),
            source: TraceSource::Curve(label),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e11() -> WeierstrassCurve {
        WeierstrassCurve {
            label: "11.a3".into(),
            conductor: 11,
            rank: 0,
            coeffs: [0, -1, 1, 0, 0],
            is_minimal: true,
        }
    }

    /// Independent oracle: double loop over F_p^2.
    fn brute_count(c: &WeierstrassCurve, p: u64) -> u64 {
        let [w1, w2, w3, w4, w6] = c.coeffs.map(|v| v.rem_euclid(p as i64) as u64);
        let mut n = 1;
        for x in 0..p {
            for y in 0..p {
                let lhs = (y * y + w1 * x % p * y + w3 * y) % p;
                let rhs = (x * x % p * x + w2 * x % p * x + w4 * x + w6) % p;
                if lhs == rhs {
                    n += 1;
                }
            }
        }
        n
    }

    #[test]
    fn discriminant_examples() {
        assert_eq!(e11().discriminant(), BigInt::from(-11));
        assert_eq!(
            WeierstrassCurve::from_coeffs([0, 0, 0, 0, 0]).discriminant(),
            BigInt::from(0)
        );
        assert_eq!(
            WeierstrassCurve::from_coeffs([0, 0, 0, -1, 0]).discriminant(),
            BigInt::from(64)
        );
    }

    #[test]
    fn point_counts() {
        let e = e11();
        assert_eq!(e.count_points(2).unwrap(), 5);
        assert_eq!(e.count_points(3).unwrap(), 5);
        assert_eq!(
            WeierstrassCurve::from_coeffs([0, 0, 0, -1, 0]).count_points(3).unwrap(),
            4
        );
        assert!(matches!(e.count_points(11), Err(Error::BadPrime { .. })));
        assert!(matches!(e.count_points(4), Err(Error::NotPrime(4))));
    }

    #[test]
    fn good_traces() {
        let e = e11();
        assert_eq!(e.ap_good(2).unwrap(), -2);
        assert_eq!(e.ap_good(3).unwrap(), -1);
        assert_eq!(WeierstrassCurve::from_coeffs([0, 0, 0, -1, 0]).ap_good(3).unwrap(), 0);
    }

    #[test]
    fn bad_traces() {
        assert_eq!(e11().ap_bad(11).unwrap(), 1);
        assert_eq!(e11().reduction(11).unwrap(), Reduction::SplitMultiplicative);
        let cusp = WeierstrassCurve::from_coeffs([0, 0, 0, 0, 3]);
        assert_eq!(cusp.ap_bad(3).unwrap(), 0);
        // conductor 14: non-split at 2, split at 7
        let e14 = WeierstrassCurve::from_coeffs([1, 0, 1, 4, -6]);
        assert_eq!(e14.ap_bad(2).unwrap(), -1);
        assert_eq!(e14.ap_bad(7).unwrap(), 1);
        assert!(matches!(e11().ap_bad(5), Err(Error::GoodPrime { .. })));
        let mut nm = e11();
        nm.is_minimal = false;
        assert!(matches!(nm.ap_bad(11), Err(Error::NotMinimal(_))));
    }

    #[test]
    fn normalized_trace_examples() {
        assert_eq!(normalized_trace(0, 5).unwrap(), 0.0);
        assert!((normalized_trace(-2, 2).unwrap() + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((normalized_trace(1, 11).unwrap() - 0.15075567228888181).abs() < 1e-15);
        assert!(matches!(normalized_trace(3, 2), Err(Error::Hasse { .. })));
    }

    #[test]
    fn cm_screen() {
        assert!(WeierstrassCurve::from_coeffs([0, 0, 0, 0, 1]).is_cm().unwrap());
        assert!(WeierstrassCurve::from_coeffs([0, 0, 0, -1, 0]).is_cm().unwrap());
        assert!(!e11().is_cm().unwrap());
        // conductor 27 (j = 0) and conductor 49 (j = -3375)
        assert!(WeierstrassCurve::from_coeffs([0, 0, 1, 0, -7]).is_cm().unwrap());
        assert!(WeierstrassCurve::from_coeffs([1, -1, 0, -2, -1]).is_cm().unwrap());
        assert!(matches!(
            WeierstrassCurve::from_coeffs([0; 5]).is_cm(),
            Err(Error::SingularModel)
        ));
    }

    #[test]
    fn trace_vector_examples() {
        let e = e11();
        assert_eq!(e.trace_vector(3).unwrap().values, vec![-2, -1, 1]);
        assert!(e.trace_vector(0).unwrap().is_empty());
        let tv = e.trace_vector(100).unwrap();
        assert!(tv.satisfies_hasse());
        // a_p for 11.a3 at p = 5, 7, 13: 1, -2, 4
        assert_eq!(&tv.values[2..6], &[1, -2, 1, 4]);
    }

    #[test]
    fn conductor_consistency() {
        assert!(e11().conductor_consistent().unwrap());
        let mut wrong = e11();
        wrong.conductor = 22;
        assert!(!wrong.conductor_consistent().unwrap());
        assert_eq!(e11().discriminant_primes().unwrap(), vec![11]);
    }

    #[test]
    fn matches_brute_force_on_small_curves() {
        let curves = [[0, -1, 1, 0, 0], [1, 0, 1, 4, -6], [0, 1, 1, -2, 0], [1, -1, 1, -3, 3]];
        for c in curves {
            let e = WeierstrassCurve::from_coeffs(c);
            for p in crate::primes::primes_below(200) {
                if e.is_good_prime(p) {
                    assert_eq!(e.count_points(p).unwrap(), brute_count(&e, p), "{c:?} p={p}");
                }
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut buf = Vec::new();
        write_curves(&mut buf, &[e11()]).unwrap();
        let s = String::from_utf8(buf.clone()).unwrap();
        assert!(s.starts_with("label,conductor,rank,w1,w2,w3,w4,w6\n"));
        assert_eq!(read_curves(&buf[..]).unwrap(), vec![e11()]);

        let tv = e11().trace_vector(4).unwrap();
        let mut buf = Vec::new();
        write_traces(&mut buf, std::slice::from_ref(&tv)).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "label,2,3,5,7\n11.a3,-2,-1,1,-2\n"
        );
        assert_eq!(read_traces(&buf[..]).unwrap(), vec![tv]);
    }
}
