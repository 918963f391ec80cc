//! Frobenius-trace datasets for elliptic curves over Q, their Dirichlet-twist
//! image encodings, and the classifier experiments built on them.
//!
//! Pipeline: [`curve`] computes `a_p` from minimal Weierstrass models,
//! [`sampler`] draws Sato–Tate surrogate vectors, [`characters`] enumerates
//! primitive Dirichlet characters, [`encode`] turns traces into matrices,
//! twist fields, PNG and CVTF files, and [`harness`] trains and evaluates the
//! CNNs from `ectwist-nn`.

pub mod characters;
pub mod curve;
pub mod encode;
pub mod error;
pub mod harness;
pub mod primes;
pub mod sampler;

pub use error::{Error, Result};
