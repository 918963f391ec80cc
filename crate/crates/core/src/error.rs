use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("curve {label} is singular at p = {p} (p divides the discriminant)")]
    BadPrime { label: String, p: u64 },
    #[error("p = {p} is a good prime for curve {label}; use the good-prime path")]
    GoodPrime { label: String, p: u64 },
    #[error("curve {0} is not flagged as a minimal model")]
    NotMinimal(String),
    #[error("singular model: discriminant is zero")]
    SingularModel,
    #[error("bad-prime count for {label} at p = {p} gave a_p = {ap}, outside {{-1,0,1}}")]
    ReductionType { label: String, p: u64, ap: i64 },
    #[error("Hasse bound violated: a_p = {ap} at p = {p}")]
    Hasse { ap: i64, p: u64 },
    #[error("value {value} outside [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("modulus must be positive")]
    ZeroModulus,
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("rejection sampler exceeded {0} proposals")]
    SamplerExhausted(u64),
    #[error("dataset format: {0}")]
    Format(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    IoBare(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Png(#[from] png::EncodingError),
    #[error(transparent)]
    PngDecode(#[from] png::DecodingError),
    #[error(transparent)]
    Nn(#[from] ectwist_nn::NnError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
