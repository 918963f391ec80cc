//! Experiment orchestration: datasets, training, metrics, saliency.

pub mod config;
pub mod dataset;
pub mod experiment;
pub mod metrics;
pub mod saliency;
pub mod train;

pub use config::Config;
pub use dataset::{assemble_1d, assemble_2d, assemble_rank_2d, split, InputMode, LabeledDataset};
pub use metrics::{Confusion, MetricsRecord};
pub use saliency::{saliency, SaliencyMap, SaliencyTarget};
pub use train::{evaluate, train_loop, Task, TrainConfig};
