//! Datasets, seeded splits, normalization, and the regression benchmark harness.

pub mod benchmark;
pub mod dataset;
pub mod normalize;
pub mod registry;
pub mod split;

pub use benchmark::{run_benchmark, BenchmarkRecord, Method, ProtocolConfig, SplitResult, Summary};
pub use dataset::{load_csv, Dataset};
pub use normalize::{denormalized_nll, normalize, NormalizationStats};
pub use registry::{DatasetSpec, DATASETS};
pub use split::{split_dataset, split_indices, SplitIndices};
