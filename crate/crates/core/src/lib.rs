//! Graph classification with Nyström-approximated propagation kernels and
//! bipolar hypervectors.
//!
//! Training picks diverse landmark graphs, builds per-hop LSH codebooks and
//! landmark histograms, and derives a projection that maps a graph's
//! landmark-kernel vector straight into hypervector space. Inference is a
//! fixed pipeline of code generation, perfect-hash histogramming, scheduled
//! sparse similarity, streaming projection and prototype matching.

mod codec;
pub mod dataset;
pub mod error;
pub mod landmarks;
pub mod linalg;
pub mod model;
pub mod mph;
pub mod perfmodel;
pub mod propkernel;
pub mod schedule;
pub mod synth;

pub use dataset::{load_tudataset, split, Dataset, DatasetStats, GraphCsr};
pub use error::{Error, ErrorKind, Result};
pub use landmarks::{hybrid_select, kdpp_sample, uniform_pool, LandmarkMethod, LandmarkSet};
pub use linalg::{DenseMatrix, EigenDecomposition, SplitMix64};
pub use model::{
    classify, encode, evaluate, load_model, predict, save_model, train, Encoding, EvalReport, Hypervector,
    InferOptions, LookupEngine, ModelConfig, TrainedModel,
};
pub use mph::MphTable;
pub use perfmodel::{MachineParams, OpCounter, PerfReport, WorkloadParams};
pub use propkernel::{CodePath, Codebook, LshParams};
pub use schedule::{ScheduleTable, SparseMatrixCsr, SparseRows};
