//! Structure-feature self-adaptive graph pooling (GSAPool) for graph
//! classification.
//!
//! The crate is layered bottom-up:
//!
//! - [`autodiff`]: dense `f64` tensors, a reverse-mode tape, parameter sets,
//!   Adam and finite-difference gradient checking.
//! - [`graph`]: labeled undirected graphs, normalization and subgraphs.
//! - [`dataset`]: TU-format loading, synthetic data and stratified folds.
//! - [`layers`]: GCN, Chebyshev, GraphSAGE, GAT and MLP layers.
//! - [`pool`]: structure and feature scoring, score combination, top-k
//!   selection, pre-discard feature fusion and the gPool/SAGPool scorers.
//! - [`model`] and [`train`]: the hierarchical classifier, training with
//!   early stopping and k-fold cross-validation.
//! - [`check`]: the finite-difference gradient suite.

pub mod autodiff;
pub mod check;
pub mod dataset;
pub mod error;
pub mod graph;
pub mod layers;
pub mod model;
pub mod pool;
pub mod train;

pub use autodiff::{Adam, AdamConfig, Bindings, Gradients, ParameterSet, Tape, Tensor, Var};
pub use dataset::{Dataset, DatasetStats, FoldPlan};
pub use error::{Error, Result};
pub use graph::{Graph, NormalizedAdjacency};
pub use layers::{Activation, LayerConfig};
pub use model::{GsaPoolNet, Mode, ModelConfig, ModelOutput};
pub use pool::{FusionKind, PoolConfig, PoolingResult, ScoreVector, ScorerKernel};
pub use train::{Metrics, TrainConfig};
