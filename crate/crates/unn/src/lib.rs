//! Leveraged k-nearest-neighbor classification trained by boosting.
//!
//! The classic k-NN rule gives every prototype one uniform vote. This crate
//! implements the UNN (Universal Nearest Neighbors) algorithm, which instead
//! learns a real-valued *leveraging coefficient* per prototype and per class
//! by minimizing a convex surrogate of the empirical misclassification risk
//! (exponential, squared, or logistic). Prototypes that hurt a class get
//! small or negative coefficients; filtering them out shrinks the prototype
//! set and usually improves accuracy at the same time.
//!
//! The crate is organized around the pipeline:
//!
//! - [`dataset`]: datasets, symmetric class vectors, synthetic generators
//!   (Ripley mixture and Gaussian blobs), CSV ingestion, k-fold splitting.
//! - [`neighbors`]: exact k-NN search (exhaustive or kd-tree), the neighbor
//!   graph with direct and reciprocal lists, and sparse edge-matrix entries.
//! - [`losses`]: the surrogate-loss family, per-loss leveraging-step solvers
//!   and weight updates, plus a generic exact 1-D solver.
//! - [`boost`]: the training loop with pluggable weak-index-chooser oracles,
//!   smoothing, and convergence/theory diagnostics.
//! - [`model`]: the trained model and its textual serialization.
//! - [`classify`]: classic and leveraged voting rules, prototype filtering.
//! - [`eval`]: risks, confusion matrices, mean per-class accuracy, and a
//!   cross-validation driver.
//! - [`cli`]: the `unn` command-line binary (gen/train/filter/predict/eval/
//!   cv/repro subcommands).
//!
//! Runnable walkthroughs live in `examples/`; start with
//! `cargo run --example ripley --release`.

pub mod boost;
pub mod classify;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod neighbors;

pub use boost::{train, Oracle, Smoothing, TrainConfig, TrainDiagnostics};
pub use classify::{FilterSpec, Prediction};
pub use dataset::{ClassVector, Dataset, Example, Observation};
pub use error::{Error, Result};
pub use eval::EvalReport;
pub use losses::LossKind;
pub use model::LeveragedModel;
pub use neighbors::{Backend, MetricSpec, NeighborGraph};
