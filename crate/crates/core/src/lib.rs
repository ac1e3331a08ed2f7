//! Decorrelating neuron training via zero-dimensional persistence.
//!
//! This crate trains multilayer perceptrons while penalizing the strongest
//! neuron correlations. Per batch, a set of neurons is selected, their
//! pairwise correlation dissimilarities `d(u, v) = 1 - |corr(u, v)|` form a
//! weighted clique, and the multiset of minimum-spanning-tree edge weights of
//! that clique -- its zero-dimensional persistence diagram -- feeds the
//! regularization terms. Gradients flow back through the diagram, the
//! correlations, and the network itself.
//!
//! Organization:
//!
//! * [`nncore`] -- MLP definition, op-level tape, CCE loss, SGD + momentum.
//! * [`topology`] -- correlations, dissimilarities, MST diagrams, adjoints.
//! * [`sampler`] -- per-batch neuron selection by mean absolute activation.
//! * [`regularizers`] -- the persistence terms plus correlation-mean, l1, l2.
//! * [`trainer`] -- training loop, early stopping, weight sweeps.
//! * [`stats`] -- Friedman test, Nemenyi post-hoc, critical-difference data.
//! * [`io`] -- IDX ingestion, synthetic data, config files, result CSVs.
//! * [`verify`] -- self-check suites behind the `verify` CLI subcommand.
//!
//! Numeric kernels are generic over [`scalar::Scalar`] (`f32`/`f64`); the
//! pipeline types below pin the crate-wide default precision.

pub mod error;
pub mod io;
pub mod nncore;
pub mod regularizers;
pub mod rng;
pub mod sampler;
pub mod scalar;
pub mod stats;
pub mod topology;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default scalar for the full training/evaluation pipeline.
pub type Real = f64;

/// Parameters at pipeline precision.
pub type ParamsReal = nncore::Params<Real>;
/// Activation capture at pipeline precision.
pub type CaptureReal = nncore::ActivationCapture<Real>;
/// Persistence diagram at pipeline precision.
pub type DiagramReal = topology::Diagram0<Real>;
