//! Minimal reverse-mode engine and MLP definition.
//!
//! The network is a stack of affine layers with ReLU hidden activations and
//! optional inverted-scaling dropout. A forward pass records an op-level
//! [`tape::Tape`] whose backward sweep produces parameter gradients; custom
//! adjoints (from the topological regularizers) enter the sweep as seeds on
//! captured activation nodes.

pub mod loss;
pub mod mlp;
pub mod tape;

pub use loss::cce_loss;
pub use mlp::{
    init_params, lr_schedule, sgd_momentum_step, Activation, Gradients, LayerParams, MlpSpec,
    Params,
};
pub use tape::{forward, ActivationCapture, Mode, NodeId, Tape};
