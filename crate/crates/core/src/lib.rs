//! Error assignment for fully connected networks: backpropagation, direct
//! feedback alignment (DFA), sparse DFA (SDFA) and its single-connection
//! extreme (SSDFA).
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem (IDX/CIFAR loaders, checkpoints, CSV, the CLI) lives in the
//! companion `ssdfa` crate.
//!
//! # Layout
//!
//! - [`numerics`]: dense row-major [`Matrix`], activations, softmax
//!   cross-entropy, uniform initialization and the seeded [`Rng`].
//! - [`feedback`]: construction of fixed random feedback matrices with a
//!   prescribed rank and sparsity, rank/sparsity measurement and the
//!   alignment angle between a feedback matrix and the forward weights.
//! - [`network`]: the forward pass, the three backward rules, SGD and the
//!   training loop.
//! - [`costmodel`]: closed-form read/write/MAC/data-movement counts per
//!   algorithm and the runtime counters that the backward pass feeds.
//! - [`data`]: the in-memory [`Dataset`] and a synthetic teacher dataset.
//! - [`gradcheck`]: central finite-difference checks of the analytic
//!   gradients.
//!
//! # Batches
//!
//! Batched activations and errors are stored feature-major: a matrix with
//! one row per neuron and one column per sample. The single-sample entry
//! points are thin wrappers that use a one-column matrix.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod costmodel;
pub mod data;
pub mod error;
pub mod feedback;
pub mod gradcheck;
pub mod network;
pub mod numerics;

pub use costmodel::{analytic_cost, builtin_shapes, CostCounters, CostReport, LayerCost, NetShape, NoProbe, Probe};
pub use data::{synthetic_teacher, Dataset, Split};
pub use error::{Error, Result};
pub use feedback::{angle, build_feedback, build_ssdfa, measure, validate_constraints, FeedbackMatrix, Violation};
pub use network::{Algorithm, EpochMetrics, ForwardTrace, Gradients, Layer, Network, TrainConfig, TrainReport};
pub use numerics::{Activation, Matrix, Rng, Scalar, Stream};
