//! Desk-scale toolkit for immiscible diffusion training.
//!
//! Implements the four image–noise coupling strategies (random, linear
//! assignment, KNN selection, image scaling) inside a miniature DDIM /
//! flow-matching trainer, together with the miscibility, Gaussianity,
//! perturbation-stability, and timing diagnostics used to compare them.
//!
//! Start with the `examples/` directory: each major capability has one
//! runnable example. The `immiscible` binary exposes the same operations as
//! subcommands for scripted experiment runs.

pub mod bench;
pub mod config;
pub mod datasets;
pub mod diagnostics;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod optim;
pub mod pairing;
pub mod rng;
pub mod runner;
pub mod sampler;
pub mod schedule;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use rng::RngState;
pub use tensor::Tensor;
