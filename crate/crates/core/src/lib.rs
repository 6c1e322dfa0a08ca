//! Nonlinear functional autoregressive (NFAR) processes on uniform 2-D grids.
//!
//! The crate covers the whole pipeline of a synthetic operator-learning study:
//!
//! * [`grid`]: grid fields on `[0,1)²`, quadrature norms, subsampling and IO.
//! * [`gp`]: stationary Gaussian noise fields through circulant embedding.
//! * [`nfar`]: the Hammerstein transition `z ↦ ∫ c·K(u−v)·τ(z(v)) dv` and path simulation.
//! * [`diagnostics`]: numerical checks of the drift/mixing sufficient conditions.
//! * [`mlp`]: a small dense ReLU network with exact backpropagation and Adam.
//! * [`learner`]: the Urysohn operator built from a network kernel and its training loop.
//! * [`experiment`]: replicated sample-size sweeps, persistence and plots.

// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod fft;
pub mod gp;
pub mod grid;
pub mod learner;
pub mod mlp;
pub mod nfar;
pub mod seed;

pub use error::{Error, Result};
pub use grid::{GridField, GridSpec};
