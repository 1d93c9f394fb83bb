//! Forward and inverse spectral problems for the Dirichlet Sturm-Liouville
//! operator with a convolution perturbation on (0, pi):
//!
//! ```text
//! -y'' + q(x) y + (M * y)(x) = lambda y,   y(0) = y(pi) = 0,
//! (M * y)(x) = integral of M(x - t) y(t) dt over (0, x).
//! ```
//!
//! The forward side computes the characteristic function and eigenvalues from
//! `(q, M)`. The inverse side reconstructs the kernel `M` from the spectrum
//! and the potential `q` by solving the main nonlinear integral equation with
//! a local contraction, interval-doubling continuation and a weighted solve on
//! the last block. A stability lab measures how the reconstruction error
//! responds to perturbations of the data.
//!
//! Start with the `examples/` directory; each example exercises one major
//! capability end to end.

pub mod charfield;
pub mod cli;
pub mod forward;
pub mod inverse;
pub mod kernel_ops;
pub mod numgrid;
pub mod stability_lab;

pub use numgrid::{Grid, SampledFunction, WeightedNormReport};

/// Unified error type for all solver stages.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("iteration failed to converge after {iters} sweeps (last increment {increment:.3e})")]
    IterationFailure { iters: usize, increment: f64 },
    #[error("root localization failed for index {index}: {reason}")]
    RootLocalization { index: usize, reason: String },
    #[error("inconsistent data: {0}")]
    InconsistentData(String),
    #[error("solver stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("problem file: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
