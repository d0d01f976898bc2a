//! Neural Galerkin schemes: evolve the parameters of a nonlinear ansatz so
//! that it tracks the solution of a time-dependent PDE, with the residual
//! estimated on samples that may follow the solution itself.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments, clippy::needless_range_loop)]

pub mod assembly;
pub mod error;
pub mod experiment;
pub mod fitting;
pub mod integrators;
pub mod metrics;
pub mod optim;
pub mod oracles;
pub mod params;
pub mod pde;
pub mod reduce;
pub mod rng;
pub mod sampling;
pub mod suite;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/galerkin.md")]
    mod galerkin {}
    #[doc = include_str!("../../../book/src/time-stepping.md")]
    mod time_stepping {}
    #[doc = include_str!("../../../book/src/fitting.md")]
    mod fitting {}
    #[doc = include_str!("../../../book/src/oracles.md")]
    mod oracles {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
