//! Adapted (nested) Wasserstein distance between finitely supported laws of
//! discrete-time processes on `[0,1]^d`, together with the grid-quantized
//! adapted empirical measure, the Markov variant, exact discrete optimal
//! transport, optimal stopping on scenario trees, and a Monte-Carlo harness
//! for convergence-rate and deviation experiments.
//!
//! The crate is `no_std`-compatible (`default-features = false` requires only
//! `alloc`); all IO, file formats and the command-line front end live in the
//! companion `aw-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod adapted;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod grid;
pub mod measures;
pub mod processes;
pub mod stopping;
pub mod transport;

pub use error::{Error, Result};
pub use measures::{MarkovMeasure, Path, PathMeasure, ProcessShape, ScenarioTree};

pub(crate) mod math {
    //! Float functions routed through `libm` so results are identical with and
    //! without `std`.

    #[inline]
    pub fn sqrt(x: f64) -> f64 {
        libm::sqrt(x)
    }

    #[inline]
    pub fn ln(x: f64) -> f64 {
        libm::log(x)
    }

    #[inline]
    pub fn powf(x: f64, y: f64) -> f64 {
        libm::pow(x, y)
    }

    #[inline]
    pub fn cos(x: f64) -> f64 {
        libm::cos(x)
    }
}
