//! A Monte Carlo laboratory for stochastic differential equations
//! dX = b(X) dt + dW^H driven by fractional Brownian motion, where the
//! drift b may be an L_p function or a signed measure.
//!
//! The crate samples fBM exactly, solves mollified-drift equations, estimates
//! occupation densities and scaling exponents, checks sewing-type integral
//! bounds, and probes the deterministic non-existence counterexample. The
//! `xlab` module and the `fracsde` binary orchestrate reproducible
//! experiments around these pieces.

pub mod counterexample;
pub mod error;
pub mod fbm;
pub mod localtime;
pub mod mollify;
pub mod rng;
pub mod scaling;
pub mod sde;
pub mod sewing;
pub mod xlab;

pub use error::{Error, Result};
