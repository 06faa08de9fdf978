#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

//! Linear Rayleigh-Taylor stability of two stratified compressible viscous
//! fluids in a slab, by a modified variational method.

pub mod assembly;
pub mod cli;
pub mod config;
pub mod dispersion;
pub mod error;
pub mod evolve;
pub mod modes;
pub mod physics;
pub mod spectral;

pub use error::{Error, Result};
