//! Numerical laboratory for the hyperdissipative Navier-Stokes equations on the
//! three-torus: spectral fields, Littlewood-Paley packets, local energy
//! estimates, singular-set coverings and box-counting dimension.

// NaN-rejecting `!(x > 0.0)` guards are intentional
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod covering;
pub mod error;
pub mod fft;
pub mod field;
pub mod grid;
pub mod dimension;
pub mod estimates;
pub mod lp;
pub mod packets;
pub mod solver;
pub mod suites;

pub use error::{Error, Result};
pub use field::{PhysicalField, SpectralField, Spectrum};
pub use grid::Grid;
