#![allow(clippy::needless_range_loop)]

//! Multiscale finite-element toolkit for hygro-thermo-mechanical coupling in
//! quasi-periodic composites: auxiliary cell problems on the unit cell,
//! homogenized coefficients, the coupled macroscopic solve, first- and
//! second-order multiscale reconstruction, a fine-scale reference solver, and
//! error metrics.

pub mod cache;
pub mod cell;
pub mod config;
pub mod error;
pub mod field;
pub mod fem;
pub mod homogenize;
pub mod macroscale;
pub mod pipeline;
pub mod material;
pub mod metrics;
pub mod mesh;
pub mod reconstruct;
pub mod reference;
pub mod tensor;
pub mod vtk;
pub mod weight;

pub use error::{Error, Result};
