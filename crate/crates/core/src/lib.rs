//! Numerical homogenization of Poisson and Stokes problems in periodically
//! perforated domains.
//!
//! The crate computes unit-cell correctors and effective tensors, solves the
//! perforated problems directly on a periodic torus, and compares them with
//! the Darcy, Brinkman and Stokes limit systems.

pub mod cell;
pub mod config;
pub mod converge;
pub mod error;
pub mod io;
pub mod numerics;
pub mod pressure;

pub use error::{HomError, Result};
pub mod lattice;
pub mod macro_solver;
pub mod micro;
pub mod source;
pub mod stats;
