//! Discrete kernels shared by every solver: periodic grids and fields,
//! staggered difference operators, FFTs and Krylov iterations.

pub mod capacitance;
pub mod fft;
pub mod grid;
pub mod krylov;
pub mod saddle;
pub mod stencil;

pub use capacitance::{solve_stokes_periodic, CapacitanceOptions, PeriodicStokes};
pub use fft::{fft_forward, fft_inverse, FftPlan, SpectralField};
pub use grid::{Grid, ScalarField, StaggeredField};
pub use krylov::{solve_spd, CgOptions, CgStats};
pub use saddle::{solve_saddle, InnerPrecond, SaddleOptions, SaddleSolution, SaddleStats};
pub use stencil::{div, grad, lap, MacDomain};
