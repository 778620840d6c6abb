//! Multi-dimensional periodic FFTs on [`Grid`]s.
//!
//! The forward transform is unnormalised, the inverse carries `1/N^d`, so
//! `Σ|u|² = N^{-d} Σ|û|²`.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::grid::{Grid, ScalarField};
use crate::error::{HomError, Result};

/// Cached 1-D plans for one grid size.
#[derive(Clone)]
pub struct FftPlan {
    grid: Grid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftPlan").field("grid", &self.grid).finish()
    }
}

fn is_smooth(mut n: usize) -> bool {
    for p in [2, 3, 5, 7] {
        while n % p == 0 {
            n /= p;
        }
    }
    n == 1
}

impl FftPlan {
    pub fn new(grid: Grid) -> Result<Self> {
        if !is_smooth(grid.n()) {
            return Err(HomError::FftSize(grid.n()));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            grid,
            fwd: planner.plan_fft_forward(grid.n()),
            inv: planner.plan_fft_inverse(grid.n()),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        const BATCH: usize = 32;
        let n = self.grid.n();
        let strides = self.grid.strides();
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        let mut buf = vec![Complex64::default(); n * BATCH];
        for axis in 0..self.grid.dim() {
            let s = strides[axis];
            if s == 1 {
                plan.process_with_scratch(data, &mut scratch);
                continue;
            }
            // Gather blocks of neighbouring lines so that reads stay contiguous.
            let outer = data.len() / (n * s);
            for o in 0..outer {
                let base = o * n * s;
                let mut j0 = 0;
                while j0 < s {
                    let b = BATCH.min(s - j0);
                    for k in 0..n {
                        let row = &data[base + k * s + j0..base + k * s + j0 + b];
                        for (j, v) in row.iter().enumerate() {
                            buf[j * n + k] = *v;
                        }
                    }
                    plan.process_with_scratch(&mut buf[..b * n], &mut scratch);
                    for k in 0..n {
                        let row = &mut data[base + k * s + j0..base + k * s + j0 + b];
                        for (j, v) in row.iter_mut().enumerate() {
                            *v = buf[j * n + k];
                        }
                    }
                    j0 += b;
                }
            }
        }
    }

    /// In-place unnormalised forward transform.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.fwd);
    }

    /// In-place inverse transform including the `1/N^d` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inv);
        let s = 1.0 / self.grid.len() as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn forward_real(&self, u: &[f64]) -> Vec<Complex64> {
        let mut c: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward(&mut c);
        c
    }

    /// Inverse transform keeping the real part.
    pub fn inverse_real(&self, mut c: Vec<Complex64>) -> Vec<f64> {
        self.inverse(&mut c);
        c.into_iter().map(|z| z.re).collect()
    }

    /// Integer frequency vector of spectral index `idx`.
    pub fn frequency(&self, idx: usize) -> [i64; 3] {
        let c = self.grid.coords(idx);
        let mut xi = [0i64; 3];
        for a in 0..self.grid.dim() {
            xi[a] = self.grid.frequency(c[a]);
        }
        xi
    }

    /// Angular wave vector `2πξ/L`.
    pub fn wavevector(&self, idx: usize) -> [f64; 3] {
        let xi = self.frequency(idx);
        let s = 2.0 * std::f64::consts::PI / self.grid.side();
        [xi[0] as f64 * s, xi[1] as f64 * s, xi[2] as f64 * s]
    }
}

/// Fourier coefficients of a real cell field, indexed like the grid.
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: Grid,
    pub coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn new(grid: Grid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(HomError::GridMismatch("spectral coefficient count".into()));
        }
        Ok(Self { grid, coeffs })
    }

    /// `‖u‖²_{L²}` recovered from the coefficients.
    pub fn l2_norm_sq(&self) -> f64 {
        let n = self.grid.len() as f64;
        self.coeffs.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_volume() / n
    }

    /// Largest deviation from the Hermitian symmetry `û(-ξ) = conj(û(ξ))`.
    pub fn hermitian_defect(&self) -> f64 {
        let g = self.grid;
        let n = g.n();
        let mut worst = 0.0_f64;
        for i in 0..g.len() {
            let c = g.coords(i);
            let mut m = [0usize; 3];
            for a in 0..g.dim() {
                m[a] = (n - c[a]) % n;
            }
            let j = g.index(m);
            worst = worst.max((self.coeffs[i] - self.coeffs[j].conj()).norm());
        }
        worst
    }
}

pub fn fft_forward(u: &ScalarField) -> Result<SpectralField> {
    let plan = FftPlan::new(*u.grid())?;
    Ok(SpectralField { grid: *u.grid(), coeffs: plan.forward_real(&u.data) })
}

pub fn fft_inverse(s: &SpectralField) -> Result<ScalarField> {
    let plan = FftPlan::new(s.grid)?;
    ScalarField::from_vec(s.grid, plan.inverse_real(s.coeffs.clone()))
}
