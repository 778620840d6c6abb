//! Preconditioned conjugate gradients for symmetric positive semidefinite
//! operators given as closures.

use super::grid::dot;
use crate::error::{HomError, Result};

/// Stopping rule and null-space data for [`solve_spd`].
#[derive(Clone, Debug)]
pub struct CgOptions {
    /// Target for `‖b - Ax‖ / ‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
    /// Unit vector spanning the operator kernel. The right-hand side must be
    /// orthogonal to it and the solution is returned orthogonal to it.
    pub nullspace: Option<Vec<f64>>,
    /// Absolute residual below which the iteration also stops, for
    /// right-hand sides that are themselves at roundoff level.
    pub floor: f64,
}

impl CgOptions {
    pub const DEFAULT_TOL: f64 = 1e-10;

    /// Default cap of `50 n` iterations for a grid with `n` cells per axis.
    pub fn for_axis_len(n: usize) -> Self {
        Self { tol: Self::DEFAULT_TOL, max_iter: 50 * n, nullspace: None, floor: 0.0 }
    }

    pub fn tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn max_iter(mut self, m: usize) -> Self {
        self.max_iter = m;
        self
    }

    pub fn floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }

    pub fn nullspace(mut self, z: Vec<f64>) -> Self {
        let n = dot(&z, &z).sqrt();
        self.nullspace = Some(z.into_iter().map(|v| v / n).collect());
        self
    }

    /// Kernel spanned by the constants on `n` unknowns.
    pub fn constant_nullspace(self, n: usize) -> Self {
        self.nullspace(vec![1.0; n])
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub rel_residual: f64,
}

fn project_out(z: &[f64], x: &mut [f64]) {
    let c = dot(z, x);
    for (xi, zi) in x.iter_mut().zip(z) {
        *xi -= c * zi;
    }
}

/// Relative size of the rhs component along the kernel beyond which the
/// system is declared inconsistent.
const RANGE_TOL: f64 = 1e-9;

/// Solves `A x = b` by preconditioned CG, starting from `x0` (or zero).
///
/// `precond`, when given, must apply a symmetric positive definite
/// approximation of `A⁻¹`.
pub fn solve_spd(
    apply: &mut dyn FnMut(&[f64], &mut [f64]),
    mut precond: Option<&mut dyn FnMut(&[f64], &mut [f64])>,
    rhs: &[f64],
    x0: Option<Vec<f64>>,
    opts: &CgOptions,
) -> Result<(Vec<f64>, CgStats)> {
    let n = rhs.len();
    let mut b = rhs.to_vec();
    if let Some(z) = &opts.nullspace {
        let proj = dot(z, &b);
        let norm = dot(&b, &b).sqrt();
        if proj.abs() > RANGE_TOL * norm.max(f64::MIN_POSITIVE) {
            return Err(HomError::Range { projection: proj, norm });
        }
        project_out(z, &mut b);
    }
    let b_norm = dot(&b, &b).sqrt();
    let mut x = x0.unwrap_or_else(|| vec![0.0; n]);
    if b_norm == 0.0 {
        return Ok((vec![0.0; n], CgStats::default()));
    }
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    if let Some(z) = &opts.nullspace {
        project_out(z, &mut r);
    }
    let mut zv = vec![0.0; n];
    let mut precondition = |r: &[f64], out: &mut [f64]| {
        match precond.as_mut() {
            Some(m) => m(r, out),
            None => out.copy_from_slice(r),
        }
        if let Some(z) = &opts.nullspace {
            project_out(z, out);
        }
    };
    precondition(&r, &mut zv);
    let mut p = zv.clone();
    let mut rz = dot(&r, &zv);
    let mut res = dot(&r, &r).sqrt() / b_norm;
    let mut it = 0;
    while res > opts.tol && res * b_norm > opts.floor {
        if it >= opts.max_iter {
            return Err(HomError::NonConvergence { iterations: it, residual: res, target: opts.tol });
        }
        apply(&p, &mut ax);
        let pap = dot(&p, &ax);
        if !(pap > 0.0) {
            return Err(HomError::NonConvergence { iterations: it, residual: res, target: opts.tol });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ax[i];
        }
        it += 1;
        res = dot(&r, &r).sqrt() / b_norm;
        if res <= opts.tol {
            break;
        }
        precondition(&r, &mut zv);
        let rz_new = dot(&r, &zv);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = zv[i] + beta * p[i];
        }
    }
    if let Some(z) = &opts.nullspace {
        project_out(z, &mut x);
    }
    Ok((x, CgStats { iterations: it, rel_residual: res }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grid::Grid;
    use crate::numerics::stencil::lap_raw;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_converges_in_one_step() {
        let b = vec![1.0, -2.0, 3.0];
        let (x, st) = solve_spd(
            &mut |x, y| y.copy_from_slice(x),
            None,
            &b,
            None,
            &CgOptions::for_axis_len(3),
        )
        .unwrap();
        assert_eq!(st.iterations, 1);
        assert_eq!(x, b);
    }

    #[test]
    fn periodic_poisson_rejects_nonzero_mean() {
        let g = Grid::new(2, 8, 1.0).unwrap();
        let b = vec![1.0; g.len()];
        let opts = CgOptions::for_axis_len(8).constant_nullspace(g.len());
        let r = solve_spd(
            &mut |x, y| {
                lap_raw(&g, x, y);
                y.iter_mut().for_each(|v| *v = -*v);
            },
            None,
            &b,
            None,
            &opts,
        );
        assert!(matches!(r, Err(HomError::Range { .. })));
    }

    #[test]
    fn recovers_manufactured_solution() {
        let g = Grid::new(3, 16, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut q: Vec<f64> = (0..g.len()).map(|_| rng.gen::<f64>()).collect();
        let m = q.iter().sum::<f64>() / q.len() as f64;
        q.iter_mut().for_each(|v| *v -= m);
        let mut b = vec![0.0; g.len()];
        lap_raw(&g, &q, &mut b);
        b.iter_mut().for_each(|v| *v = -*v);
        let opts = CgOptions::for_axis_len(16).tol(1e-13).constant_nullspace(g.len());
        let (x, _) = solve_spd(
            &mut |x, y| {
                lap_raw(&g, x, y);
                y.iter_mut().for_each(|v| *v = -*v);
            },
            None,
            &b,
            None,
            &opts,
        )
        .unwrap();
        let err = x.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn reports_non_convergence() {
        let b: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let r = solve_spd(
            &mut |x, y| {
                for (i, (a, b)) in x.iter().zip(y.iter_mut()).enumerate() {
                    *b = (1.0 + i as f64) * a;
                }
            },
            None,
            &b,
            None,
            &CgOptions::for_axis_len(1).max_iter(3),
        );
        assert!(matches!(r, Err(HomError::NonConvergence { iterations: 3, .. })));
    }
}
