//! Masked elliptic and Stokes solvers on a [`MacDomain`].
//!
//! The Stokes system `-Δv + grad p = g`, `div v = t` is solved by conjugate
//! gradients on the pressure Schur complement `S = D L⁻¹ Dᵀ`, with one inner
//! CG solve per velocity component and per outer step. The Schur
//! preconditioner is `I + κ(-Δ)⁻¹`, applied spectrally on the full box.

use rustfft::num_complex::Complex64;

use super::fft::FftPlan;
use super::grid::{dot, Grid};
use super::krylov::{solve_spd, CgOptions};
use super::stencil::{neg_lap_masked, MacDomain};
use crate::error::{HomError, Result};

/// Spectral inverse of the periodic `-Δ + shift` restricted to a mask.
#[derive(Clone, Debug)]
pub struct SpectralShiftedInverse {
    plan: FftPlan,
    inv_symbol: Vec<f64>,
}

/// Eigenvalue of the periodic 5/7-point `-Δ` at spectral index `idx`.
pub fn discrete_laplace_symbol(grid: &Grid, idx: usize) -> f64 {
    let c = grid.coords(idx);
    let n = grid.n() as f64;
    let h = grid.h();
    let mut s = 0.0;
    for &ca in c.iter().take(grid.dim()) {
        let k = 2.0 * (std::f64::consts::PI * ca as f64 / n).sin() / h;
        s += k * k;
    }
    s
}

impl SpectralShiftedInverse {
    pub fn new(grid: Grid, shift: f64) -> Result<Self> {
        let plan = FftPlan::new(grid)?;
        let inv_symbol = (0..grid.len())
            .map(|i| {
                let s = discrete_laplace_symbol(&grid, i) + shift;
                if s > 0.0 {
                    1.0 / s
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self { plan, inv_symbol })
    }

    /// `out = mask ⊙ F⁻¹[(λ + shift)⁻¹ F[r]]`.
    pub fn apply(&self, r: &[f64], mask: Option<&[bool]>, out: &mut [f64]) {
        let mut c: Vec<Complex64> = r.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.plan.forward(&mut c);
        for (z, s) in c.iter_mut().zip(&self.inv_symbol) {
            *z *= *s;
        }
        self.plan.inverse(&mut c);
        match mask {
            Some(m) => {
                for ((o, z), &act) in out.iter_mut().zip(&c).zip(m) {
                    *o = if act { z.re } else { 0.0 };
                }
            }
            None => {
                for (o, z) in out.iter_mut().zip(&c) {
                    *o = z.re;
                }
            }
        }
    }
}

/// Preconditioner for the masked scalar Laplacian solves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InnerPrecond {
    None,
    /// Spectral `(-Δ + shift)⁻¹`; `None` estimates the shift from the mask.
    Spectral(Option<f64>),
}

#[derive(Clone, Debug)]
pub struct SaddleOptions {
    pub tol: f64,
    pub inner_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Friction `κ` in the Schur preconditioner `I + κ(-Δ)⁻¹`; `None`
    /// estimates it from one masked scalar solve.
    pub schur_shift: Option<f64>,
    pub inner_precond: InnerPrecond,
}

impl SaddleOptions {
    pub fn for_grid(grid: &Grid) -> Self {
        Self {
            tol: CgOptions::DEFAULT_TOL,
            inner_tol: 1e-12,
            max_outer: 50 * grid.n(),
            max_inner: 50 * grid.n(),
            schur_shift: None,
            inner_precond: InnerPrecond::None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SaddleStats {
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// `‖div v - t‖ / ‖v‖` (grid-weighted norms).
    pub div_residual: f64,
    /// `‖-Δv + grad p - g‖ / ‖g‖` over active faces.
    pub momentum_residual: f64,
    pub schur_shift: f64,
}

#[derive(Clone, Debug)]
pub struct SaddleSolution {
    pub v: Vec<Vec<f64>>,
    pub p: Vec<f64>,
    pub stats: SaddleStats,
}

/// Masked scalar solver for `-Δ u = f` with `u = 0` off the mask.
pub struct MaskedLaplace<'a> {
    grid: Grid,
    active: &'a [bool],
    periodic: bool,
    precond: Option<SpectralShiftedInverse>,
    opts: CgOptions,
}

impl<'a> MaskedLaplace<'a> {
    pub fn new(grid: Grid, active: &'a [bool], tol: f64, max_iter: usize, precond: InnerPrecond) -> Result<Self> {
        let periodic = active.iter().all(|&a| a);
        let mut opts = CgOptions::for_axis_len(grid.n()).tol(tol).max_iter(max_iter);
        if periodic {
            opts = opts.constant_nullspace(grid.len());
        }
        let precond = match precond {
            InnerPrecond::None => None,
            InnerPrecond::Spectral(shift) => {
                let shift = match shift {
                    Some(s) => s,
                    None if periodic => 0.0,
                    None => estimate_friction(&grid, active, 1e-3, max_iter)?,
                };
                Some(SpectralShiftedInverse::new(grid, shift)?)
            }
        };
        Ok(Self { grid, active, periodic, precond, opts })
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        neg_lap_masked(&self.grid, self.active, x, out);
    }

    pub fn solve(&self, rhs: &[f64], x0: Option<Vec<f64>>) -> Result<(Vec<f64>, usize)> {
        let mut op = |x: &[f64], y: &mut [f64]| neg_lap_masked(&self.grid, self.active, x, y);
        let (x, st) = match &self.precond {
            Some(m) => {
                let mut pc = |r: &[f64], z: &mut [f64]| m.apply(r, Some(self.active), z);
                solve_spd(&mut op, Some(&mut pc), rhs, x0, &self.opts)?
            }
            None => solve_spd(&mut op, None, rhs, x0, &self.opts)?,
        };
        Ok((x, st.iterations))
    }
}

/// `1 / mean(u)` where `-Δu = 1` on the mask; a proxy for the zeroth-order
/// resistance that the holes add to the Laplacian.
pub fn estimate_friction(grid: &Grid, active: &[bool], tol: f64, max_iter: usize) -> Result<f64> {
    if active.iter().all(|&a| a) {
        return Ok(0.0);
    }
    let ones: Vec<f64> = active.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
    let opts = CgOptions::for_axis_len(grid.n()).tol(tol).max_iter(max_iter);
    let (u, _) = solve_spd(
        &mut |x, y| neg_lap_masked(grid, active, x, y),
        None,
        &ones,
        None,
        &opts,
    )?;
    let count = ones.iter().sum::<f64>();
    let total: f64 = u.iter().sum();
    Ok(if total > 0.0 { count / total } else { 0.0 })
}

/// Solves the masked Stokes system `-Δv + grad p = g`, `div v = t` on `dom`.
///
/// `g` must vanish on inactive faces and `t` (default zero) must vanish on
/// inactive cells and sum to zero. The pressure is returned with zero mean
/// over the active cells.
pub fn solve_saddle(dom: &MacDomain, g: &[Vec<f64>], div_target: Option<&[f64]>, opts: &SaddleOptions) -> Result<SaddleSolution> {
    let grid = *dom.grid();
    let d = grid.dim();
    let len = grid.len();
    if g.len() != d || g.iter().any(|c| c.len() != len) {
        return Err(HomError::GridMismatch("momentum source shape".into()));
    }
    let solvers: Vec<MaskedLaplace> = (0..d)
        .map(|a| MaskedLaplace::new(grid, &dom.face_active()[a], opts.inner_tol, opts.max_inner, opts.inner_precond))
        .collect::<Result<_>>()?;
    let mut inner_its = 0usize;

    let mut v: Vec<Vec<f64>> = Vec::with_capacity(d);
    for a in 0..d {
        let mut rhs = g[a].clone();
        zero_off(&mut rhs, &dom.face_active()[a]);
        let (x, it) = solvers[a].solve(&rhs, None)?;
        inner_its += it;
        v.push(x);
    }

    // Constraint residual r = t - D v.
    let mut dv = vec![0.0; len];
    dom.div(&v, &mut dv);
    let mut r: Vec<f64> = match div_target {
        Some(t) => t.iter().zip(&dv).map(|(t, x)| t - x).collect(),
        None => dv.iter().map(|x| -x).collect(),
    };
    dom.project_cell_mean(&mut r);

    let kappa = match opts.schur_shift {
        Some(k) => k,
        None => estimate_friction(&grid, &dom.face_active()[0], 1e-3, opts.max_inner)?,
    };
    let pinv = if kappa > 0.0 { Some(SpectralShiftedInverse::new(grid, 0.0)?) } else { None };
    let precond = |r: &[f64], z: &mut [f64]| {
        match &pinv {
            Some(m) => {
                m.apply(r, Some(dom.cell_active()), z);
                for (zi, ri) in z.iter_mut().zip(r) {
                    *zi = ri + kappa * *zi;
                }
            }
            None => z.copy_from_slice(r),
        }
        dom.project_cell_mean(z);
    };

    let cell_w = grid.cell_volume();
    let norm_h = |x: &[f64]| (dot(x, x) * cell_w).sqrt();
    let vel_norm = |v: &[Vec<f64>]| (v.iter().map(|c| dot(c, c)).sum::<f64>() * cell_w).sqrt();

    let mut p = vec![0.0; len];
    let r0 = norm_h(&r);
    let mut z = vec![0.0; len];
    precond(&r, &mut z);
    let mut dir = z.clone();
    let mut rz = dot(&r, &z);
    let mut outer = 0usize;
    let mut gd = vec![vec![0.0; len]; d];
    let mut sd = vec![0.0; len];
    let converged = |rn: f64, v: &[Vec<f64>]| rn <= opts.tol * r0 || rn <= opts.tol * vel_norm(v);
    let mut rn = r0;
    while r0 > 0.0 && !converged(rn, &v) {
        if outer >= opts.max_outer {
            return Err(HomError::NonConvergence {
                iterations: outer,
                residual: rn / r0,
                target: opts.tol,
            });
        }
        dom.grad(&dir, &mut gd);
        let mut w = Vec::with_capacity(d);
        for a in 0..d {
            let (x, it) = solvers[a].solve(&gd[a], None)?;
            inner_its += it;
            w.push(x);
        }
        dom.div(&w, &mut sd);
        sd.iter_mut().for_each(|x| *x = -*x);
        let dsd = dot(&dir, &sd);
        if !(dsd > 0.0) {
            break;
        }
        let alpha = rz / dsd;
        for i in 0..len {
            p[i] += alpha * dir[i];
            r[i] -= alpha * sd[i];
        }
        for a in 0..d {
            for (vi, wi) in v[a].iter_mut().zip(&w[a]) {
                *vi -= alpha * wi;
            }
        }
        outer += 1;
        rn = norm_h(&r);
        if converged(rn, &v) {
            break;
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..len {
            dir[i] = z[i] + beta * dir[i];
        }
    }
    dom.project_cell_mean(&mut p);
    for a in 0..d {
        zero_off(&mut v[a], &dom.face_active()[a]);
    }

    let stats = SaddleStats {
        outer_iterations: outer,
        inner_iterations: inner_its,
        schur_shift: kappa,
        ..stokes_residuals(dom, &v, &p, g, div_target)
    };
    Ok(SaddleSolution { v, p, stats })
}

/// Divergence and momentum residuals of a masked Stokes solution, with
/// `div_residual = ‖div v - t‖ / ‖v‖`.
pub fn stokes_residuals(dom: &MacDomain, v: &[Vec<f64>], p: &[f64], g: &[Vec<f64>], t: Option<&[f64]>) -> SaddleStats {
    let grid = dom.grid();
    let d = grid.dim();
    let len = grid.len();
    let mut dv = vec![0.0; len];
    dom.div(v, &mut dv);
    if let Some(t) = t {
        for (x, ti) in dv.iter_mut().zip(t) {
            *x -= ti;
        }
    }
    let vn = v.iter().map(|c| dot(c, c)).sum::<f64>().sqrt();
    let dn = dot(&dv, &dv).sqrt();
    let div_residual = if vn > 0.0 { dn / vn } else { dn };
    let mut gp = vec![vec![0.0; len]; d];
    dom.grad(p, &mut gp);
    let mut lv = vec![0.0; len];
    let (mut num, mut den) = (0.0, 0.0);
    for a in 0..d {
        dom.neg_lap_faces(a, &v[a], &mut lv);
        for i in 0..len {
            if dom.face_active()[a][i] {
                let e = lv[i] + gp[a][i] - g[a][i];
                num += e * e;
                den += g[a][i] * g[a][i];
            }
        }
    }
    let momentum_residual = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
    SaddleStats { div_residual, momentum_residual, ..Default::default() }
}

fn zero_off(x: &mut [f64], active: &[bool]) {
    for (xi, &a) in x.iter_mut().zip(active) {
        if !a {
            *xi = 0.0;
        }
    }
}
